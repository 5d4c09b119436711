"""Volume inference: slice stacking, standardization and user-set NRF."""

import numpy as np

from ..context import NRF_SLOT, CONTEXT_LEN
from ..errors import ValidationError
from ..standardize import SliceMeta, apply_standardize, destandardize, standardize

STACK_3D = 7


def stack_indices(k, n_slices, width):
    """Slice indices centred on ``k`` with edge replication at the volume ends."""
    half = width // 2
    return np.clip(np.arange(k - half, k + half + 1), 0, n_slices - 1)


def standardize_stack(volume, k, meta, width, target_cols=None, crop_threshold=0.0):
    """Standardize slice ``k`` and its neighbours with the centre slice's record.

    Returns ``(stack [width, H, W], record)``.
    """
    vol = np.asarray(volume, dtype=float)
    cols = target_cols or vol.shape[1 if meta.phase_encode_direction == "row" else 0]
    centre, rec = standardize(vol[:, :, k], meta, cols, crop_threshold)
    idx = stack_indices(k, vol.shape[2], width)
    planes = [centre if j == k else apply_standardize(vol[:, :, j], rec) for j in idx]
    return np.stack(planes), rec


def _pad_to_multiple(x, m):
    h, w = x.shape[-2:]
    ph, pw = (-h) % m, (-w) % m
    if ph or pw:
        x = np.pad(x, [(0, 0)] * (x.ndim - 2) + [(0, ph), (0, pw)], mode="edge")
    return x, (h, w)


def infer_volume(net, volume, meta, ctx_base, user_nrf, target_cols=None, crop_threshold=0.0):
    """Denoise a real ``[rows, cols, slices]`` volume slice by slice.

    ``ctx_base`` is a 16-slot context vector whose NRF slot is replaced by
    ``user_nrf``. Slices without dynamic range pass through unchanged. The
    result lives on the standardized (interpolated) in-plane grid.
    """
    if not isinstance(meta, SliceMeta):
        raise ValidationError("infer_volume needs a SliceMeta")
    if not (np.isfinite(user_nrf) and user_nrf > 0):
        raise ValidationError(f"user_nrf must be > 0, got {user_nrf}")
    vol = np.asarray(volume)
    if np.iscomplexobj(vol) or vol.ndim != 3:
        raise ValidationError("infer_volume expects a real 3D volume")
    ctx = np.array(ctx_base, dtype=float, copy=True)
    if ctx.shape != (CONTEXT_LEN,):
        raise ValidationError(f"context vector must have length {CONTEXT_LEN}")
    ctx[NRF_SLOT] = user_nrf
    width = net.spec.in_channels
    out_slices = []
    for k in range(vol.shape[2]):
        try:
            stack, rec = standardize_stack(vol, k, meta, width, target_cols, crop_threshold)
        except ValidationError as exc:
            if "dynamic range" not in str(exc):
                raise
            out_slices.append(None)
            continue
        x, (h, w) = _pad_to_multiple(stack, net.spec.multiple)
        y = net.forward(x[None], ctx[None], keep_cache=False)[0, 0, :h, :w]
        out_slices.append(destandardize(y.astype(float), rec))
    shapes = {s.shape for s in out_slices if s is not None}
    if len(shapes) > 1:
        raise ValidationError(f"slices standardized to different shapes {sorted(shapes)}")
    shape = shapes.pop() if shapes else vol.shape[:2]
    out = np.empty(shape + (vol.shape[2],))
    for k, s in enumerate(out_slices):
        if s is None:
            if shape != vol.shape[:2]:
                raise ValidationError("constant slice cannot be passed through a resampled volume")
            s = vol[:, :, k]
        out[:, :, k] = s
    return out
