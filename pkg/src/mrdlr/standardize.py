"""Slice standardization before the network and its partial inverse.

Steps: transpose so phase encoding runs along each row (axis 1), crop
zero border bands, Lanczos-resample so the column count hits a target, and
map the robust 1st/99th percentiles onto [0, 1]. ``destandardize`` undoes
all of it except the resampling, so its output stays on the resampled grid.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ValidationError

LANCZOS_A = 3
PCT_LO, PCT_HI = 1.0, 99.0


@dataclass(frozen=True)
class SliceMeta:
    phase_encode_direction: str = "row"
    fov_fraction: tuple = (1.0, 1.0)
    pulse_dim: str = "2D"

    def __post_init__(self):
        if self.phase_encode_direction not in ("row", "column"):
            raise ValidationError("phase_encode_direction must be 'row' or 'column'")
        if self.pulse_dim not in ("2D", "3D"):
            raise ValidationError("pulse_dim must be '2D' or '3D'")
        object.__setattr__(self, "fov_fraction", tuple(float(f) for f in self.fov_fraction))

    def to_dict(self):
        return {"phase_encode_direction": self.phase_encode_direction,
                "fov_fraction": list(self.fov_fraction), "pulse_dim": self.pulse_dim}

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict) or "phase_encode_direction" not in d:
            raise ValidationError("slice_meta needs a phase_encode_direction")
        return cls(**d)


@dataclass(frozen=True)
class StandardizeRecord:
    transposed: bool
    input_shape: tuple      # after transpose, before crop
    crop: tuple             # (row0, row1, col0, col1)
    crop_threshold: float
    interp_scale: float
    output_shape: tuple
    norm_offset: float
    norm_scale: float

    def to_dict(self):
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d):
        return cls(transposed=bool(d["transposed"]), input_shape=tuple(d["input_shape"]),
                   crop=tuple(d["crop"]), crop_threshold=float(d["crop_threshold"]),
                   interp_scale=float(d["interp_scale"]), output_shape=tuple(d["output_shape"]),
                   norm_offset=float(d["norm_offset"]), norm_scale=float(d["norm_scale"]))


def lanczos_kernel(x, a=LANCZOS_A):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < a, np.sinc(x) * np.sinc(x / a), 0.0)


def lanczos_matrix(n_in, n_out, a=LANCZOS_A):
    """Resampling weights ``[n_out, n_in]`` with clamped edges and unit row sums."""
    scale = n_out / n_in
    stretch = min(scale, 1.0)
    support = a / stretch
    centers = (np.arange(n_out) + 0.5) / scale - 0.5
    lo = np.floor(centers - support).astype(int) + 1
    taps = int(np.ceil(2 * support)) + 1
    idx = lo[:, None] + np.arange(taps)[None, :]
    w = lanczos_kernel((idx - centers[:, None]) * stretch, a)
    W = np.zeros((n_out, n_in))
    np.add.at(W, (np.repeat(np.arange(n_out), taps), np.clip(idx, 0, n_in - 1).ravel()), w.ravel())
    return W / W.sum(axis=1, keepdims=True)


def lanczos_resize(img, target_cols, target_rows=None):
    """Separable Lanczos-3 resize; rows follow the column scale unless given."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValidationError("lanczos_resize expects a 2D image")
    if target_cols < 2:
        raise ValidationError("target_cols must be >= 2")
    rows, cols = img.shape
    if target_rows is None:
        target_rows = max(1, int(round(rows * target_cols / cols)))
    out = img
    if target_cols != cols:
        out = out @ lanczos_matrix(cols, target_cols).T
    if target_rows != rows:
        out = lanczos_matrix(rows, target_rows) @ out
    return np.array(out, copy=True)


def _zero_bands(img, threshold):
    occupied = np.abs(img) > threshold
    rows = np.flatnonzero(occupied.any(axis=1))
    cols = np.flatnonzero(occupied.any(axis=0))
    if rows.size == 0:
        return 0, img.shape[0], 0, img.shape[1]
    return int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1


def plan_standardize(img, meta, target_cols, crop_threshold=0.0):
    """Return the standardization record and the resampled, unnormalized slice."""
    if target_cols < 32:
        raise ValidationError("target_cols must be >= 32")
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValidationError("standardize expects a 2D slice")
    transposed = meta.phase_encode_direction == "column"
    work = img.T if transposed else img
    r0, r1, c0, c1 = _zero_bands(work, crop_threshold)
    cropped = work[r0:r1, c0:c1]
    scale = target_cols / cropped.shape[1]
    resized = lanczos_resize(cropped, target_cols)
    lo, hi = np.percentile(resized, [PCT_LO, PCT_HI])
    if not hi > lo:
        raise ValidationError("slice has no dynamic range; normalization is undefined")
    rec = StandardizeRecord(transposed, tuple(work.shape), (r0, r1, c0, c1), float(crop_threshold),
                            float(scale), tuple(resized.shape), float(lo), float(hi - lo))
    return rec, resized


def standardize(img, meta, target_cols=128, crop_threshold=0.0):
    """Standardize one slice; returns ``(image, record)``."""
    rec, resized = plan_standardize(img, meta, target_cols, crop_threshold)
    return (resized - rec.norm_offset) / rec.norm_scale, rec


def apply_standardize(img, rec):
    """Apply an existing record (e.g. the input's) to another slice of equal geometry."""
    img = np.asarray(img, dtype=float)
    work = img.T if rec.transposed else img
    if tuple(work.shape) != tuple(rec.input_shape):
        raise ValidationError(f"slice shape {work.shape} does not match record {rec.input_shape}")
    r0, r1, c0, c1 = rec.crop
    resized = lanczos_resize(work[r0:r1, c0:c1], rec.output_shape[1], rec.output_shape[0])
    return (resized - rec.norm_offset) / rec.norm_scale


def destandardize(out, rec):
    """Undo normalization, re-pad cropped bands and transpose back (no resampling)."""
    out = np.asarray(out, dtype=float)
    if tuple(out.shape) != tuple(rec.output_shape):
        raise ValidationError(f"output shape {out.shape} does not match record {rec.output_shape}")
    img = out * rec.norm_scale + rec.norm_offset
    r0, r1, c0, c1 = rec.crop
    rows, cols = rec.input_shape
    s = rec.interp_scale
    pads = ((int(round(r0 * s)), int(round((rows - r1) * s))),
            (int(round(c0 * s)), int(round((cols - c1) * s))))
    if any(p for pair in pads for p in pair):
        img = np.pad(img, pads, mode="constant", constant_values=0.0)
    return img.T if rec.transposed else img
