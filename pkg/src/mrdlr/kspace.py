"""Centered unitary Fourier transforms and k-space primitives.

Grid convention: spatial axes 0, 1, 2 are the frequency, phase and slice
encoding directions. A trailing fourth axis, when present, indexes coils.
The DC sample of a centered k-space axis of length ``n`` sits at ``n // 2``.
Transforms use ``norm="ortho"`` so that white noise keeps its per-sample
standard deviation between domains.
"""

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import ValidationError

SPATIAL_AXES = (0, 1, 2)


class Axis(IntEnum):
    FREQUENCY = 0
    PHASE = 1
    SLICE = 2

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise ValidationError(f"unknown axis {value!r}") from None
        try:
            return cls(int(value))
        except ValueError:
            raise ValidationError(f"unknown axis {value!r}") from None

    @property
    def label(self):
        return self.name.lower()


@dataclass
class ImageVolume:
    """Complex (or real) image grid ``[nx, ny, nz]``."""

    data: np.ndarray
    pixel_spacing: tuple = (1.0, 1.0, 1.0)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise ValidationError(f"image volume must be 3D, got shape {self.data.shape}")
        check_finite(self.data)

    @property
    def dims(self):
        return tuple(self.data.shape)


@dataclass
class KSpaceVolume:
    """Centered multi-coil k-space ``[nx, ny, nz, ncoils]``."""

    data: np.ndarray
    is_centered: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.ndim != 4 or min(self.data.shape) < 1:
            raise ValidationError(f"k-space volume must be 4D, got shape {self.data.shape}")
        if not self.is_centered:
            raise ValidationError("stored k-space must be centered")
        check_finite(self.data)

    @property
    def dims(self):
        return tuple(self.data.shape[:3])

    @property
    def ncoils(self):
        return self.data.shape[3]


@dataclass(frozen=True)
class WindowSpec:
    kind: str = "tukey"
    alpha: float = 0.0
    axes: tuple = (Axis.FREQUENCY, Axis.PHASE, Axis.SLICE)

    def __post_init__(self):
        if self.kind != "tukey":
            raise ValidationError(f"unsupported window kind {self.kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"window alpha must be in [0, 1], got {self.alpha}")
        object.__setattr__(self, "axes", tuple(Axis.parse(a) for a in self.axes))

    def to_dict(self):
        return {"kind": self.kind, "alpha": self.alpha, "axes": [a.label for a in self.axes]}

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d.get("kind", "tukey"), alpha=float(d.get("alpha", 0.0)),
                   axes=tuple(d.get("axes", ("frequency", "phase", "slice"))))


def check_finite(x):
    """Raise ValidationError naming the first non-finite entry of ``x``."""
    x = np.asarray(x)
    if np.iscomplexobj(x) or np.issubdtype(x.dtype, np.floating):
        bad = ~np.isfinite(x)
        if bad.any():
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise ValidationError(f"non-finite value at index {idx} (axis order {tuple(range(x.ndim))})")


def fft_centered(x, axes=SPATIAL_AXES):
    """Centered unitary forward DFT over ``axes`` (image -> k-space)."""
    x = np.asarray(x)
    check_finite(x)
    axes = tuple(a for a in axes if a < x.ndim)
    return np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(x, axes=axes), axes=axes, norm="ortho"), axes=axes)


def ifft_centered(k, axes=SPATIAL_AXES):
    """Centered unitary inverse DFT over ``axes`` (k-space -> image)."""
    k = np.asarray(k)
    check_finite(k)
    axes = tuple(a for a in axes if a < k.ndim)
    return np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(k, axes=axes), axes=axes, norm="ortho"), axes=axes)


def tukey_profile(n, alpha):
    """Tukey taper of length ``n`` centered on the DC index ``n // 2``.

    The taper is a function of distance from DC normalized by ``n / 2``, so
    the DC sample is always exactly 1 and index 0 of an even-length axis is
    exactly 0 when ``alpha == 1``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"window alpha must be in [0, 1], got {alpha}")
    w = np.ones(n)
    if alpha == 0.0 or n == 1:
        return w
    d = np.abs(np.arange(n) - n // 2) / (n / 2.0)
    taper = d > 1.0 - alpha
    w[taper] = 0.5 * (1.0 + np.cos(np.pi * (d[taper] - (1.0 - alpha)) / alpha))
    return w


def window_weights(dims, spec):
    """Separable window over the three spatial axes (ones elsewhere)."""
    w = np.ones(tuple(dims[:3]))
    for ax in spec.axes:
        shape = [1, 1, 1]
        shape[int(ax)] = dims[int(ax)]
        w = w * tukey_profile(dims[int(ax)], spec.alpha).reshape(shape)
    return w


def apply_window(ksp, spec):
    """Multiply centered k-space by a separable Tukey window."""
    if spec.alpha == 0.0:
        return np.array(ksp, copy=True)
    k = np.asarray(ksp)
    w = window_weights(k.shape, spec)
    if k.ndim == 4:
        w = w[..., None]
    return k * w


def _centered_slices(n_from, n_to):
    """Source/destination slices aligning DC index ``n // 2`` of both axes."""
    off = n_to // 2 - n_from // 2
    if off >= 0:
        src = slice(0, min(n_from, n_to - off))
        dst = slice(off, off + (src.stop - src.start))
    else:
        src = slice(-off, -off + min(n_to, n_from + off))
        dst = slice(0, src.stop - src.start)
    return src, dst


def zero_pad_or_crop(ksp, target_dims):
    """Center-aligned zero padding (grow) or cropping (shrink) of k-space.

    Works on arrays with three spatial axes and an optional trailing coil axis.
    The DC sample stays on the DC index of the new grid.
    """
    k = np.asarray(ksp)
    target_dims = tuple(int(t) for t in target_dims)
    if len(target_dims) != 3 or min(target_dims) < 1:
        raise ValidationError(f"target dims must be three positive integers, got {target_dims}")
    out = np.zeros(target_dims + k.shape[3:], dtype=k.dtype)
    src, dst = [], []
    for n_from, n_to in zip(k.shape[:3], target_dims):
        s, d = _centered_slices(n_from, n_to)
        src.append(s)
        dst.append(d)
    out[tuple(dst)] = k[tuple(src)]
    return out
