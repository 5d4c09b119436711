"""Image-quality instruments: ROI statistics, relative noise, MIP, edge sharpness."""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import NumericError, ValidationError


@dataclass(frozen=True)
class CircularROI:
    """Circle in one slice of a volume; ``center`` is (row, col) in voxels."""

    slice_index: int
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValidationError("ROI radius must be > 0")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def mask(self, shape):
        rows, cols = shape
        r0, c0 = self.center
        if (r0 - self.radius < -0.5 or c0 - self.radius < -0.5
                or r0 + self.radius > rows - 0.5 or c0 + self.radius > cols - 0.5):
            raise ValidationError(f"ROI {self} extends outside a {rows}x{cols} image")
        rr, cc = np.ogrid[:rows, :cols]
        m = (rr - r0) ** 2 + (cc - c0) ** 2 <= self.radius ** 2
        if m.sum() < 10:
            raise ValidationError("ROI must cover at least 10 voxels")
        return m


@dataclass(frozen=True)
class LineProfile:
    start: tuple
    end: tuple
    samples: int = 64

    def __post_init__(self):
        if self.samples < 8:
            raise ValidationError("line profiles need at least 8 samples")
        if len(self.start) != len(self.end):
            raise ValidationError("profile endpoints must have equal dimension")
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "end", tuple(float(v) for v in self.end))

    def coords(self, shape):
        if len(shape) != len(self.start):
            raise ValidationError("profile dimension does not match the image")
        for p in (self.start, self.end):
            if any(v < 0 or v > n - 1 for v, n in zip(p, shape)):
                raise ValidationError(f"profile endpoint {p} is outside the image {shape}")
        t = np.linspace(0.0, 1.0, self.samples)
        a, b = np.array(self.start), np.array(self.end)
        return a[:, None] + (b - a)[:, None] * t[None, :]


def _plane(img, slice_index):
    img = np.asarray(img, dtype=float)
    if img.ndim == 2:
        return img
    if img.ndim == 3:
        if not 0 <= slice_index < img.shape[2]:
            raise ValidationError(f"slice index {slice_index} out of range")
        return img[:, :, slice_index]
    raise ValidationError("expected a 2D image or 3D volume")


def roi_stats(img, roi):
    """Mean and unbiased std of voxels whose centres fall inside the ROI."""
    plane = _plane(img, roi.slice_index)
    vals = plane[roi.mask(plane.shape)]
    return float(vals.mean()), float(vals.std(ddof=1))


def relative_noise(orig, proc, roi):
    """``sigma_orig / sigma_proc``: how many times quieter the processed image is."""
    if np.shape(orig) != np.shape(proc):
        raise ValidationError("images must share geometry")
    _, s_orig = roi_stats(orig, roi)
    _, s_proc = roi_stats(proc, roi)
    if s_proc == 0:
        raise NumericError("processed image has zero noise in the ROI; ratio undefined")
    return s_orig / s_proc


def mip(volume, axis=2):
    vol = np.asarray(volume)
    if np.iscomplexobj(vol):
        raise ValidationError("mip expects a real volume")
    return vol.max(axis=axis)


def sample_profile(img, profile):
    img = np.asarray(img, dtype=float)
    return map_coordinates(img, profile.coords(img.shape), order=1, mode="nearest")


def edge_sharpness(img_a, img_b, profile):
    """``max|grad B| / max|grad A|`` along the profile (A original, B processed)."""
    if np.shape(img_a) != np.shape(img_b):
        raise ValidationError("images must share geometry")
    ga = np.abs(np.diff(sample_profile(img_a, profile))).max()
    gb = np.abs(np.diff(sample_profile(img_b, profile))).max()
    if ga == 0:
        raise NumericError("reference profile has zero gradient")
    return float(gb / ga)
