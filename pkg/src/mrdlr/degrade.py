"""Raw k-space degradation: undersampling masks and noise addition.

Masks are boolean bitmaps over the spatial k-space grid ``[nx, ny, nz]`` and
broadcast over coils. Uniform and random undersampling act on phase/slice
lines only; the frequency (readout) axis admits only k_max and partial
Fourier truncation. Degradation applies the composed mask first and then
adds noise to the retained samples.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError
from .kspace import Axis
from .rng import complex_normal, make_rng

PF_MIN = 9.0 / 16.0
MASK_KINDS = ("full", "uniform", "random", "kmax", "elliptical", "partial_fourier")


@dataclass(frozen=True)
class SamplingMask:
    bitmap: np.ndarray
    kind_trace: tuple = ()

    def __post_init__(self):
        bm = np.asarray(self.bitmap, dtype=bool)
        if bm.ndim != 3:
            raise ValidationError(f"mask bitmap must be 3D, got shape {bm.shape}")
        if not bm.any():
            raise ValidationError("mask retains zero samples")
        object.__setattr__(self, "bitmap", bm)
        object.__setattr__(self, "kind_trace", tuple(self.kind_trace))

    @property
    def dims(self):
        return self.bitmap.shape

    @property
    def retained_fraction(self):
        return float(self.bitmap.mean())

    def has(self, kind):
        return kind in self.kind_trace

    def __eq__(self, other):
        # trace order records provenance only; equality is on content
        return (isinstance(other, SamplingMask) and set(self.kind_trace) == set(other.kind_trace)
                and np.array_equal(self.bitmap, other.bitmap))

    def __hash__(self):
        return hash((frozenset(self.kind_trace), self.bitmap.tobytes()))


@dataclass(frozen=True)
class UniformSpec:
    axis: Axis = Axis.PHASE
    R: int = 2
    acs_lines: int = 0

    def __post_init__(self):
        object.__setattr__(self, "axis", Axis.parse(self.axis))
        if self.axis == Axis.FREQUENCY:
            raise ValidationError("uniform undersampling is not allowed along the frequency axis")
        if int(self.R) < 1:
            raise ValidationError(f"uniform R must be >= 1, got {self.R}")
        if self.acs_lines < 0:
            raise ValidationError("acs_lines must be >= 0")

    def to_dict(self):
        return {"axis": self.axis.label, "R": int(self.R), "acs_lines": int(self.acs_lines)}


@dataclass(frozen=True)
class RandomSpec:
    accel: float = 2.0
    density_power: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if self.accel < 1.0:
            raise ValidationError(f"random acceleration must be >= 1, got {self.accel}")
        if self.density_power < 0:
            raise ValidationError("density_power must be >= 0")

    def to_dict(self):
        return {"accel": float(self.accel), "density_power": float(self.density_power),
                "seed": int(self.seed)}


def _check_fractions(values, lo, name, lo_inclusive):
    vals = tuple(float(v) for v in values)
    if len(vals) != 3:
        raise ValidationError(f"{name} needs one value per axis")
    for v in vals:
        ok = (v >= lo if lo_inclusive else v > lo) and v <= 1.0
        if not ok:
            bound = "[" if lo_inclusive else "("
            raise ValidationError(f"{name} {v} outside {bound}{lo:g}, 1]")
    return vals


@dataclass(frozen=True)
class DegradationPlan:
    noise_add_ratio: float = 0.0
    uniform: Optional[UniformSpec] = None
    random: Optional[RandomSpec] = None
    kmax_fraction: tuple = (1.0, 1.0, 1.0)
    elliptical: bool = False
    pf_fraction: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if not self.noise_add_ratio >= 0:
            raise ValidationError("noise_add_ratio must be >= 0")
        if isinstance(self.uniform, dict):
            object.__setattr__(self, "uniform", UniformSpec(**self.uniform))
        if isinstance(self.random, dict):
            object.__setattr__(self, "random", RandomSpec(**self.random))
        object.__setattr__(self, "kmax_fraction",
                           _check_fractions(self.kmax_fraction, 0.0, "kmax_fraction", False))
        object.__setattr__(self, "pf_fraction",
                           _check_fractions(self.pf_fraction, PF_MIN, "pf_fraction", True))
        object.__setattr__(self, "elliptical", bool(self.elliptical))

    @property
    def is_identity(self):
        return (self.noise_add_ratio == 0 and self.uniform is None and self.random is None
                and self.kmax_fraction == (1.0, 1.0, 1.0) and not self.elliptical
                and self.pf_fraction == (1.0, 1.0, 1.0))

    def to_dict(self):
        return {
            "noise_add_ratio": float(self.noise_add_ratio),
            "uniform": self.uniform.to_dict() if self.uniform else None,
            "random": self.random.to_dict() if self.random else None,
            "kmax_fraction": list(self.kmax_fraction),
            "elliptical": self.elliptical,
            "pf_fraction": list(self.pf_fraction),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        return cls(
            noise_add_ratio=float(d.get("noise_add_ratio", 0.0)),
            uniform=UniformSpec(**d["uniform"]) if d.get("uniform") else None,
            random=RandomSpec(**d["random"]) if d.get("random") else None,
            kmax_fraction=tuple(d.get("kmax_fraction", (1.0, 1.0, 1.0))),
            elliptical=bool(d.get("elliptical", False)),
            pf_fraction=tuple(d.get("pf_fraction", (1.0, 1.0, 1.0))),
        )


def _line_shape(axis, n):
    shape = [1, 1, 1]
    shape[axis] = n
    return shape


def _centered_block(n, count):
    line = np.zeros(n, dtype=bool)
    start = n // 2 - count // 2
    line[start:start + count] = True
    return line


def _round_count(f, n):
    return max(1, int(np.floor(f * n + 0.5)))


def _uniform_mask(params, dims):
    spec = params if isinstance(params, UniformSpec) else UniformSpec(**params)
    ax, n = int(spec.axis), dims[int(spec.axis)]
    line = ((np.arange(n) - n // 2) % int(spec.R)) == 0
    if spec.acs_lines:
        line |= _centered_block(n, min(n, int(spec.acs_lines)))
    return np.broadcast_to(line.reshape(_line_shape(ax, n)), dims)


def _random_mask(params, dims):
    spec = params if isinstance(params, RandomSpec) else RandomSpec(**params)
    _, ny, nz = dims
    ky = np.arange(ny) - ny // 2
    kz = np.arange(nz) - nz // 2
    dist = np.sqrt(ky[:, None] ** 2 + kz[None, :] ** 2).ravel()
    weight = 1.0 / (1.0 + dist ** spec.density_power)
    ncand = ny * nz
    target = int(np.clip(np.floor(ncand / spec.accel + 0.5), 1, ncand))
    dc = (ny // 2) * nz + nz // 2
    rng = make_rng(spec.seed, 0x52414E44)
    weight[dc] = 0.0
    picked = [dc]
    if target > 1:
        p = weight / weight.sum()
        picked.extend(rng.choice(ncand, size=target - 1, replace=False, p=p).tolist())
    plane = np.zeros(ncand, dtype=bool)
    plane[picked] = True
    return np.broadcast_to(plane.reshape(1, ny, nz), dims)


def _kmax_mask(params, dims):
    fracs = _check_fractions(params, 0.0, "kmax_fraction", False)
    bm = np.ones(dims, dtype=bool)
    for ax, (f, n) in enumerate(zip(fracs, dims)):
        if f < 1.0:
            bm &= _centered_block(n, _round_count(f, n)).reshape(_line_shape(ax, n))
    return bm


def _elliptical_mask(params, dims):
    _, ny, nz = dims
    ky = (np.arange(ny) - ny // 2) / (ny / 2.0)
    kz = (np.arange(nz) - nz // 2) / (nz / 2.0)
    plane = ky[:, None] ** 2 + kz[None, :] ** 2 <= 1.0
    return np.broadcast_to(plane.reshape(1, ny, nz), dims)


def _pf_mask(params, dims):
    fracs = _check_fractions(params, PF_MIN, "pf_fraction", True)
    bm = np.ones(dims, dtype=bool)
    for ax, (f, n) in enumerate(zip(fracs, dims)):
        if f < 1.0:
            line = np.zeros(n, dtype=bool)
            line[:_round_count(f, n)] = True
            bm &= line.reshape(_line_shape(ax, n))
    return bm


_BUILDERS = {
    "full": lambda params, dims: np.ones(dims, dtype=bool),
    "uniform": _uniform_mask,
    "random": _random_mask,
    "kmax": _kmax_mask,
    "elliptical": _elliptical_mask,
    "partial_fourier": _pf_mask,
}


def build_mask(kind, params, dims):
    """Build one mask family over ``dims``.

    ``params`` per kind: uniform -> UniformSpec or dict; random -> RandomSpec
    or dict; kmax / partial_fourier -> per-axis fractions; full / elliptical
    ignore it.
    """
    if kind not in _BUILDERS:
        raise ValidationError(f"unknown mask kind {kind!r}")
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or min(dims) < 1:
        raise ValidationError(f"mask dims must be three positive integers, got {dims}")
    bm = np.array(_BUILDERS[kind](params, dims), dtype=bool)
    dc = tuple(n // 2 for n in dims)
    if not bm[dc]:
        raise ValidationError(f"{kind} mask does not retain DC")
    return SamplingMask(bm, (kind,))


def full_mask(dims):
    return build_mask("full", None, dims)


def compose_masks(masks):
    """Logical AND of masks; kind traces are concatenated."""
    masks = list(masks)
    if not masks:
        raise ValidationError("compose_masks needs at least one mask")
    dims = masks[0].dims
    bm = np.ones(dims, dtype=bool)
    trace = []
    for m in masks:
        if m.dims != dims:
            raise ValidationError(f"mask dims differ: {m.dims} vs {dims}")
        bm &= m.bitmap
        trace.extend(k for k in m.kind_trace if k != "full" and k not in trace)
    return SamplingMask(bm, tuple(trace) or ("full",))


def plan_mask(plan, dims):
    """Compose the masks enabled by ``plan`` over ``dims``."""
    parts = [full_mask(dims)]
    if plan.uniform is not None:
        parts.append(build_mask("uniform", plan.uniform, dims))
    if plan.random is not None:
        parts.append(build_mask("random", plan.random, dims))
    if any(f < 1.0 for f in plan.kmax_fraction):
        parts.append(build_mask("kmax", plan.kmax_fraction, dims))
    if plan.elliptical:
        parts.append(build_mask("elliptical", None, dims))
    if any(f < 1.0 for f in plan.pf_fraction):
        parts.append(build_mask("partial_fourier", plan.pf_fraction, dims))
    return compose_masks(parts)


def _check_dims(ksp, mask):
    if tuple(ksp.shape[:3]) != mask.dims:
        raise ValidationError(f"k-space dims {ksp.shape[:3]} do not match mask {mask.dims}")


def _broadcast(mask, ksp):
    bm = mask.bitmap
    return bm[..., None] if ksp.ndim == 4 else bm


def apply_mask(ksp, mask):
    """Zero non-retained samples; retained samples are copied unchanged."""
    ksp = np.asarray(ksp)
    _check_dims(ksp, mask)
    return np.where(_broadcast(mask, ksp), ksp, np.zeros((), dtype=ksp.dtype))


def add_noise(ksp, sigma_add, mask, seed):
    """Add complex white noise of per-component std ``sigma_add`` to retained samples."""
    ksp = np.asarray(ksp)
    if sigma_add < 0:
        raise ValidationError("sigma_add must be >= 0")
    _check_dims(ksp, mask)
    if sigma_add == 0:
        return ksp.copy()
    noise = complex_normal(make_rng(seed, 0x4E4F4953), ksp.shape, sigma_add)
    return np.where(_broadcast(mask, ksp), ksp + noise, ksp)


def degrade(ksp, plan, sigma0, seed):
    """Apply ``plan`` to raw k-space: mask first, then noise.

    Returns the degraded k-space and the composed mask; when noise was added
    its ``kind_trace`` ends with ``"noise"``.
    """
    ksp = np.asarray(ksp)
    if plan.is_identity:
        return ksp.copy(), full_mask(ksp.shape[:3])
    mask = plan_mask(plan, ksp.shape[:3])
    out = apply_mask(ksp, mask)
    if plan.noise_add_ratio > 0:
        out = add_noise(out, plan.noise_add_ratio * sigma0, mask, seed)
        mask = SamplingMask(mask.bitmap, mask.kind_trace + ("noise",))
    return out, mask
