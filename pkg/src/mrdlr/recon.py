"""Conventional reconstruction pipeline used to turn k-space into image pairs.

Fixed step order::

    window -> zero-pad -> (POCS | zero-fill) -> (SENSE | channel combine)
           -> intensity normalization -> distortion correction
           -> component extraction -> quantize/dequantize

The same :class:`ReconPlan` reconstructs the degraded input and the raw
target. Degradation-specific steps (SENSE unfolding, POCS) fall back to
their identity forms when the mask is fully sampled.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from .degrade import SamplingMask, build_mask, full_mask
from .errors import SingularSystemError, ValidationError
from .kspace import Axis, WindowSpec, apply_window, fft_centered, ifft_centered, zero_pad_or_crop

COMPONENTS = ("magnitude", "phase", "real", "imaginary")
COMBINE_MODES = ("rss", "sens_weighted")
PF_MODES = ("none", "zero_fill", "pocs")
SENSE_MAX_COND = 1e8


@dataclass(frozen=True)
class SenseSpec:
    axis: Axis = Axis.PHASE
    R: int = 2

    def __post_init__(self):
        object.__setattr__(self, "axis", Axis.parse(self.axis))
        if self.axis == Axis.FREQUENCY:
            raise ValidationError("SENSE unfolding along the frequency axis is not supported")
        if int(self.R) < 1:
            raise ValidationError("SENSE R must be >= 1")

    def to_dict(self):
        return {"axis": self.axis.label, "R": int(self.R)}


@dataclass(frozen=True)
class WarpSpec:
    """Radial in-plane distortion ``r' = r * (1 + c2 r^2 + c4 r^4)``."""

    c2: float = 0.0
    c4: float = 0.0
    jacobian: bool = False

    def __post_init__(self):
        r = np.linspace(0.0, np.sqrt(3.0), 2001)
        deriv = 1.0 + 3.0 * self.c2 * r ** 2 + 5.0 * self.c4 * r ** 4
        if np.any(deriv <= 0):
            raise ValidationError(f"warp (c2={self.c2}, c4={self.c4}) is not bijective on r in [0, sqrt(3)]")

    def radial(self, r):
        return r * (1.0 + self.c2 * r ** 2 + self.c4 * r ** 4)

    def radial_deriv(self, r):
        return 1.0 + 3.0 * self.c2 * r ** 2 + 5.0 * self.c4 * r ** 4

    def inverse_radial(self, rho):
        # bijective on [0, sqrt(3)]; radii beyond the table clamp to its end
        r_tab = np.linspace(0.0, np.sqrt(3.0), 4001)
        return np.interp(rho, self.radial(r_tab), r_tab)

    def to_dict(self):
        return {"c2": self.c2, "c4": self.c4, "jacobian": self.jacobian}


@dataclass(frozen=True)
class ReconPlan:
    window: Optional[WindowSpec] = None
    zpad_dims: Optional[tuple] = None
    sense: Optional[SenseSpec] = None
    pf: str = "zero_fill"
    pocs_iters: int = 20
    pocs_tol: float = 1e-6
    combine: str = "sens_weighted"
    normalize_intensity: bool = False
    bias_sigma: float = 8.0
    warp: Optional[WarpSpec] = None
    component: str = "magnitude"
    quantize_bits: Optional[int] = None

    def __post_init__(self):
        if isinstance(self.window, dict):
            object.__setattr__(self, "window", WindowSpec.from_dict(self.window))
        if isinstance(self.sense, dict):
            object.__setattr__(self, "sense", SenseSpec(**self.sense))
        if isinstance(self.warp, dict):
            object.__setattr__(self, "warp", WarpSpec(**self.warp))
        if self.zpad_dims is not None:
            object.__setattr__(self, "zpad_dims", tuple(int(d) for d in self.zpad_dims))
        if self.pf not in PF_MODES:
            raise ValidationError(f"pf must be one of {PF_MODES}, got {self.pf!r}")
        if self.pf == "pocs" and int(self.pocs_iters) < 1:
            raise ValidationError("POCS needs iters >= 1")
        if self.combine not in COMBINE_MODES:
            raise ValidationError(f"combine must be one of {COMBINE_MODES}, got {self.combine!r}")
        if self.component not in COMPONENTS:
            raise ValidationError(f"component must be one of {COMPONENTS}, got {self.component!r}")
        if self.quantize_bits not in (None, 12, 16):
            raise ValidationError("quantize_bits must be None, 12 or 16")

    @property
    def is_linear(self):
        """True when noise propagates linearly through the plan (zero-fill path)."""
        return (self.sense is None and self.pf != "pocs" and not self.normalize_intensity
                and self.warp is None)

    def to_dict(self):
        return {
            "window": self.window.to_dict() if self.window else None,
            "zpad_dims": list(self.zpad_dims) if self.zpad_dims else None,
            "sense": self.sense.to_dict() if self.sense else None,
            "pf": self.pf, "pocs_iters": int(self.pocs_iters), "pocs_tol": float(self.pocs_tol),
            "combine": self.combine,
            "normalize_intensity": bool(self.normalize_intensity),
            "bias_sigma": float(self.bias_sigma),
            "warp": self.warp.to_dict() if self.warp else None,
            "component": self.component,
            "quantize_bits": self.quantize_bits,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown recon fields {sorted(extra)}")
        return cls(**d)


# ---------------------------------------------------------------- primitives

def _check_sens(imgs, sens):
    if sens is None:
        raise ValidationError("sensitivity maps are required")
    sens = np.asarray(sens)
    if sens.shape != imgs.shape:
        raise ValidationError(f"sensitivity shape {sens.shape} does not match coil images {imgs.shape}")
    return sens


def combine_channels(imgs, mode, sens=None):
    """Combine per-coil images ``[..., ncoils]`` into one complex image."""
    imgs = np.asarray(imgs)
    if mode == "rss":
        return np.sqrt(np.sum(np.abs(imgs) ** 2, axis=-1)).astype(np.complex128)
    if mode == "sens_weighted":
        sens = _check_sens(imgs, sens)
        num = np.sum(np.conj(sens) * imgs, axis=-1)
        den = np.sum(np.abs(sens) ** 2, axis=-1)
        out = np.zeros_like(num)
        nz = den > 0
        out[nz] = num[nz] / den[nz]
        return out
    raise ValidationError(f"unknown combine mode {mode!r}")


def _alias_weights(n, R):
    """Fold weights of a DC-aligned every-R-th-line comb along an axis of length ``n``."""
    comb = (((np.arange(n) - n // 2) % R) == 0).astype(float)
    delta = np.zeros(n)
    delta[0] = 1.0
    kernel = ifft_centered(comb * fft_centered(delta, axes=(0,)), axes=(0,))
    return np.array([kernel[(-j * (n // R)) % n] for j in range(R)])


def _sense_system(sens, ax, R):
    """Per-aliased-set encoding matrices ``[step, ..., nc, R]`` and their normal matrices."""
    n = sens.shape[ax]
    if R < 1 or n % R:
        raise ValidationError(f"axis length {n} is not divisible by R={R}")
    h = _alias_weights(n, R)
    step = n // R
    s = np.moveaxis(sens, ax, 0)
    s = s.reshape((R, step) + s.shape[1:])                         # [R, step, ..., nc]
    A = np.moveaxis(s * h.reshape((R,) + (1,) * (s.ndim - 1)), 0, -1)  # [step, ..., nc, R]
    AhA = np.conj(np.swapaxes(A, -1, -2)) @ A
    return A, AhA


def sense_condition(sens, axis, R):
    """Largest condition number over all SENSE unfolding systems."""
    sens = np.asarray(sens)
    if sens.ndim != 4:
        raise ValidationError("sensitivities must be [nx, ny, nz, ncoils]")
    if int(R) == 1:
        return 1.0
    _, AhA = _sense_system(sens, int(Axis.parse(axis)), int(R))
    return float(np.nan_to_num(np.linalg.cond(AhA), nan=np.inf).max())


def sense_unfold(aliased, sens, axis, R):
    """Least-squares unfolding of uniformly undersampled coil images.

    ``aliased`` holds zero-filled coil images ``[nx, ny, nz, ncoils]`` of
    k-space sampled on every ``R``-th line (DC included) along ``axis``.
    """
    aliased = np.asarray(aliased)
    sens = _check_sens(aliased, sens)
    ax = int(Axis.parse(axis))
    R = int(R)
    n = aliased.shape[ax]
    if R < 1 or n % R:
        raise ValidationError(f"axis length {n} is not divisible by R={R}")
    if R == 1:
        return combine_channels(aliased, "sens_weighted", sens)
    A, AhA = _sense_system(sens, ax, R)
    a = np.moveaxis(aliased, ax, 0)[:n // R]                       # [step, ..., nc]
    cond = np.linalg.cond(AhA)
    bad = ~(cond < SENSE_MAX_COND)
    if bad.any():
        loc = [int(i) for i in np.argwhere(bad)[0]]
        vox = loc[1:]
        vox.insert(ax, loc[0])
        raise SingularSystemError(
            f"SENSE system singular (cond={cond[tuple(loc)]:.3g}) at aliased voxel {tuple(vox)} "
            f"along axis {Axis(ax).label}")
    rhs = np.conj(np.swapaxes(A, -1, -2)) @ a[..., None]
    u = np.linalg.solve(AhA, rhs)[..., 0]                          # [step, ..., R]
    u = np.moveaxis(u, -1, 0).reshape((n,) + a.shape[1:-1])
    return np.moveaxis(u, 0, ax)


def _point_reflect(bitmap):
    """Mirror a centered k-space bitmap through DC (False where no mirror exists)."""
    out = bitmap
    for ax, n in enumerate(bitmap.shape):
        idx = 2 * (n // 2) - np.arange(n)
        valid = (idx >= 0) & (idx < n)
        taken = np.take(out, np.clip(idx, 0, n - 1), axis=ax)
        shape = [1] * bitmap.ndim
        shape[ax] = n
        out = taken & valid.reshape(shape)
    return out


def pocs_partial_fourier(ksp, mask, iters, tol=1e-6):
    """POCS partial-Fourier reconstruction of per-coil images.

    Alternates a low-resolution phase constraint (phase from the symmetrically
    sampled centre of k-space) with data consistency on the measured samples.
    """
    if int(iters) < 1:
        raise ValidationError("POCS needs iters >= 1")
    if not mask.has("partial_fourier"):
        raise ValidationError("POCS requires a partial-Fourier component in the mask")
    ksp = np.asarray(ksp)
    bm = mask.bitmap
    if ksp.shape[:3] != bm.shape:
        raise ValidationError(f"k-space dims {ksp.shape[:3]} do not match mask {bm.shape}")
    m = bm[..., None] if ksp.ndim == 4 else bm
    measured = np.where(m, ksp, 0)
    sym = _point_reflect(bm)
    sym = sym[..., None] if ksp.ndim == 4 else sym
    phase = np.exp(1j * np.angle(ifft_centered(np.where(sym, measured, 0))))
    x = ifft_centered(measured)
    for _ in range(int(iters)):
        k = fft_centered(np.abs(x) * phase)
        k = np.where(m, measured, k)
        x_new = ifft_centered(k)
        change = np.linalg.norm(x_new - x) / max(np.linalg.norm(x), 1e-30)
        x = x_new
        if change < tol:
            break
    return x


def bias_field(sens, sigma=8.0):
    """Smooth receive-bias estimate: blurred root-sum-of-squares of the coil maps."""
    rss = np.sqrt(np.sum(np.abs(np.asarray(sens)) ** 2, axis=-1))
    sig = [sigma if n > 1 else 0.0 for n in rss.shape]
    return gaussian_filter(rss, sigma=sig, mode="nearest")


def normalize_intensity(image, bias):
    """Divide by the bias field; voxels with zero bias become 0."""
    image, bias = np.broadcast_arrays(np.asarray(image), np.asarray(bias))
    out = np.zeros(image.shape, dtype=np.result_type(image, bias, float))
    ok = bias > 0
    out[ok] = image[ok] / bias[ok]
    return out


def warp_distortion(image, w, direction):
    """Resample each slice through the radial warp (``apply``) or its inverse (``correct``)."""
    if direction not in ("apply", "correct"):
        raise ValidationError(f"direction must be 'apply' or 'correct', got {direction!r}")
    image = np.asarray(image)
    if w.c2 == 0.0 and w.c4 == 0.0:
        return image.copy()
    nx, ny = image.shape[:2]
    px = (2.0 * np.arange(nx) + 1.0 - nx) / nx
    py = (2.0 * np.arange(ny) + 1.0 - ny) / ny
    X, Y = np.meshgrid(px, py, indexing="ij")
    r = np.hypot(X, Y)
    if direction == "apply":
        rs = w.radial(r)
        jac = np.where(r > 0, w.radial(r) / np.where(r > 0, r, 1.0), 1.0) * w.radial_deriv(r)
    else:
        rs = w.inverse_radial(r)
        jac = 1.0 / (np.where(rs > 0, w.radial(rs) / np.where(rs > 0, rs, 1.0), 1.0) * w.radial_deriv(rs))
    scale = np.where(r > 0, rs / np.where(r > 0, r, 1.0), 1.0)
    ix = (X * scale * nx + nx - 1.0) / 2.0
    iy = (Y * scale * ny + ny - 1.0) / 2.0
    coords = np.stack([ix, iy])

    def remap(plane):
        if np.iscomplexobj(plane):
            return (map_coordinates(plane.real, coords, order=1, mode="constant", cval=0.0)
                    + 1j * map_coordinates(plane.imag, coords, order=1, mode="constant", cval=0.0))
        return map_coordinates(plane, coords, order=1, mode="constant", cval=0.0)

    out = np.empty_like(image)
    for z in range(image.shape[2]):
        out[:, :, z] = remap(image[:, :, z])
    if w.jacobian:
        out = out * jac[:, :, None]
    return out


def extract_component(image, component):
    image = np.asarray(image)
    if component == "magnitude":
        return np.abs(image)
    if component == "real":
        return np.real(image).astype(float)
    if component == "imaginary":
        return np.imag(image).astype(float)
    if component == "phase":
        ph = np.angle(image)
        ph[ph <= -np.pi] = np.pi
        return ph
    raise ValidationError(f"unknown component {component!r}")


def quantize(image, bits):
    """Affine map of ``[min, max]`` onto integer codes ``[0, 2**bits - 1]``.

    Returns ``(codes, offset, scale)`` with ``image ~= offset + scale * codes``.
    """
    if bits not in (12, 16):
        raise ValidationError("bits must be 12 or 16")
    image = np.asarray(image, dtype=float)
    lo, hi = float(image.min()), float(image.max())
    top = 2 ** bits - 1
    if hi == lo:
        return np.zeros(image.shape, dtype=np.uint16), lo, 0.0
    scale = (hi - lo) / top
    codes = np.clip(np.rint((image - lo) / scale), 0, top).astype(np.uint16)
    return codes, lo, scale


def dequantize(codes, offset, scale):
    return offset + scale * np.asarray(codes, dtype=float)


# ------------------------------------------------------------------ pipeline

def interpolate_sens(sens, dims):
    """Fourier-interpolate coil maps onto zero-padded image dims."""
    sens = np.asarray(sens)
    if tuple(sens.shape[:3]) == tuple(dims):
        return sens
    gain = np.sqrt(np.prod(dims) / np.prod(sens.shape[:3]))
    return ifft_centered(zero_pad_or_crop(fft_centered(sens), dims)) * gain


def _comb_subset(mask, sense):
    comb = build_mask("uniform", {"axis": sense.axis, "R": sense.R}, mask.dims).bitmap
    return not np.any(mask.bitmap & ~comb)


def validate_plan(plan, mask):
    """Check plan/mask consistency before any work is done."""
    if plan.sense is not None and mask.has("uniform"):
        if mask.has("random"):
            raise ValidationError("SENSE cannot unfold a random undersampling mask")
        if mask.dims[int(plan.sense.axis)] % int(plan.sense.R):
            raise ValidationError("SENSE axis length is not divisible by R")
        if not _comb_subset(mask, plan.sense):
            raise ValidationError(
                f"mask is not a subset of the R={plan.sense.R} comb along {plan.sense.axis.label}")
    if plan.sense is not None and mask.has("random"):
        raise ValidationError("SENSE cannot unfold a random undersampling mask")
    if plan.pf == "pocs" and not mask.has("partial_fourier") and not _is_full(mask):
        raise ValidationError("POCS requires a partial-Fourier component in the mask")


def _is_full(mask):
    return bool(mask.bitmap.all())


def run_recon_pipeline(ksp, mask, plan, sens, stages=None):
    """Reconstruct a real image volume from multi-coil k-space.

    If ``stages`` is a dict, intermediate volumes are stored in it by name.
    """
    ksp = np.asarray(ksp, dtype=np.complex128)
    if ksp.ndim == 3:
        ksp = ksp[..., None]
    if mask is None:
        mask = full_mask(ksp.shape[:3])
    if tuple(ksp.shape[:3]) != mask.dims:
        raise ValidationError(f"k-space dims {ksp.shape[:3]} do not match mask {mask.dims}")
    sens = None if sens is None else np.asarray(sens)
    if sens is not None and sens.ndim == 3:
        sens = sens[..., None]
    if sens is not None and sens.shape != ksp.shape:
        raise ValidationError(f"sensitivity shape {sens.shape} does not match k-space {ksp.shape}")
    validate_plan(plan, mask)
    if sens is None and (plan.sense is not None or plan.combine == "sens_weighted" or plan.normalize_intensity):
        raise ValidationError("plan requires coil sensitivity maps")

    def keep(name, value):
        if stages is not None:
            stages[name] = value

    k = ksp
    if plan.window is not None:
        k = apply_window(k, plan.window)
        keep("window", k)
    bm = mask.bitmap
    if plan.zpad_dims is not None:
        k = zero_pad_or_crop(k, plan.zpad_dims)
        bm = zero_pad_or_crop(bm, plan.zpad_dims)
        keep("zpad", k)
        if sens is not None:
            sens = interpolate_sens(sens, plan.zpad_dims)
    work_mask = SamplingMask(bm, mask.kind_trace)

    if plan.pf == "pocs" and mask.has("partial_fourier"):
        coil_imgs = pocs_partial_fourier(k, work_mask, plan.pocs_iters, plan.pocs_tol)
    else:
        coil_imgs = ifft_centered(k)
    keep("coil_images", coil_imgs)

    if plan.sense is not None:
        R = int(plan.sense.R) if mask.has("uniform") else 1
        img = sense_unfold(coil_imgs, sens, plan.sense.axis, R)
    else:
        img = combine_channels(coil_imgs, plan.combine, sens)
    keep("combined", img)

    if plan.normalize_intensity:
        img = normalize_intensity(img, bias_field(sens, plan.bias_sigma))
        keep("normalized", img)
    if plan.warp is not None:
        img = warp_distortion(img, plan.warp, "correct")
        keep("warp", img)
    out = extract_component(img, plan.component)
    keep("component", out)
    if plan.quantize_bits is not None:
        codes, offset, scale = quantize(out, plan.quantize_bits)
        out = dequantize(codes, offset, scale)
        keep("quantized", out)
    return out
