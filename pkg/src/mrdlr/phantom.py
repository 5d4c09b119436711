"""Analytic ellipsoid phantoms, ring-coil sensitivities and raw k-space synthesis."""

from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.spatial.transform import Rotation

from .errors import ValidationError
from .kspace import fft_centered
from .rng import complex_normal, make_rng

# x, y, z, x^2, y^2, z^2, xy, xz, yz after the constant term
N_PHASE_TERMS = 10


@dataclass(frozen=True)
class EllipsoidSpec:
    center: tuple = (0.0, 0.0, 0.0)
    semi_axes: tuple = (0.5, 0.5, 0.5)
    euler_angles: tuple = (0.0, 0.0, 0.0)
    intensity: float = 1.0

    def __post_init__(self):
        if len(self.semi_axes) != 3 or min(self.semi_axes) <= 0:
            raise ValidationError(f"ellipsoid semi-axes must be positive, got {self.semi_axes}")
        if len(self.center) != 3 or len(self.euler_angles) != 3:
            raise ValidationError("ellipsoid center and euler_angles need three entries")
        if not np.isfinite(self.intensity):
            raise ValidationError("ellipsoid intensity must be finite")


@dataclass(frozen=True)
class PhantomSpec:
    ellipsoids: tuple = ()
    phase_poly: tuple = ()
    edge_softening: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "ellipsoids", tuple(
            e if isinstance(e, EllipsoidSpec) else EllipsoidSpec(**e) for e in self.ellipsoids))
        if len(self.phase_poly) > N_PHASE_TERMS:
            raise ValidationError(f"phase_poly takes at most {N_PHASE_TERMS} coefficients")
        if self.edge_softening < 0:
            raise ValidationError("edge_softening must be >= 0")

    def to_dict(self):
        return {"ellipsoids": [asdict(e) for e in self.ellipsoids],
                "phase_poly": list(self.phase_poly), "edge_softening": self.edge_softening}

    @classmethod
    def from_dict(cls, d):
        return cls(ellipsoids=tuple(EllipsoidSpec(**{k: tuple(v) if isinstance(v, list) else v
                                                     for k, v in e.items()})
                                    for e in d.get("ellipsoids", ())),
                   phase_poly=tuple(d.get("phase_poly", ())),
                   edge_softening=float(d.get("edge_softening", 0.0)))


@dataclass(frozen=True)
class CoilProfileSpec:
    ncoils: int = 4
    ring_radius: float = 1.2
    falloff: float = 0.7
    normalize_sos: bool = True
    z_stagger: float = 0.0
    phase_slope: float = 0.25 * np.pi

    def __post_init__(self):
        if self.ncoils < 1:
            raise ValidationError("ncoils must be >= 1")
        if self.falloff <= 0:
            raise ValidationError("coil falloff must be > 0")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def grid_coords(dims):
    """Voxel-center coordinates in (-1, 1), symmetric under index flips."""
    axes = [(2.0 * np.arange(n) + 1.0 - n) / n for n in dims]
    return np.meshgrid(*axes, indexing="ij")


def _phase_map(coeffs, x, y, z):
    terms = [np.ones_like(x), x, y, z, x * x, y * y, z * z, x * y, x * z, y * z]
    phi = np.zeros_like(x)
    for c, t in zip(coeffs, terms):
        phi = phi + c * t
    phi = np.angle(np.exp(1j * phi))
    phi[phi <= -np.pi] = np.pi
    return phi


def rasterize_phantom(spec, dims):
    """Render ``spec`` onto a ``dims`` grid as a complex volume."""
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or min(dims) < 1:
        raise ValidationError(f"dims must be three positive integers, got {dims}")
    x, y, z = grid_coords(dims)
    pts = np.stack([x, y, z], axis=-1)
    mag = np.zeros(dims)
    for e in spec.ellipsoids:
        rot = Rotation.from_euler("zyx", e.euler_angles).as_matrix()
        local = (pts - np.asarray(e.center)) @ rot
        q = np.sum((local / np.asarray(e.semi_axes)) ** 2, axis=-1)
        mag[q <= 1.0] += e.intensity
    if spec.edge_softening > 0:
        sig = [spec.edge_softening if n > 1 else 0.0 for n in dims]
        mag = gaussian_filter(mag, sigma=sig, mode="reflect")
    if spec.phase_poly:
        return mag * np.exp(1j * _phase_map(spec.phase_poly, x, y, z))
    return mag.astype(np.complex128)


def coil_sensitivities(spec, dims):
    """Complex coil maps ``[nx, ny, nz, ncoils]`` for coils on a ring in the x-y plane."""
    x, y, z = grid_coords(dims)
    maps = np.empty(tuple(dims) + (spec.ncoils,), dtype=np.complex128)
    for c in range(spec.ncoils):
        theta = 2.0 * np.pi * c / spec.ncoils
        cx, cy = spec.ring_radius * np.cos(theta), spec.ring_radius * np.sin(theta)
        cz = spec.z_stagger * (1 if c % 2 == 0 else -1)
        d2 = (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2
        mag = np.exp(-d2 / (2.0 * spec.falloff ** 2))
        phase = theta + spec.phase_slope * (x * np.cos(theta) + y * np.sin(theta))
        maps[..., c] = mag * np.exp(1j * phase)
    if spec.normalize_sos:
        sos = np.sqrt(np.sum(np.abs(maps) ** 2, axis=-1, keepdims=True))
        maps = maps / sos
    return maps


def synthesize_kspace(obj, sens, sigma0, seed):
    """Per-coil centered k-space of ``sens * obj`` plus complex white noise."""
    obj = np.asarray(obj)
    sens = np.asarray(sens)
    if sens.shape[:3] != obj.shape:
        raise ValidationError(f"sensitivity dims {sens.shape[:3]} do not match object {obj.shape}")
    if sigma0 < 0:
        raise ValidationError("sigma0 must be >= 0")
    ksp = fft_centered(sens * obj[..., None])
    if sigma0 > 0:
        ksp = ksp + complex_normal(make_rng(seed), ksp.shape, sigma0)
    return ksp


def random_phantom_spec(rng, smooth_phase=True, pulse_dim="3D"):
    """Draw a head-like phantom: a skull shell, a homogeneous body and inclusions."""
    flat = pulse_dim == "2D"

    def tilt():
        return (rng.uniform(-0.4, 0.4), 0.0, 0.0)

    sz = 0.85 if not flat else 1.0
    ax0 = (rng.uniform(0.70, 0.85), rng.uniform(0.75, 0.9), sz)
    head_tilt = tilt()
    ells = [
        EllipsoidSpec((0.0, 0.0, 0.0), ax0, head_tilt, 1.0),
        EllipsoidSpec((0.0, 0.0, 0.0), tuple(a * 0.9 for a in ax0), head_tilt, -0.4),
    ]
    for _ in range(int(rng.integers(3, 7))):
        c = (rng.uniform(-0.45, 0.45), rng.uniform(-0.45, 0.45),
             0.0 if flat else rng.uniform(-0.45, 0.45))
        s = (rng.uniform(0.04, 0.25), rng.uniform(0.04, 0.25),
             1.0 if flat else rng.uniform(0.04, 0.3))
        ells.append(EllipsoidSpec(c, s, tilt(), float(rng.uniform(-0.3, 0.5))))
    phase = tuple(rng.uniform(-0.6, 0.6, size=4)) if smooth_phase else ()
    return PhantomSpec(ellipsoids=tuple(ells), phase_poly=phase,
                       edge_softening=float(rng.uniform(0.0, 0.6)))
