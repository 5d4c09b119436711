"""Conditioning context and the expected noise reduction factor (NRF).

The context vector has 16 slots in a fixed order (see :data:`SLOTS`).
Factors default to 1 and flags to 0. Slot 15 carries the uniform
undersampling axis code so that decoding is exact.

NRF is the ratio of input-image to target-image noise std for one training
pair. For a zero-fill reconstruction under unitary transforms it has the
closed form ``sqrt(f_w * (1 + r**2))``, where ``r`` is the added-noise ratio
and ``f_w`` the window-weighted retained fraction of the composed mask
(the plain retained fraction when no window is applied). Nonlinear paths are
measured by pseudo-replica Monte Carlo.
"""

from dataclasses import dataclass

import numpy as np

from .degrade import DegradationPlan, degrade, full_mask, plan_mask
from .errors import ValidationError
from .kspace import window_weights
from .recon import COMPONENTS, run_recon_pipeline
from .rng import complex_normal, derive_seed, make_rng

SLOTS = ("kmax_f", "kmax_p", "kmax_s", "pf_f", "pf_p", "pf_s", "elliptical", "uniform_R",
         "random_accel", "r", "component", "normalize", "warp", "pulse_dim", "nrf", "uniform_axis")
CONTEXT_LEN = len(SLOTS)
NRF_SLOT = SLOTS.index("nrf")
_AXIS_CODES = {None: 0, "phase": 1, "slice": 2}
_PULSE_CODES = {"2D": 0, "3D": 1}


@dataclass(frozen=True)
class ScanContext:
    kmax_fraction: tuple = (1.0, 1.0, 1.0)
    pf_fraction: tuple = (1.0, 1.0, 1.0)
    elliptical: bool = False
    uniform_axis: str = None
    uniform_R: int = 1
    random_accel: float = 1.0
    noise_add_ratio: float = 0.0
    component: str = "magnitude"
    normalize: bool = False
    warp: bool = False
    pulse_dim: str = "2D"

    def __post_init__(self):
        kf = tuple(float(v) for v in self.kmax_fraction)
        pf = tuple(float(v) for v in self.pf_fraction)
        if len(kf) != 3 or len(pf) != 3:
            raise ValidationError("kmax_fraction and pf_fraction need three entries")
        if any(not 0.0 < v <= 1.0 for v in kf + pf):
            raise ValidationError("sampling fractions must lie in (0, 1]")
        object.__setattr__(self, "kmax_fraction", kf)
        object.__setattr__(self, "pf_fraction", pf)
        if self.uniform_axis not in _AXIS_CODES:
            raise ValidationError(f"uniform_axis must be phase, slice or None, got {self.uniform_axis!r}")
        if int(self.uniform_R) < 1 or (int(self.uniform_R) > 1) != (self.uniform_axis is not None):
            raise ValidationError("uniform_R > 1 exactly when uniform_axis is set")
        if self.random_accel < 1.0:
            raise ValidationError("random_accel must be >= 1")
        if not self.noise_add_ratio >= 0:
            raise ValidationError("noise_add_ratio must be >= 0")
        if self.component not in COMPONENTS:
            raise ValidationError(f"unknown component {self.component!r}")
        if self.pulse_dim not in _PULSE_CODES:
            raise ValidationError("pulse_dim must be '2D' or '3D'")

    @classmethod
    def from_plans(cls, plan, rplan, pulse_dim="2D"):
        u = plan.uniform
        return cls(
            kmax_fraction=plan.kmax_fraction, pf_fraction=plan.pf_fraction,
            elliptical=plan.elliptical,
            uniform_axis=u.axis.label if u is not None and u.R > 1 else None,
            uniform_R=int(u.R) if u is not None else 1,
            random_accel=float(plan.random.accel) if plan.random is not None else 1.0,
            noise_add_ratio=float(plan.noise_add_ratio), component=rplan.component,
            normalize=bool(rplan.normalize_intensity), warp=rplan.warp is not None,
            pulse_dim=pulse_dim)

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def encode_context(ctx, nrf):
    """Pack ``ctx`` and ``nrf`` into the 16-slot context vector."""
    if not (np.isfinite(nrf) and nrf > 0):
        raise ValidationError(f"nrf must be a positive finite number, got {nrf}")
    v = np.array([
        *ctx.kmax_fraction, *ctx.pf_fraction, float(ctx.elliptical), float(ctx.uniform_R),
        float(ctx.random_accel), float(ctx.noise_add_ratio),
        float(COMPONENTS.index(ctx.component)), float(ctx.normalize), float(ctx.warp),
        float(_PULSE_CODES[ctx.pulse_dim]), float(nrf), float(_AXIS_CODES[ctx.uniform_axis]),
    ])
    assert v.shape == (CONTEXT_LEN,)
    return v


def decode_context(vec):
    """Inverse of :func:`encode_context`; returns ``(ScanContext, nrf)``."""
    v = np.asarray(vec, dtype=float)
    if v.shape != (CONTEXT_LEN,):
        raise ValidationError(f"context vector must have length {CONTEXT_LEN}, got {v.shape}")
    axes = {code: name for name, code in _AXIS_CODES.items()}
    pulses = {code: name for name, code in _PULSE_CODES.items()}
    try:
        ctx = ScanContext(
            kmax_fraction=tuple(v[0:3]), pf_fraction=tuple(v[3:6]), elliptical=bool(v[6]),
            uniform_R=int(round(v[7])), random_accel=float(v[8]), noise_add_ratio=float(v[9]),
            component=COMPONENTS[int(round(v[10]))], normalize=bool(v[11]), warp=bool(v[12]),
            pulse_dim=pulses[int(round(v[13]))], uniform_axis=axes[int(round(v[15]))])
    except (KeyError, IndexError):
        raise ValidationError("context vector holds an unknown code") from None
    return ctx, float(v[NRF_SLOT])


def neutral_context(pulse_dim="2D"):
    return ScanContext(pulse_dim=pulse_dim)


def with_nrf(vec, nrf):
    out = np.array(vec, dtype=float, copy=True)
    out[NRF_SLOT] = nrf
    return out


# ------------------------------------------------------------------- NRF

@dataclass(frozen=True)
class NoiseBudget:
    sigma0: float
    retained_fraction: float
    sigma_add: float

    @property
    def sigma_target(self):
        return self.sigma0

    @property
    def sigma_input(self):
        return float(np.sqrt(self.retained_fraction * (self.sigma0 ** 2 + self.sigma_add ** 2)))


def noise_budget(plan, rplan, sigma0, dims):
    if not sigma0 > 0:
        raise ValidationError("sigma0 must be > 0 for the NRF to be defined")
    bm = plan_mask(plan, dims).bitmap if not plan.is_identity else np.ones(dims, dtype=bool)
    if rplan is not None and rplan.window is not None:
        w2 = window_weights(dims, rplan.window) ** 2
        f = float(np.sum(bm * w2) / np.sum(w2))
    else:
        f = float(bm.mean())
    return NoiseBudget(float(sigma0), f, float(plan.noise_add_ratio * sigma0))


def derive_nrf_analytic(plan, rplan, sigma0, dims):
    """Closed-form NRF for linear zero-fill reconstruction paths."""
    if rplan is not None and not rplan.is_linear:
        raise ValidationError(
            "plan has a nonlinear reconstruction path (SENSE, POCS, intensity normalization or "
            "warp); use derive_nrf_pseudoreplica")
    b = noise_budget(plan, rplan, sigma0, dims)
    return b.sigma_input / b.sigma_target


def _roi_slices(dims, fraction):
    out = []
    for n in dims:
        if n <= 2:
            out.append(slice(0, n))
        else:
            w = max(1, int(round(n * fraction)))
            s = (n - w) // 2
            out.append(slice(s, s + w))
    return tuple(out)


def derive_nrf_pseudoreplica(plan, rplan, sigma0, n_replicas, seed, dims, sens,
                             signal=None, roi_fraction=0.5, n_batches=10):
    """Monte-Carlo NRF: push noise replicas through degrade + recon.

    ``signal`` is optional noiseless multi-coil k-space; without it pure-noise
    replicas are used. Returns ``(nrf, stderr)`` where the standard error comes
    from ``n_batches`` batch means.
    """
    if not sigma0 > 0:
        raise ValidationError("sigma0 must be > 0")
    if n_replicas < 100:
        raise ValidationError("pseudo-replica NRF needs at least 100 replicas")
    dims = tuple(dims)
    sens = np.asarray(sens)
    if sens.ndim == 3:
        sens = sens[..., None]
    shape = dims + (sens.shape[-1],)
    base = np.zeros(shape, dtype=np.complex128) if signal is None else np.asarray(signal)
    fmask = full_mask(dims)
    roi = _roi_slices(dims, roi_fraction)
    n_batches = max(2, min(n_batches, n_replicas // 10))
    batch_edges = np.linspace(0, n_replicas, n_batches + 1).astype(int)
    batch_ratios, batch_stats = [], []
    for b in range(n_batches):
        acc = {key: [0.0, 0.0] for key in ("in", "tg")}
        count = batch_edges[b + 1] - batch_edges[b]
        for i in range(batch_edges[b], batch_edges[b + 1]):
            raw = base + complex_normal(make_rng(seed, i, 0), shape, sigma0)
            deg, mask = degrade(raw, plan, sigma0, seed=derive_seed(seed, i, 1))
            tg = run_recon_pipeline(raw, fmask, rplan, sens)[roi]
            inp = run_recon_pipeline(deg, mask, rplan, sens)[roi]
            for key, img in (("in", inp), ("tg", tg)):
                acc[key][0] = acc[key][0] + img
                acc[key][1] = acc[key][1] + img * img
        batch_stats.append((count, acc))
        std = {k: np.sqrt(np.maximum(acc[k][1] / count - (acc[k][0] / count) ** 2, 0.0)
                          * count / (count - 1)).mean() for k in acc}
        batch_ratios.append(std["in"] / std["tg"])
    total = sum(c for c, _ in batch_stats)
    full = {}
    for k in ("in", "tg"):
        s1 = sum(a[k][0] for _, a in batch_stats)
        s2 = sum(a[k][1] for _, a in batch_stats)
        var = np.maximum(s2 / total - (s1 / total) ** 2, 0.0) * total / (total - 1)
        full[k] = np.sqrt(var).mean()
    nrf = float(full["in"] / full["tg"])
    stderr = float(np.std(batch_ratios, ddof=1) / np.sqrt(len(batch_ratios)))
    return nrf, stderr


def derive_nrf(plan, rplan, sigma0, dims, sens=None, n_replicas=200, seed=0, signal=None):
    """Analytic NRF when the path is linear, pseudo-replica otherwise."""
    if rplan is None or rplan.is_linear:
        return derive_nrf_analytic(plan, rplan, sigma0, dims)
    nrf, _ = derive_nrf_pseudoreplica(plan, rplan, sigma0, n_replicas, seed, dims, sens, signal)
    return nrf


def nrf_grid_plans(fractions=(1.0, 0.75, 0.5, 0.25), ratios=(0.0, 1.0, np.sqrt(3.0), 2.0)):
    """The 4x4 (retained fraction, noise ratio) scenario grid; fractions via phase k_max."""
    out = []
    for f in fractions:
        for r in ratios:
            out.append((f, float(r), DegradationPlan(noise_add_ratio=float(r),
                                                     kmax_fraction=(1.0, float(f), 1.0))))
    return out
