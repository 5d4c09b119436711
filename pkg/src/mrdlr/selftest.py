"""Fast built-in invariant checks behind ``mrdlr selftest``."""

import numpy as np

from .context import ScanContext, decode_context, derive_nrf_analytic, encode_context
from .degrade import DegradationPlan, build_mask, compose_masks
from .kspace import fft_centered, ifft_centered
from .phantom import CoilProfileSpec, coil_sensitivities
from .recon import ReconPlan, sense_unfold
from .rng import make_rng
from .standardize import SliceMeta, standardize


def _unitarity(rng):
    x = rng.standard_normal((12, 10, 6)) + 1j * rng.standard_normal((12, 10, 6))
    k = fft_centered(x)
    ok = abs(np.linalg.norm(k) - np.linalg.norm(x)) / np.linalg.norm(x) < 1e-9
    return ok and np.allclose(ifft_centered(k), x, atol=1e-12)


def _mask_algebra(rng):
    dims = (16, 16, 8)
    a = build_mask("kmax", (1.0, 0.5, 1.0), dims)
    b = build_mask("uniform", {"axis": "phase", "R": 2}, dims)
    return compose_masks([a, b]) == compose_masks([b, a]) and compose_masks([a, a]) == a


def _sense(rng):
    dims = (16, 16, 1)
    sens = coil_sensitivities(CoilProfileSpec(ncoils=6), dims)
    truth = rng.standard_normal(dims) + 1j * rng.standard_normal(dims)
    ksp = fft_centered(sens * truth[..., None])
    ksp[:, (np.arange(16) - 8) % 2 != 0] = 0
    out = sense_unfold(ifft_centered(ksp), sens, "phase", 2)
    return np.abs(out - truth).max() < 1e-6 * np.abs(truth).max()


def _nrf(rng):
    plan = DegradationPlan(noise_add_ratio=float(np.sqrt(3.0)))
    return abs(derive_nrf_analytic(plan, ReconPlan(), 1.0, (8, 8, 8)) - 2.0) < 1e-12


def _context(rng):
    ctx = ScanContext(kmax_fraction=(0.5, 0.75, 1.0), uniform_axis="slice", uniform_R=2,
                      noise_add_ratio=1.5, pulse_dim="3D")
    back, nrf = decode_context(encode_context(ctx, 2.25))
    return back == ctx and nrf == 2.25


def _standardize(rng):
    x = rng.random((40, 48))
    a, _ = standardize(x, SliceMeta(), 64)
    b, _ = standardize(3.5 * x - 2.0, SliceMeta(), 64)
    return np.abs(a - b).max() < 1e-6


CHECKS = {
    "unitarity": _unitarity, "mask_algebra": _mask_algebra, "sense_exactness": _sense,
    "nrf_closed_form": _nrf, "context_roundtrip": _context, "standardize_invariance": _standardize,
}


def run_selftest(seed=0, log=print):
    """Run every check; returns the names of the ones that failed."""
    failed = []
    for i, (name, check) in enumerate(CHECKS.items()):
        try:
            ok = bool(check(make_rng(seed, i)))
        except Exception as exc:  # a crash is a failure, reported with its message
            ok = False
            log(f"{name}: raised {type(exc).__name__}: {exc}")
        log(f"{'PASS' if ok else 'FAIL'} {name}")
        if not ok:
            failed.append(name)
    return failed
