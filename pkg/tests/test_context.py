import numpy as np
import pytest
from hypothesis import given, strategies as st

from mrdlr.context import (CONTEXT_LEN, NRF_SLOT, SLOTS, ScanContext, decode_context,
                           derive_nrf, derive_nrf_analytic, derive_nrf_pseudoreplica,
                           encode_context, neutral_context, nrf_grid_plans, with_nrf)
from mrdlr.degrade import DegradationPlan, UniformSpec
from mrdlr.errors import ValidationError
from mrdlr.phantom import CoilProfileSpec, coil_sensitivities
from mrdlr.recon import COMPONENTS, ReconPlan, SenseSpec

DIMS = (16, 16, 8)
LINEAR = ReconPlan(combine="sens_weighted")


def _sens(dims=DIMS, n=4):
    return coil_sensitivities(CoilProfileSpec(ncoils=n), dims)


# -------------------------------------------------------------- analytic

def test_identity_nrf_is_one():
    assert derive_nrf_analytic(DegradationPlan(), LINEAR, 0.01, DIMS) == 1.0


def test_noise_only_nrf_two():
    plan = DegradationPlan(noise_add_ratio=float(np.sqrt(3)))
    assert derive_nrf_analytic(plan, LINEAR, 0.01, DIMS) == pytest.approx(2.0, abs=1e-12)


def test_kmax_quarter_nrf_half():
    plan = DegradationPlan(kmax_fraction=(1.0, 0.25, 1.0))
    assert derive_nrf_analytic(plan, LINEAR, 0.01, DIMS) == pytest.approx(0.5, abs=1e-12)


def test_analytic_refuses_nonlinear_path():
    with pytest.raises(ValidationError, match="pseudoreplica"):
        derive_nrf_analytic(DegradationPlan(), ReconPlan(pf="pocs"), 0.01, DIMS)
    with pytest.raises(ValidationError):
        derive_nrf_analytic(DegradationPlan(), LINEAR, 0.0, DIMS)


@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.sampled_from([0.25, 0.5, 0.75, 1.0]))
def test_nrf_monotone_in_r(r1, r2, f):
    lo, hi = sorted((r1, r2))
    a = derive_nrf_analytic(DegradationPlan(noise_add_ratio=lo, kmax_fraction=(1, f, 1)), LINEAR, 1.0, DIMS)
    b = derive_nrf_analytic(DegradationPlan(noise_add_ratio=hi, kmax_fraction=(1, f, 1)), LINEAR, 1.0, DIMS)
    assert a <= b
    if hi - lo > 1e-6:
        assert a < b


@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.floats(0.0, 3.0))
def test_nrf_monotone_in_f(f1, f2, r):
    lo, hi = sorted((f1, f2))
    a = derive_nrf_analytic(DegradationPlan(noise_add_ratio=r, kmax_fraction=(1, lo, 1)), LINEAR, 1.0, DIMS)
    b = derive_nrf_analytic(DegradationPlan(noise_add_ratio=r, kmax_fraction=(1, hi, 1)), LINEAR, 1.0, DIMS)
    assert a <= b


def test_grid_has_sixteen_scenarios():
    grid = nrf_grid_plans()
    assert len(grid) == 16
    assert {(f, round(r, 6)) for f, r, _ in grid} == {
        (f, round(r, 6)) for f in (1.0, 0.75, 0.5, 0.25) for r in (0.0, 1.0, np.sqrt(3), 2.0)}


# --------------------------------------------------------- pseudo-replica

@pytest.mark.parametrize("f,r", [(1.0, np.sqrt(3.0)), (0.5, 1.0), (0.25, 0.0)])
def test_pseudoreplica_matches_analytic(f, r):
    plan = DegradationPlan(noise_add_ratio=float(r), kmax_fraction=(1.0, f, 1.0))
    mc, err = derive_nrf_pseudoreplica(plan, LINEAR, 0.01, 300, 5, DIMS, _sens())
    exact = derive_nrf_analytic(plan, LINEAR, 0.01, DIMS)
    assert abs(mc - exact) / exact < 0.03
    assert 0 < err < 0.03 * exact


def test_sense_nrf_exceeds_zero_fill_value():
    dims = (16, 16, 4)
    plan = DegradationPlan(uniform=UniformSpec("phase", 2))
    zf = derive_nrf_analytic(plan, LINEAR, 0.01, dims)
    mc, _ = derive_nrf_pseudoreplica(plan, ReconPlan(sense=SenseSpec("phase", 2)), 0.01, 100, 3,
                                     dims, _sens(dims))
    assert mc > zf
    assert mc >= np.sqrt(2) * 0.97  # g-factor >= 1 on top of the sqrt(R) loss


def test_stderr_shrinks_with_replicas():
    dims = (8, 8, 4)
    plan = DegradationPlan(noise_add_ratio=1.0)
    sens = _sens(dims, 1)
    small = np.mean([derive_nrf_pseudoreplica(plan, LINEAR, 0.01, 200, s, dims, sens)[1] for s in range(12)])
    big = np.mean([derive_nrf_pseudoreplica(plan, LINEAR, 0.01, 400, s, dims, sens)[1] for s in range(12)])
    assert small / big == pytest.approx(np.sqrt(2), rel=0.25)


def test_pseudoreplica_preconditions():
    with pytest.raises(ValidationError):
        derive_nrf_pseudoreplica(DegradationPlan(), LINEAR, 0.0, 100, 0, DIMS, _sens())
    with pytest.raises(ValidationError):
        derive_nrf_pseudoreplica(DegradationPlan(), LINEAR, 0.01, 50, 0, DIMS, _sens())


def test_derive_nrf_dispatch():
    plan = DegradationPlan(noise_add_ratio=1.0)
    assert derive_nrf(plan, LINEAR, 0.01, DIMS) == derive_nrf_analytic(plan, LINEAR, 0.01, DIMS)


# ------------------------------------------------------------------ vector

def test_neutral_vector():
    v = encode_context(neutral_context(), 1.0)
    assert v.shape == (CONTEXT_LEN,) == (16,)
    assert SLOTS[NRF_SLOT] == "nrf" and NRF_SLOT == 14
    expect = np.zeros(16)
    expect[[0, 1, 2, 3, 4, 5, 7, 8, 14]] = 1.0
    assert np.array_equal(v, expect)


contexts = st.builds(
    ScanContext,
    kmax_fraction=st.tuples(*[st.floats(0.01, 1.0)] * 3),
    pf_fraction=st.tuples(*[st.floats(0.5, 1.0)] * 3),
    elliptical=st.booleans(),
    random_accel=st.floats(1.0, 8.0),
    noise_add_ratio=st.floats(0.0, 5.0),
    component=st.sampled_from(COMPONENTS),
    normalize=st.booleans(), warp=st.booleans(),
    pulse_dim=st.sampled_from(["2D", "3D"]),
)


@given(contexts, st.sampled_from([None, "phase", "slice"]), st.integers(2, 6),
       st.floats(0.01, 10.0))
def test_encode_decode_bijection(ctx, axis, R, nrf):
    if axis is not None:
        ctx = ScanContext(**{**ctx.__dict__, "uniform_axis": axis, "uniform_R": R})
    v = encode_context(ctx, nrf)
    assert np.all(np.isfinite(v))
    back, n = decode_context(v)
    assert back == ctx and n == nrf
    assert np.array_equal(encode_context(back, n), v)


def test_fig3_vectors_differ_only_in_named_slots():
    steps = [
        ScanContext(pulse_dim="3D"),
        ScanContext(kmax_fraction=(0.6, 1, 1), pulse_dim="3D"),
        ScanContext(kmax_fraction=(0.6, 1, 1), pf_fraction=(1, 0.75, 1), pulse_dim="3D"),
        ScanContext(kmax_fraction=(0.6, 0.6, 1), pf_fraction=(1, 0.75, 1), pulse_dim="3D"),
        ScanContext(kmax_fraction=(0.6, 0.6, 0.6), pf_fraction=(1, 0.75, 1), pulse_dim="3D"),
    ]
    vecs = np.stack([encode_context(c, 3.0) for c in steps])
    assert np.all(vecs[:, NRF_SLOT] == 3.0)
    changed = {SLOTS[i] for i in np.flatnonzero(np.ptp(vecs, axis=0))}
    assert changed == {"kmax_f", "pf_p", "kmax_p", "kmax_s"}
    for a, b in zip(vecs[:-1], vecs[1:]):
        assert np.count_nonzero(a != b) == 1


def test_context_validation():
    with pytest.raises(ValidationError):
        ScanContext(kmax_fraction=(0.0, 1, 1))
    with pytest.raises(ValidationError):
        ScanContext(noise_add_ratio=-1)
    with pytest.raises(ValidationError):
        ScanContext(uniform_axis="phase", uniform_R=1)
    with pytest.raises(ValidationError):
        encode_context(neutral_context(), 0.0)
    bad = encode_context(neutral_context(), 1.0)
    bad[10] = 9
    with pytest.raises(ValidationError):
        decode_context(bad)
    with pytest.raises(ValidationError):
        decode_context(np.ones(15))


def test_from_plans_and_with_nrf():
    plan = DegradationPlan(kmax_fraction=(0.5, 1, 1), uniform=UniformSpec("slice", 3), noise_add_ratio=2.0)
    ctx = ScanContext.from_plans(plan, ReconPlan(component="real", normalize_intensity=True), "3D")
    assert ctx.uniform_axis == "slice" and ctx.uniform_R == 3 and ctx.normalize
    v = with_nrf(encode_context(ctx, 1.0), 2.5)
    assert v[NRF_SLOT] == 2.5 and decode_context(v)[0] == ctx
    assert ScanContext.from_dict(ctx.to_dict()) == ctx
