import json

import numpy as np
import pytest

from mrdlr.context import NRF_SLOT, SLOTS, derive_nrf
from mrdlr.degrade import DegradationPlan, UniformSpec
from mrdlr.errors import ChecksumError, ValidationError
from mrdlr.pairgen import (Scenario, ScenarioDistribution, generate_pair, load_training_set,
                           pair_id, read_manifest, sample_scenario, simulate_volumes,
                           write_dataset, write_manifest, write_pairs)
from mrdlr.phantom import CoilProfileSpec, coil_sensitivities
from mrdlr.recon import ReconPlan

ZERO = dict(p_noise=0.0, p_uniform=0.0, p_random=0.0, p_kmax=(0, 0, 0), p_elliptical=0.0,
            p_pf=(0, 0, 0), p_sense=0.0, p_pocs=0.0, p_window=0.0, p_zpad=0.0,
            p_normalize=0.0, p_warp=0.0, p_3d=0.0)
SMALL = dict(dims_2d=(32, 32, 1), dims_3d=(32, 32, 8), target_cols=32)


def _dataset_bytes(directory):
    return {p.relative_to(directory).as_posix(): p.read_bytes()
            for p in sorted(directory.rglob("*")) if p.is_file()}


# ---------------------------------------------------------------- sampling

def test_zero_probabilities_give_identity_plans():
    dist = ScenarioDistribution(seed=1, **ZERO)
    for i in range(20):
        sc = sample_scenario(dist, i)
        assert sc.degradation.is_identity
        assert sc.recon == ReconPlan()
        assert sc.pulse_dim == "2D"


def test_sampling_deterministic():
    dist = ScenarioDistribution(seed=5, p_uniform=0.5, p_kmax=(0.5, 0.5, 0.5), p_pf=(0, 0.5, 0.5),
                                p_3d=0.5, p_window=0.3, p_warp=0.2)
    for i in range(30):
        assert sample_scenario(dist, i) == sample_scenario(dist, i)
    assert len({json.dumps(sample_scenario(dist, i).to_dict(), sort_keys=True) for i in range(30)}) > 1


def test_uniform_probability_frequency():
    dist = ScenarioDistribution(seed=2, p_uniform=0.3, p_3d=0.5)
    hits = sum(sample_scenario(dist, i).degradation.uniform is not None for i in range(10000))
    assert abs(hits / 10000 - 0.3) < 0.02


def test_plan_invariants_enforced_at_sampling():
    dist = ScenarioDistribution(seed=3, p_uniform=0.7, p_random=0.3, p_sense=1.0, p_pocs=1.0,
                                p_pf=(0.0, 0.5, 0.5), p_3d=0.5)
    saw_sense = saw_pocs = False
    for i in range(400):
        sc = sample_scenario(dist, i)
        plan, rp = sc.degradation, sc.recon
        if rp.sense is not None:
            saw_sense = True
            assert plan.uniform is not None and plan.random is None
            assert (rp.sense.axis, rp.sense.R) == (plan.uniform.axis, plan.uniform.R)
            assert sc.dims(dist)[int(rp.sense.axis)] % rp.sense.R == 0
        if rp.pf == "pocs":
            saw_pocs = True
            assert any(f < 1 for f in plan.pf_fraction)
    assert saw_sense and saw_pocs


def test_sampled_sense_is_always_solvable():
    dist = ScenarioDistribution(seed=9, p_uniform=1.0, p_sense=1.0, p_3d=0.5, uniform_R=(2, 4))
    drawn = [sample_scenario(dist, i) for i in range(60)]
    sense = [sc for sc in drawn if sc.recon.sense is not None]
    assert sense and all(sc.recon.sense.R == 2 and int(sc.recon.sense.axis) == 1 for sc in sense)
    assert any(sc.degradation.uniform.R == 4 for sc in drawn if sc.recon.sense is None)


def test_scenario_roundtrip_and_distribution_validation():
    dist = ScenarioDistribution(seed=4, p_window=1.0, p_warp=1.0, p_uniform=1.0, p_3d=1.0)
    sc = sample_scenario(dist, 0)
    assert Scenario.from_dict(json.loads(json.dumps(sc.to_dict()))) == sc
    assert ScenarioDistribution.from_dict(dist.to_dict()) == dist
    with pytest.raises(ValidationError):
        ScenarioDistribution(p_uniform=1.5)
    with pytest.raises(ValidationError):
        ScenarioDistribution.from_dict({"nope": 1})
    with pytest.raises(ValidationError):
        ScenarioDistribution(dims_2d=(32, 32, 2))


# ------------------------------------------------------------------- pairs

def test_identity_pair_input_equals_target():
    dist = ScenarioDistribution(seed=1, **ZERO, **SMALL)
    p = generate_pair(dist, 0)
    assert np.array_equal(p.input, p.target)
    assert p.context[NRF_SLOT] == 1.0


def test_identity_volumes_bitwise_equal():
    sc = Scenario(DegradationPlan(), ReconPlan(), "3D", 0.02)
    inp, tgt, _ = simulate_volumes(sc, (16, 16, 4), 3, 9)
    assert np.array_equal(inp, tgt)


def test_fig1b_context():
    plan = DegradationPlan(noise_add_ratio=1.0, kmax_fraction=(0.7, 0.7, 0.8), elliptical=True,
                           pf_fraction=(1.0, 0.75, 1.0))
    dist = ScenarioDistribution(seed=1, **SMALL)
    p = generate_pair(dist, 0, scenario=Scenario(plan, ReconPlan(), "3D", 0.02))
    c = dict(zip(SLOTS, p.context))
    assert c["elliptical"] == 1.0 and c["pf_p"] == 0.75
    assert c["kmax_f"] < 1 and c["kmax_p"] < 1 and c["kmax_s"] < 1
    assert p.input.shape == (7, 32, 32) and p.target.shape == (1, 32, 32)


def test_nrf_slot_matches_derivation():
    dist = ScenarioDistribution(seed=6, p_kmax=(0.5, 0.5, 0.5), p_uniform=0.5, p_sense=0.0, **SMALL)
    for i in range(5):
        p = generate_pair(dist, i)
        sc = p.scenario
        dims = sc.dims(dist)
        sens = coil_sensitivities(CoilProfileSpec(ncoils=dist.ncoils), dims)
        assert p.context[NRF_SLOT] == derive_nrf(sc.degradation, sc.recon, sc.sigma0, dims, sens=sens)


def test_pair_deterministic():
    dist = ScenarioDistribution(seed=8, p_kmax=(0.5, 0.5, 0.5), p_3d=0.5, **SMALL)
    for i in range(4):
        a, b = generate_pair(dist, i), generate_pair(dist, i)
        assert np.array_equal(a.input, b.input) and np.array_equal(a.target, b.target)
        assert np.array_equal(a.context, b.context)


def test_pair_ids():
    assert pair_id(3) == "p0000003"


# ---------------------------------------------------------------------- io

def test_write_read_roundtrip(tmp_path):
    dist = ScenarioDistribution(seed=2, p_kmax=(0.5, 0.5, 0.0), **SMALL)
    pairs = [generate_pair(dist, i) for i in range(4)]
    write_pairs(tmp_path, pairs)
    records = read_manifest(tmp_path)
    assert [r["pair_id"] for r in records] == [p.pair_id for p in pairs]
    ts = load_training_set(tmp_path)
    assert np.array_equal(ts.inputs, np.stack([p.input for p in pairs]))
    assert np.array_equal(ts.targets, np.stack([p.target for p in pairs]))
    assert np.array_equal(ts.contexts, np.stack([p.context for p in pairs]))
    assert all(Scenario.from_dict(r["scenario"]) == p.scenario for r, p in zip(records, pairs))


def test_corrupted_byte_names_file(tmp_path):
    dist = ScenarioDistribution(seed=2, **SMALL)
    write_dataset(tmp_path, dist, 2)
    f = tmp_path / "pairs" / "p0000001.target.mrv"
    data = bytearray(f.read_bytes())
    data[-5] ^= 0xFF
    f.write_bytes(bytes(data))
    with pytest.raises(ChecksumError, match="p0000001.target.mrv"):
        read_manifest(tmp_path)


def test_missing_file_rejected(tmp_path):
    write_dataset(tmp_path, ScenarioDistribution(seed=2, **SMALL), 1)
    (tmp_path / "pairs" / "p0000000.input.mrv").unlink()
    with pytest.raises(ValidationError, match="missing"):
        read_manifest(tmp_path)


def test_empty_dataset(tmp_path):
    write_dataset(tmp_path, ScenarioDistribution(), 0)
    assert (tmp_path / "manifest.jsonl").read_text() == ""
    assert read_manifest(tmp_path) == []
    assert len(load_training_set(tmp_path)) == 0


def test_duplicate_ids_rejected(tmp_path):
    records = write_dataset(tmp_path, ScenarioDistribution(seed=1, **SMALL), 1)
    with pytest.raises(ValidationError, match="duplicate"):
        write_manifest(tmp_path, records + records)
    line = (tmp_path / "manifest.jsonl").read_text()
    (tmp_path / "manifest.jsonl").write_text(line + line)
    with pytest.raises(ValidationError, match="duplicate"):
        read_manifest(tmp_path)


def test_jobs_do_not_change_bytes(tmp_path):
    dist = ScenarioDistribution(seed=12, p_kmax=(0.5, 0.5, 0.5), p_3d=0.3, **SMALL)
    write_dataset(tmp_path / "a", dist, 6, jobs=1)
    write_dataset(tmp_path / "b", dist, 6, jobs=3)
    assert _dataset_bytes(tmp_path / "a") == _dataset_bytes(tmp_path / "b")
