"""Scenario sampling and training-pair production.

A pair is fully determined by ``(master seed, pair_index)``: the phantom,
coil noise, degradation draws and the slice picked for a 3D pair all come
from Philox streams keyed by those two numbers, so pairs can be produced in
any order and by any number of worker processes with identical bytes.

On disk a dataset is ``manifest.jsonl`` (one JSON record per pair) plus
``pairs/<pair_id>.input.mrv`` and ``pairs/<pair_id>.target.mrv``.
"""

import json
from functools import lru_cache
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import mrv
from .ceunet.infer import STACK_3D, standardize_stack
from .context import ScanContext, derive_nrf, encode_context
from .degrade import PF_MIN, DegradationPlan, RandomSpec, UniformSpec, degrade, full_mask
from .errors import ChecksumError, ValidationError
from .kspace import WindowSpec
from .phantom import CoilProfileSpec, coil_sensitivities, random_phantom_spec, rasterize_phantom, synthesize_kspace
from .recon import (COMBINE_MODES, COMPONENTS, SENSE_MAX_COND, ReconPlan, SenseSpec, WarpSpec, run_recon_pipeline,
                    sense_condition, warp_distortion)
from .rng import derive_seed, make_rng
from .standardize import SliceMeta, apply_standardize

MANIFEST = "manifest.jsonl"
PAIR_DIR = "pairs"
_MAX_RETRIES = 16
_AXES = ("frequency", "phase", "slice")


def _pair(v, name, lo=-np.inf, hi=np.inf):
    v = tuple(float(x) for x in v)
    if len(v) != 2 or not lo <= v[0] <= v[1] <= hi:
        raise ValidationError(f"{name} must be an ordered pair within [{lo}, {hi}], got {v}")
    return v


def _probs(d, allowed, name):
    d = {("none" if k is None else str(k)): float(p) for k, p in dict(d).items()}
    bad = set(d) - {("none" if a is None else str(a)) for a in allowed}
    if bad:
        raise ValidationError(f"{name} has unknown choices {sorted(bad)}")
    if any(p < 0 for p in d.values()) or not np.isclose(sum(d.values()), 1.0):
        raise ValidationError(f"{name} probabilities must be >= 0 and sum to 1")
    return d


@dataclass(frozen=True)
class ScenarioDistribution:
    """Ranges and enable-probabilities for every degradation and recon variation."""

    seed: int = 0
    p_3d: float = 0.0
    dims_2d: tuple = (64, 64, 1)
    dims_3d: tuple = (64, 64, 16)
    target_cols: int = 64
    ncoils: int = 4
    sigma0_range: tuple = (0.01, 0.03)
    # degradation
    p_noise: float = 1.0
    r_range: tuple = (0.0, 2.0 * np.sqrt(2.0))
    p_uniform: float = 0.0
    uniform_R: tuple = (2, 4)
    uniform_acs_lines: int = 8
    p_random: float = 0.0
    random_accel_range: tuple = (1.5, 4.0)
    p_kmax: tuple = (0.0, 0.0, 0.0)
    kmax_range: tuple = (0.4, 1.0)
    p_elliptical: float = 0.0
    p_pf: tuple = (0.0, 0.0, 0.0)
    pf_range: tuple = (PF_MIN, 1.0)
    # reconstruction
    p_sense: float = 0.5
    p_pocs: float = 0.5
    p_window: float = 0.0
    window_alpha_range: tuple = (0.2, 0.8)
    p_zpad: float = 0.0
    p_normalize: float = 0.0
    p_warp: float = 0.0
    warp_c2_range: tuple = (-0.06, 0.06)
    combine: dict = field(default_factory=lambda: {"sens_weighted": 1.0})
    component: dict = field(default_factory=lambda: {"magnitude": 1.0})
    quantize_bits: dict = field(default_factory=lambda: {"none": 1.0})
    nrf_replicas: int = 100

    def __post_init__(self):
        probs = [self.p_3d, self.p_noise, self.p_uniform, self.p_random, self.p_elliptical,
                 self.p_sense, self.p_pocs, self.p_window, self.p_zpad, self.p_normalize,
                 self.p_warp, *self.p_kmax, *self.p_pf]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValidationError("probabilities must lie in [0, 1]")
        if len(self.p_kmax) != 3 or len(self.p_pf) != 3:
            raise ValidationError("p_kmax and p_pf need one probability per axis")
        object.__setattr__(self, "p_kmax", tuple(float(p) for p in self.p_kmax))
        object.__setattr__(self, "p_pf", tuple(float(p) for p in self.p_pf))
        for name in ("dims_2d", "dims_3d"):
            dims = tuple(int(d) for d in getattr(self, name))
            if len(dims) != 3 or min(dims) < 1:
                raise ValidationError(f"{name} must be three positive integers")
            object.__setattr__(self, name, dims)
        if self.dims_2d[2] != 1:
            raise ValidationError("dims_2d must have a single slice")
        if self.target_cols < 32:
            raise ValidationError("target_cols must be >= 32")
        if self.ncoils < 1:
            raise ValidationError("ncoils must be >= 1")
        object.__setattr__(self, "sigma0_range", _pair(self.sigma0_range, "sigma0_range", 1e-12))
        object.__setattr__(self, "r_range", _pair(self.r_range, "r_range", 0.0))
        object.__setattr__(self, "random_accel_range", _pair(self.random_accel_range, "random_accel_range", 1.0))
        object.__setattr__(self, "kmax_range", _pair(self.kmax_range, "kmax_range", 1e-6, 1.0))
        object.__setattr__(self, "pf_range", _pair(self.pf_range, "pf_range", PF_MIN, 1.0))
        object.__setattr__(self, "window_alpha_range", _pair(self.window_alpha_range, "window_alpha_range", 0.0, 1.0))
        object.__setattr__(self, "warp_c2_range", _pair(self.warp_c2_range, "warp_c2_range", -0.2, 0.2))
        object.__setattr__(self, "uniform_R", tuple(int(r) for r in self.uniform_R))
        if not self.uniform_R or min(self.uniform_R) < 2:
            raise ValidationError("uniform_R choices must be >= 2")
        object.__setattr__(self, "combine", _probs(self.combine, COMBINE_MODES, "combine"))
        object.__setattr__(self, "component", _probs(self.component, COMPONENTS, "component"))
        object.__setattr__(self, "quantize_bits", _probs(self.quantize_bits, (None, 12, 16), "quantize_bits"))
        if self.nrf_replicas < 100:
            raise ValidationError("nrf_replicas must be >= 100")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ValidationError(f"unknown scenario_distribution fields {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class Scenario:
    degradation: DegradationPlan
    recon: ReconPlan
    pulse_dim: str = "2D"
    sigma0: float = 0.02

    def to_dict(self):
        return {"degradation": self.degradation.to_dict(), "recon": self.recon.to_dict(),
                "pulse_dim": self.pulse_dim, "sigma0": self.sigma0}

    @classmethod
    def from_dict(cls, d):
        return cls(DegradationPlan.from_dict(d["degradation"]), ReconPlan.from_dict(d["recon"]),
                   d.get("pulse_dim", "2D"), float(d.get("sigma0", 0.02)))

    def dims(self, dist):
        return dist.dims_3d if self.pulse_dim == "3D" else dist.dims_2d


def _choice(rng, probs):
    keys = list(probs)
    k = keys[int(rng.choice(len(keys), p=np.array([probs[k] for k in keys]) / sum(probs.values())))]
    return k


@lru_cache(maxsize=64)
def _sense_solvable(dims, ncoils, axis, R):
    # a symmetric ring gives opposite coils proportional profiles along some axes
    sens = coil_sensitivities(CoilProfileSpec(ncoils=ncoils), dims)
    return sense_condition(sens, axis, R) < SENSE_MAX_COND


def _draw(dist, rng):
    pulse = "3D" if rng.random() < dist.p_3d else "2D"
    dims = dist.dims_3d if pulse == "3D" else dist.dims_2d
    sigma0 = float(rng.uniform(*dist.sigma0_range))
    r = float(rng.uniform(*dist.r_range)) if rng.random() < dist.p_noise else 0.0

    # undersampling axes with a single line cannot be undersampled
    live = [i for i in (1, 2) if dims[i] > 1]
    uniform = random = None
    use_sense = False
    if live and rng.random() < dist.p_uniform:
        axis = _AXES[live[int(rng.integers(len(live)))]]
        R = int(dist.uniform_R[int(rng.integers(len(dist.uniform_R)))])
        n = dims[_AXES.index(axis)]
        use_sense = rng.random() < dist.p_sense and n % R == 0 and _sense_solvable(dims, dist.ncoils, axis, R)
        uniform = UniformSpec(axis=axis, R=R, acs_lines=0 if use_sense else dist.uniform_acs_lines)
    if rng.random() < dist.p_random:
        random = RandomSpec(accel=float(rng.uniform(*dist.random_accel_range)),
                            seed=int(rng.integers(2 ** 31)))
        use_sense = False
    kmax = tuple(float(rng.uniform(*dist.kmax_range)) if (rng.random() < p and dims[i] > 1) else 1.0
                 for i, p in enumerate(dist.p_kmax))
    elliptical = bool(rng.random() < dist.p_elliptical and dims[2] > 1)
    pf = tuple(float(rng.uniform(*dist.pf_range)) if (rng.random() < p and dims[i] > 1) else 1.0
               for i, p in enumerate(dist.p_pf))
    plan = DegradationPlan(noise_add_ratio=r, uniform=uniform, random=random, kmax_fraction=kmax,
                           elliptical=elliptical, pf_fraction=pf)

    has_pf = any(v < 1.0 for v in pf)
    window = (WindowSpec(alpha=float(rng.uniform(*dist.window_alpha_range)))
              if rng.random() < dist.p_window else None)
    zpad = (dims[0] * 2, dims[1] * 2, dims[2]) if rng.random() < dist.p_zpad else None
    pocs = has_pf and rng.random() < dist.p_pocs
    normalize = bool(rng.random() < dist.p_normalize)
    warp = (WarpSpec(c2=float(rng.uniform(*dist.warp_c2_range)), c4=0.0, jacobian=True)
            if rng.random() < dist.p_warp else None)
    combine = _choice(rng, dist.combine)
    component = _choice(rng, dist.component)
    qb = _choice(rng, dist.quantize_bits)
    rplan = ReconPlan(
        window=window, zpad_dims=zpad,
        sense=SenseSpec(axis=uniform.axis, R=uniform.R) if use_sense else None,
        pf="pocs" if pocs else "zero_fill", combine=combine, normalize_intensity=normalize,
        warp=warp, component=component, quantize_bits=None if qb == "none" else int(qb))
    return Scenario(plan, rplan, pulse, sigma0)


def sample_scenario(dist, pair_index):
    """Deterministic scenario for ``pair_index``; retries on invariant violations."""
    last = None
    for attempt in range(_MAX_RETRIES):
        try:
            return _draw(dist, make_rng(dist.seed, pair_index, attempt, 0x5CE))
        except ValidationError as exc:
            last = exc
    raise ValidationError(f"could not draw a valid scenario for pair {pair_index}: {last}")


# ------------------------------------------------------------------- pairs

@dataclass
class TrainingPair:
    pair_id: str
    pair_index: int
    seed: int
    input: np.ndarray       # [C, H, W]
    target: np.ndarray      # [1, H, W]
    context: np.ndarray     # [16]
    scenario: Scenario
    slice_index: int = 0
    input_record: dict = None
    target_record: dict = None


def pair_id(index):
    return f"p{int(index):07d}"


def simulate_volumes(scenario, dims, ncoils, seed, phantom_spec=None):
    """Reconstruct ``(input, target, sens)`` volumes for one scenario and seed."""
    if phantom_spec is None:
        phantom_spec = random_phantom_spec(make_rng(seed, 1), pulse_dim=scenario.pulse_dim)
    obj = rasterize_phantom(phantom_spec, dims)
    sens = coil_sensitivities(CoilProfileSpec(ncoils=ncoils), dims)
    rplan = scenario.recon
    if rplan.warp is not None:
        obj = warp_distortion(obj, rplan.warp, "apply")
    raw = synthesize_kspace(obj, sens, scenario.sigma0, derive_seed(seed, 2))
    target = run_recon_pipeline(raw, full_mask(dims), rplan, sens)
    deg, mask = degrade(raw, scenario.degradation, scenario.sigma0, derive_seed(seed, 3))
    inp = run_recon_pipeline(deg, mask, rplan, sens)
    return inp, target, sens


def generate_pair(dist, pair_index, scenario=None, phantom_spec=None):
    """Build one standardized training pair.

    The input is standardized on its own; the target reuses the input's
    record so both share crop, resampling and intensity mapping.
    """
    if scenario is None:
        scenario = sample_scenario(dist, pair_index)
    seed = derive_seed(dist.seed, pair_index, 0x9A1)
    dims = scenario.dims(dist)
    inp, target, sens = simulate_volumes(scenario, dims, dist.ncoils, seed, phantom_spec)
    rplan = scenario.recon
    nrf = derive_nrf(scenario.degradation, rplan, scenario.sigma0, dims, sens=sens,
                     n_replicas=dist.nrf_replicas, seed=derive_seed(seed, 4))
    ctx = encode_context(ScanContext.from_plans(scenario.degradation, rplan, scenario.pulse_dim), nrf)
    if scenario.pulse_dim == "3D":
        width = STACK_3D
        k = int(make_rng(seed, 5).integers(inp.shape[2]))
    else:
        width, k = 1, 0
    meta = SliceMeta(pulse_dim=scenario.pulse_dim)
    x, rec = standardize_stack(inp, k, meta, width, dist.target_cols)
    y = apply_standardize(target[:, :, k], rec)[None]
    return TrainingPair(pair_id(pair_index), int(pair_index), seed, x.astype(np.float32),
                        y.astype(np.float32), ctx, scenario, k, rec.to_dict(), rec.to_dict())


# -------------------------------------------------------------- dataset io

def _write_pair(directory, pair):
    pdir = Path(directory) / PAIR_DIR
    names = {}
    for role, arr in (("input", pair.input), ("target", pair.target)):
        rel = f"{PAIR_DIR}/{pair.pair_id}.{role}.mrv"
        meta = {"pair_id": pair.pair_id, "role": role, "standardize": pair.input_record,
                "slice_index": pair.slice_index}
        crc = mrv.write(pdir / f"{pair.pair_id}.{role}.mrv", arr, meta=meta,
                        axes=["channel", "row", "col"], dtype="f32")
        names[role] = (rel, crc)
    return {
        "pair_id": pair.pair_id, "pair_index": pair.pair_index, "seed": pair.seed,
        "input": names["input"][0], "input_crc32": names["input"][1],
        "target": names["target"][0], "target_crc32": names["target"][1],
        "context": [float(v) for v in pair.context],
        "scenario": pair.scenario.to_dict(), "slice_index": pair.slice_index,
    }


def _produce(args):
    dist_dict, index, directory = args
    dist = ScenarioDistribution.from_dict(dist_dict)
    return _write_pair(directory, generate_pair(dist, index))


def write_dataset(directory, dist, n_pairs, jobs=1, start=0):
    """Generate ``n_pairs`` pairs into ``directory`` and write the manifest.

    Output bytes do not depend on ``jobs``.
    """
    directory = Path(directory)
    (directory / PAIR_DIR).mkdir(parents=True, exist_ok=True)
    work = [(dist.to_dict(), i, str(directory)) for i in range(start, start + int(n_pairs))]
    if jobs <= 1 or len(work) <= 1:
        records = [_produce(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=int(jobs)) as pool:
            records = list(pool.map(_produce, work, chunksize=max(1, len(work) // (4 * jobs))))
    write_manifest(directory, records)
    return records


def write_pairs(directory, pairs):
    """Write already generated pairs plus the manifest."""
    directory = Path(directory)
    (directory / PAIR_DIR).mkdir(parents=True, exist_ok=True)
    records = [_write_pair(directory, p) for p in pairs]
    write_manifest(directory, records)
    return records


def write_manifest(directory, records):
    ids = [r["pair_id"] for r in records]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate pair_id in dataset")
    lines = [json.dumps(mrv.to_jsonable(r), sort_keys=True, separators=(",", ":")) for r in records]
    text = "".join(line + "\n" for line in lines)
    (Path(directory) / MANIFEST).write_text(text, encoding="utf-8")


def read_manifest(directory, verify=True):
    """Parse and (optionally) checksum-verify a dataset manifest."""
    directory = Path(directory)
    path = directory / MANIFEST
    if not path.exists():
        raise ValidationError(f"{path}: manifest not found")
    records, seen = [], set()
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}:{n}: malformed record ({exc})") from None
        if rec["pair_id"] in seen:
            raise ValidationError(f"{path}:{n}: duplicate pair_id {rec['pair_id']}")
        seen.add(rec["pair_id"])
        if verify:
            for role in ("input", "target"):
                f = directory / rec[role]
                if not f.exists():
                    raise ValidationError(f"{f}: file referenced by the manifest is missing")
                if mrv.crc32_file(f) != rec[role + "_crc32"]:
                    raise ChecksumError(f"{f}: CRC32 mismatch")
        records.append(rec)
    return records


def load_training_set(directory, verify=True):
    """Read a dataset into a :class:`~mrdlr.ceunet.train.TrainingSet`."""
    from .ceunet.train import TrainingSet

    directory = Path(directory)
    records = read_manifest(directory, verify)
    if not records:
        return TrainingSet(np.zeros((0, 1, 1, 1), np.float32), np.zeros((0, 1, 1, 1), np.float32),
                           np.zeros((0, 16)))
    xs, ys, cs = [], [], []
    for rec in records:
        xs.append(mrv.read(directory / rec["input"])[0])
        ys.append(mrv.read(directory / rec["target"])[0])
        cs.append(rec["context"])
    shapes = {x.shape for x in xs}
    if len(shapes) != 1:
        raise ValidationError(f"dataset mixes input shapes {sorted(shapes)}; train 2D and 3D separately")
    return TrainingSet(np.stack(xs), np.stack(ys), np.asarray(cs, dtype=float))


def training_set_from_pairs(pairs):
    from .ceunet.train import TrainingSet

    return TrainingSet(np.stack([p.input for p in pairs]), np.stack([p.target for p in pairs]),
                       np.stack([p.context for p in pairs]))
