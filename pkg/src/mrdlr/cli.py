"""``mrdlr`` command-line entry point.

Exit codes: 0 success, 2 usage error, 3 validation error, 4 numeric failure.
Diagnostics go to stderr; data goes to the files named on the command line
(``nrf`` and ``eval`` also echo their CSV to stdout when ``--out`` is absent).
"""

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from . import mrv
from .config import load_config, section
from .context import (ScanContext, derive_nrf_analytic, derive_nrf_pseudoreplica, encode_context,
                      neutral_context, nrf_grid_plans)
from .degrade import DegradationPlan, degrade, full_mask, plan_mask
from .errors import MRDLRError, NumericError, ValidationError
from .phantom import (CoilProfileSpec, PhantomSpec, coil_sensitivities, random_phantom_spec,
                      rasterize_phantom, synthesize_kspace)
from .recon import ReconPlan, run_recon_pipeline
from .rng import derive_seed, make_rng
from .standardize import SliceMeta

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3, 4
DEFAULT_DIMS = (64, 64, 16)
DEFAULT_SIGMA0 = 0.02


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _parse_dims(text):
    try:
        dims = tuple(int(v) for v in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"dims must look like 64,64,16, got {text!r}") from None
    if len(dims) != 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError("dims needs three positive integers")
    return dims


def _require(args, name):
    if getattr(args, name) is None:
        raise _UsageError(f"{args.command}: --{name.replace('_', '-')} is required")
    return getattr(args, name)


def _acquisition(cfg, args):
    acq = section(cfg, "acquisition")
    dims = tuple(acq.get("dims", DEFAULT_DIMS))
    if args_dims := getattr(args, "dims", None):
        dims = args_dims
    return tuple(int(d) for d in dims), float(acq.get("sigma0", DEFAULT_SIGMA0))


def _coil_spec(cfg):
    return CoilProfileSpec.from_dict(section(cfg, "coils")) if cfg.get("coils") else CoilProfileSpec()


def _read_kspace(path):
    data, header = mrv.read(path)
    if data.ndim != 4 or not np.iscomplexobj(data):
        raise ValidationError(f"{path}: expected multi-coil complex k-space [nx, ny, nz, nc]")
    meta = header["meta"]
    if "coils" not in meta:
        raise ValidationError(f"{path}: header meta lacks the coil profile")
    return data.astype(np.complex128), header


def _sens_for(meta, dims):
    return coil_sensitivities(CoilProfileSpec.from_dict(meta["coils"]), dims)


def _emit_csv(rows, out):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    if out:
        Path(out).write_text(buf.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(buf.getvalue())


# ---------------------------------------------------------------- commands

def cmd_phantom(args, cfg):
    out = _require(args, "out")
    dims, sigma0 = _acquisition(cfg, args)
    pulse = "2D" if dims[2] == 1 else "3D"
    if cfg.get("phantom"):
        spec = PhantomSpec.from_dict(section(cfg, "phantom"))
    else:
        spec = random_phantom_spec(make_rng(args.seed, 1), pulse_dim=pulse)
    coils = _coil_spec(cfg)
    obj = rasterize_phantom(spec, dims)
    sens = coil_sensitivities(coils, dims)
    ksp = synthesize_kspace(obj, sens, sigma0, derive_seed(args.seed, 2))
    meta = {"phantom": spec.to_dict(), "coils": coils.to_dict(), "sigma0": sigma0, "seed": args.seed,
            "pulse_dim": pulse}
    mrv.write(out, ksp.astype(np.complex64), meta=meta)
    if args.truth:
        mrv.write(args.truth, np.abs(obj), meta={"role": "truth", "pulse_dim": pulse},
                  axes=["frequency", "phase", "slice"])
    return EXIT_OK


def cmd_degrade(args, cfg):
    src, out = _require(args, "input"), _require(args, "out")
    ksp, header = _read_kspace(src)
    meta = dict(header["meta"])
    plan = DegradationPlan.from_dict(section(cfg, "degradation"))
    deg, mask = degrade(ksp, plan, float(meta.get("sigma0", DEFAULT_SIGMA0)), derive_seed(args.seed, 3))
    meta["degradation"] = plan.to_dict()
    meta["mask_kinds"] = list(mask.kind_trace)
    mrv.write(out, deg.astype(np.complex64), meta=meta)
    if args.mask_out:
        mrv.write(args.mask_out, mask.bitmap.astype(np.uint16), meta={"kind_trace": list(mask.kind_trace)},
                  axes=["frequency", "phase", "slice"], dtype="u16")
    return EXIT_OK


def cmd_recon(args, cfg):
    src, out = _require(args, "input"), _require(args, "out")
    ksp, header = _read_kspace(src)
    meta = header["meta"]
    dims = ksp.shape[:3]
    plan = DegradationPlan.from_dict(meta.get("degradation") or {})
    mask = full_mask(dims) if plan.is_identity else plan_mask(plan, dims)
    rplan = ReconPlan.from_dict(section(cfg, "recon"))
    stages = {} if args.dump_stages else None
    img = run_recon_pipeline(ksp, mask, rplan, _sens_for(meta, dims), stages=stages)
    pulse = meta.get("pulse_dim", "2D" if dims[2] == 1 else "3D")
    scan = ScanContext.from_plans(plan, rplan, pulse)
    out_meta = {"slice_meta": SliceMeta(pulse_dim=pulse).to_dict(), "scan_context": scan.to_dict(),
                "recon": rplan.to_dict(), "degradation": plan.to_dict()}
    mrv.write(out, img, meta=out_meta, axes=["frequency", "phase", "slice"])
    if stages is not None:
        d = Path(args.dump_stages)
        d.mkdir(parents=True, exist_ok=True)
        for i, (name, vol) in enumerate(stages.items()):
            vol = np.asarray(vol)
            vol = vol.astype(np.complex64) if np.iscomplexobj(vol) else vol
            mrv.write(d / f"{i:02d}_{name}.mrv", vol, meta={"stage": name})
    return EXIT_OK


def cmd_nrf(args, cfg):
    dims = args.dims or (32, 32, 32)
    sigma0 = float(section(cfg, "acquisition").get("sigma0", DEFAULT_SIGMA0))
    rplan = ReconPlan.from_dict(section(cfg, "recon"))
    sens = coil_sensitivities(CoilProfileSpec(ncoils=args.ncoils), dims)
    if args.grid:
        scenarios = [(f"f{f:g}_r{r:.4g}", f, r, p) for f, r, p in nrf_grid_plans()]
    else:
        plan = DegradationPlan.from_dict(section(cfg, "degradation"))
        mask = full_mask(dims) if plan.is_identity else plan_mask(plan, dims)
        scenarios = [("config", mask.retained_fraction, plan.noise_add_ratio, plan)]
    rows = [("scenario_id", "f", "r", "nrf_analytic", "nrf_mc", "stderr")]
    for sid, f, r, plan in scenarios:
        analytic = derive_nrf_analytic(plan, rplan, sigma0, dims) if rplan.is_linear else float("nan")
        if args.replicas > 0:
            mc, se = derive_nrf_pseudoreplica(plan, rplan, sigma0, args.replicas, args.seed, dims, sens)
        else:
            mc, se = float("nan"), float("nan")
        rows.append((sid, f"{f:.6g}", f"{r:.6g}", f"{analytic:.6g}", f"{mc:.6g}", f"{se:.3g}"))
    _emit_csv(rows, args.out)
    return EXIT_OK


def cmd_pairgen(args, cfg):
    from .pairgen import ScenarioDistribution, write_dataset

    out = _require(args, "out")
    dist_cfg = dict(section(cfg, "scenario_distribution"))
    if args.seed_given or "seed" not in dist_cfg:
        dist_cfg["seed"] = args.seed
    dist = ScenarioDistribution.from_dict(dist_cfg)
    write_dataset(out, dist, args.n, jobs=args.jobs)
    return EXIT_OK


def _unet_spec(cfg, in_channels=None):
    from .ceunet import UNetSpec

    u = dict(section(cfg, "unet"))
    if in_channels is not None:
        u.setdefault("in_channels", in_channels)
    return UNetSpec(**u)


def cmd_train(args, cfg):
    from .ceunet import TrainConfig, save_checkpoint, train
    from .pairgen import load_training_set

    data, out = _require(args, "data"), _require(args, "out")
    ds = load_training_set(data)
    if len(ds) == 0:
        raise ValidationError(f"{data}: dataset is empty")
    tcfg = dict(section(cfg, "train"))
    if args.seed_given or "seed" not in tcfg:
        tcfg["seed"] = args.seed
    tc = TrainConfig.from_dict(tcfg)
    spec = _unet_spec(cfg, in_channels=int(ds.inputs.shape[1]))

    def log(msg):
        print(msg, file=sys.stderr)

    net, history = train(ds, spec, tc, log=log)
    save_checkpoint(out, net, tc, tc.epochs, history)
    return EXIT_OK


def cmd_infer(args, cfg):
    from .ceunet import infer_volume, load_checkpoint

    model, src, out = _require(args, "model"), _require(args, "input"), _require(args, "out")
    if args.nrf is None:
        raise _UsageError("infer: --nrf is required")
    net, _ = load_checkpoint(model)
    vol, header = mrv.read(src)
    if vol.ndim != 3 or np.iscomplexobj(vol):
        raise ValidationError(f"{src}: expected a real image volume [rows, cols, slices]")
    meta = header["meta"]
    if "slice_meta" not in meta:
        raise ValidationError(f"{src}: header meta lacks slice_meta (phase_encode_direction)")
    smeta = SliceMeta.from_dict(meta["slice_meta"])
    scan = ScanContext.from_dict(meta["scan_context"]) if "scan_context" in meta else neutral_context(smeta.pulse_dim)
    ctx = encode_context(scan, args.nrf)
    result = infer_volume(net, vol.astype(float), smeta, ctx, args.nrf, target_cols=args.target_cols)
    out_meta = dict(meta)
    out_meta["inference"] = {"nrf": args.nrf, "model": str(model)}
    mrv.write(out, result, pixel_spacing_mm=header.get("pixel_spacing_mm", (1.0, 1.0, 1.0)),
              meta=out_meta, axes=["frequency", "phase", "slice"])
    return EXIT_OK


def _parse_roi(text):
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 4:
        raise ValidationError(f"ROI must be slice,row,col,radius; got {text!r}")
    return {"slice": int(parts[0]), "center": parts[1:3], "radius": parts[3]}


def _parse_profile(text):
    try:
        start, end, samples = text.split(":")
        return {"start": [float(v) for v in start.split(",")], "end": [float(v) for v in end.split(",")],
                "samples": int(samples)}
    except ValueError:
        raise ValidationError(f"profile must be r0,c0[,z0]:r1,c1[,z1]:samples; got {text!r}") from None


def cmd_eval(args, cfg):
    from .metrics import CircularROI, LineProfile, edge_sharpness, mip, relative_noise, roi_stats

    pa, pb = _require(args, "a"), _require(args, "b")
    a, _ = mrv.read(pa)
    b, _ = mrv.read(pb)
    ev = section(cfg, "eval")
    mip_axis = args.mip_axis if args.mip_axis is not None else ev.get("mip_axis")
    if mip_axis is not None:
        a, b = mip(a, int(mip_axis)), mip(b, int(mip_axis))
    rois = list(ev.get("rois", [])) + [_parse_roi(t) for t in args.roi]
    profiles = list(ev.get("profiles", [])) + [_parse_profile(t) for t in args.profile]
    rows = [("metric", "image_a", "image_b", "value", "params")]
    mip_tag = f";mip_axis={mip_axis}" if mip_axis is not None else ""
    for r in rois:
        roi = CircularROI(int(r["slice"]), tuple(r["center"]), float(r["radius"]))
        tag = f"roi={roi.slice_index}:{roi.center[0]:g},{roi.center[1]:g}:{roi.radius:g}{mip_tag}"
        for name, img in (("a", a), ("b", b)):
            m, s = roi_stats(img, roi)
            rows.append((f"roi_mean_{name}", pa, pb, f"{m:.8g}", tag))
            rows.append((f"roi_std_{name}", pa, pb, f"{s:.8g}", tag))
        rows.append(("relative_noise", pa, pb, f"{relative_noise(a, b, roi):.8g}", tag))
    for p in profiles:
        prof = LineProfile(tuple(p["start"]), tuple(p["end"]), int(p.get("samples", 64)))
        tag = (f"start={','.join(f'{v:g}' for v in prof.start)};end={','.join(f'{v:g}' for v in prof.end)};"
               f"samples={prof.samples}{mip_tag}")
        rows.append(("edge_sharpness", pa, pb, f"{edge_sharpness(a, b, prof):.8g}", tag))
    _emit_csv(rows, args.out)
    return EXIT_OK


def cmd_selftest(args, cfg):
    from .selftest import run_selftest

    failures = run_selftest(seed=args.seed, log=lambda m: print(m, file=sys.stderr))
    return EXIT_OK if not failures else EXIT_NUMERIC


COMMANDS = {
    "phantom": cmd_phantom, "degrade": cmd_degrade, "recon": cmd_recon, "nrf": cmd_nrf,
    "pairgen": cmd_pairgen, "train": cmd_train, "infer": cmd_infer, "eval": cmd_eval,
    "selftest": cmd_selftest,
}


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    common.add_argument("--config", help="JSON config document")
    common.add_argument("--out", help="output path")
    common.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                        help="override a config field by dotted path")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")

    parser = _Parser(prog="mrdlr", description="Multi-dimensional MR reconstruction toolkit")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("phantom", parents=[common], help="synthesize multi-coil k-space")
    p.add_argument("--dims", type=_parse_dims)
    p.add_argument("--truth", help="also write the noiseless magnitude object")

    p = sub.add_parser("degrade", parents=[common], help="apply a degradation plan")
    p.add_argument("--in", dest="input")
    p.add_argument("--mask-out", help="write the composed mask as a u16 volume")

    p = sub.add_parser("recon", parents=[common], help="reconstruct an image volume")
    p.add_argument("--in", dest="input")
    p.add_argument("--dump-stages", metavar="DIR", help="write intermediate volumes")

    p = sub.add_parser("nrf", parents=[common], help="analytic and Monte-Carlo NRF as CSV")
    p.add_argument("--grid", action="store_true", help="the 4x4 (f, r) scenario grid")
    p.add_argument("--replicas", type=int, default=500)
    p.add_argument("--dims", type=_parse_dims)
    p.add_argument("--ncoils", type=int, default=4)

    p = sub.add_parser("pairgen", parents=[common], help="generate a training dataset")
    p.add_argument("--n", type=int, default=100, help="number of pairs")

    p = sub.add_parser("train", parents=[common], help="train a CE U-Net")
    p.add_argument("--data", help="dataset directory")

    p = sub.add_parser("infer", parents=[common], help="denoise/enhance a volume")
    p.add_argument("--model")
    p.add_argument("--in", dest="input")
    p.add_argument("--nrf", type=float)
    p.add_argument("--target-cols", type=int, default=None)

    p = sub.add_parser("eval", parents=[common], help="ROI, relative noise and edge sharpness")
    p.add_argument("--a", help="original image")
    p.add_argument("--b", help="processed image")
    p.add_argument("--roi", action="append", default=[], metavar="S,R,C,RAD")
    p.add_argument("--profile", action="append", default=[], metavar="R0,C0:R1,C1:N")
    p.add_argument("--mip-axis", type=int, default=None)

    sub.add_parser("selftest", parents=[common], help="run the built-in invariant checks")
    return parser


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.seed_given = args.seed is not None
        if args.seed is None:
            args.seed = 0
        if args.seed < 0:
            raise _UsageError("--seed must be >= 0")
        if args.jobs < 1:
            raise _UsageError("--jobs must be >= 1")
        cfg = load_config(args.config, args.set)
        return COMMANDS[args.command](args, cfg)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValidationError, MRDLRError, TypeError, KeyError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def main():
    sys.exit(run())
