"""Command-line entry point: gen / train / eval / superres / bench / transform.

Configuration comes from JSON files with flag overrides (flags > file >
defaults).  Every command writes a run manifest into the output directory
before any long computation starts, carrying enough to reproduce the run:
command, config path, seed, tool version, and content hashes of the input
artifacts.  Numeric CSV fields use '.' decimals, ',' delimiters, and a
header row; floats are written with full round-trip precision.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .datagen import TaskSpec, build_dataset
from .dataset_io import load_dataset, save_dataset
from .errors import (
    CFLViolation,
    ChecksumError,
    ClockTooCoarse,
    ConfigError,
    DegenerateChannel,
    DegenerateGrid,
    DegreeTooHigh,
    EmptySplit,
    ExtrapolationOutOfRange,
    FormatError,
    GradientMissing,
    GridIncompatible,
    IllConditioned,
    LengthNotPow2,
    NoTape,
    NumericalFault,
    ShapeMismatch,
    SnoError,
    SolverDiverged,
    Underdetermined,
    ZeroTarget,
)
from .evalbench import BENCH_METHODS, evaluate, runtime_bench, superres_eval
from .model import ModelConfig, init_model
from .polycore import Grid, fit_operator, fit_poly, horner_eval, sumudu_forward
from .trainer import TrainConfig, load_checkpoint, normalize, save_checkpoint, train

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_FORMAT = 4

_EXIT_CODE_BY_ERROR = {
    ConfigError: EXIT_CONFIG,
    DegenerateGrid: EXIT_CONFIG,
    DegreeTooHigh: EXIT_CONFIG,
    Underdetermined: EXIT_CONFIG,
    LengthNotPow2: EXIT_CONFIG,
    SolverDiverged: EXIT_NUMERIC,
    CFLViolation: EXIT_NUMERIC,
    NumericalFault: EXIT_NUMERIC,
    ZeroTarget: EXIT_NUMERIC,
    IllConditioned: EXIT_NUMERIC,
    ClockTooCoarse: EXIT_NUMERIC,
    GradientMissing: EXIT_NUMERIC,
    NoTape: EXIT_NUMERIC,
    DegenerateChannel: EXIT_NUMERIC,
    ExtrapolationOutOfRange: EXIT_NUMERIC,
    FormatError: EXIT_FORMAT,
    ChecksumError: EXIT_FORMAT,
    ShapeMismatch: EXIT_FORMAT,
    GridIncompatible: EXIT_FORMAT,
    EmptySplit: EXIT_FORMAT,
}

EPILOG = """\
exit codes:
  0  success
  2  configuration / spec parse error
  3  numeric fault (solver divergence, CFL violation, non-finite values)
  4  file format, version, or shape mismatch
"""


def _exit_code(exc: SnoError) -> int:
    for klass, code in _EXIT_CODE_BY_ERROR.items():
        if isinstance(exc, klass):
            return code
    return EXIT_NUMERIC


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}")


def _write_manifest(out_dir: Path, command: str, args, hashes: dict):
    config_path = getattr(args, "config", None)
    config_content = None
    if config_path is not None:
        config_content = _load_json(config_path)
    manifest = {
        "command": command,
        "config": config_path,
        "config_content": config_content,
        "seed": getattr(args, "seed", None),
        "out": str(out_dir),
        "tool_version": __version__,
        "input_hashes": hashes,
        "argv": sys.argv[1:],
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("SNO_THREADS")
    return int(env) if env else 1


# -- commands ------------------------------------------------------------------

def cmd_gen(args) -> int:
    spec_dict = _load_json(args.config)
    if args.seed is not None:
        spec_dict["seed"] = args.seed
    if args.resolution is not None:
        spec_dict["resolution"] = args.resolution
    try:
        spec = TaskSpec.from_dict(spec_dict)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad task spec: {exc}")
    out = Path(args.out)
    _write_manifest(out, "gen", args, {})
    ds = build_dataset(spec, threads=_threads(args))
    save_dataset(out / "dataset.bin", ds)
    print(f"dataset written: {out / 'dataset.bin'} "
          f"({ds.inputs.shape[0]} samples at resolution {ds.grid.n})")
    return 0


def cmd_train(args) -> int:
    cfg = _load_json(args.config)
    try:
        ds_path = cfg["dataset"]
        model_dict = dict(cfg.get("model", {}))
        train_dict = dict(cfg.get("train", {}))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad train config: {exc}")
    if args.degree is not None:
        model_dict["degree"] = args.degree
    for flag, key in (("epochs", "epochs"), ("batch_size", "batch_size"),
                      ("lr", "lr"), ("seed", "seed")):
        v = getattr(args, flag)
        if v is not None:
            train_dict[key] = v
    out = Path(args.out)
    _write_manifest(out, "train", args, {"dataset": _sha256(ds_path)})
    ds = normalize(load_dataset(ds_path))
    model_dict.setdefault("in_channels", ds.inputs.shape[1])
    model_dict.setdefault("out_channels", ds.outputs.shape[1])
    model_dict.setdefault("width", 32)
    model_dict.setdefault("n_layers", 4)
    model_dict.setdefault("degree", 16)
    model_dict.setdefault("seed", train_dict.get("seed", 0))
    try:
        mconfig = ModelConfig.from_dict(model_dict)
        tconfig = TrainConfig(**train_dict)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad model/train config: {exc}")
    with threadpool_limits(limits=_threads(args)):
        model = init_model(mconfig)
        report = train(model, ds, tconfig, checkpoint_path=out / "checkpoint.ckpt")
    report.to_csv(out / "train_report.csv")
    summary = {"final_train_loss": report.train_loss[-1],
               "final_test_rel_l2": report.test_rel_l2[-1],
               "epochs": len(report.train_loss),
               "checkpoint": report.checkpoint_path}
    with open(out / "train_summary.json", "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
    print(f"final test rel-L2: {report.test_rel_l2[-1]:.6f}")
    return 0


def cmd_eval(args) -> int:
    out = Path(args.out)
    _write_manifest(out, "eval", args, {"checkpoint": _sha256(args.checkpoint),
                                        "dataset": _sha256(args.dataset)})
    model = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.dataset)
    if ds.outputs.shape[1] != model.config.out_channels \
            or ds.inputs.shape[1] != model.config.in_channels:
        raise ShapeMismatch(
            f"dataset channels in={ds.inputs.shape[1]}/out={ds.outputs.shape[1]} do not "
            f"match model in={model.config.in_channels}/out={model.config.out_channels}")
    with threadpool_limits(limits=_threads(args)):
        rep = evaluate(model, ds)
    _write_csv(out / "eval_report.csv", ["sample", "rel_l2"],
               list(enumerate(rep.per_sample.tolist())))
    for tag, fld in (("worst", rep.worst_error_field), ("median", rep.median_error_field)):
        fld.astype("<f8").tofile(out / f"eval_{tag}_error.f64")
    summary = {"task": rep.task, "mean": rep.mean, "median": rep.median,
               "max": rep.max, "worst_index": rep.worst_index,
               "median_index": rep.median_index,
               "error_field_shape": list(rep.worst_error_field.shape)}
    with open(out / "eval_summary.json", "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
    print(f"mean rel-L2: {rep.mean:.6f}  median: {rep.median:.6f}  max: {rep.max:.6f}")
    return 0


def cmd_superres(args) -> int:
    try:
        eval_ns = [int(s) for s in args.resolutions.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad resolutions list {args.resolutions!r}: {exc}")
    base_n = args.resolution if args.resolution is not None else min(eval_ns)
    out = Path(args.out)
    _write_manifest(out, "superres", args, {"checkpoint": _sha256(args.checkpoint),
                                            "dataset": _sha256(args.dataset)})
    model = load_checkpoint(args.checkpoint)
    fine = load_dataset(args.dataset)
    with threadpool_limits(limits=_threads(args)):
        rep = superres_eval(model, fine, base_n, eval_ns)
    _write_csv(out / "superres_report.csv",
               ["eval_n", "model_rel_l2", "interp_rel_l2"],
               list(zip(rep.eval_ns, rep.model_rel_l2, rep.interp_rel_l2)))
    with open(out / "superres_summary.json", "w") as fh:
        json.dump({"task": rep.task, "base_n": rep.base_n, "eval_ns": rep.eval_ns,
                   "model_rel_l2": rep.model_rel_l2,
                   "interp_rel_l2": rep.interp_rel_l2}, fh, sort_keys=True, indent=1)
    for n, a, b in zip(rep.eval_ns, rep.model_rel_l2, rep.interp_rel_l2):
        print(f"n={n}: model {a:.6f}  interp-baseline {b:.6f}")
    return 0


def cmd_bench(args) -> int:
    try:
        sizes = [int(s) for s in args.sizes.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad sizes list {args.sizes!r}: {exc}")
    out = Path(args.out)
    _write_manifest(out, "bench", args, {})
    try:
        rep = runtime_bench(list(BENCH_METHODS), sizes,
                            degree=args.degree if args.degree is not None else 16,
                            reps=args.reps)
    except ValueError as exc:
        raise ConfigError(str(exc))
    rows = []
    for name, t in rep.methods.items():
        for n, med, p10, p90 in zip(t.sizes, t.median, t.p10, t.p90):
            rows.append([name, n, med, p10, p90])
    _write_csv(out / "runtime_report.csv",
               ["method", "n", "median_s", "p10_s", "p90_s"], rows)
    slopes = {name: t.slope for name, t in rep.methods.items()}
    with open(out / "runtime_summary.json", "w") as fh:
        json.dump({"degree": rep.degree, "reps": rep.reps, "slopes": slopes},
                  fh, sort_keys=True, indent=1)
    for name, s in slopes.items():
        print(f"{name}: log-log slope {s:.3f}")
    return 0


def cmd_transform(args) -> int:
    degree = args.degree if args.degree is not None else 16
    try:
        rows = []
        with open(args.signal) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rows.append([float(v) for v in line.split(",")])
    except FileNotFoundError:
        raise ConfigError(f"signal file not found: {args.signal}")
    except ValueError as exc:
        raise ConfigError(f"non-numeric row in {args.signal}: {exc}")
    data = np.asarray(rows)
    if data.shape[1] == 1:
        grid = Grid(np.linspace(0.0, 1.0, data.shape[0]))
        values = data[:, 0]
    elif data.shape[1] == 2:
        grid = Grid(data[:, 0])
        values = data[:, 1]
    else:
        raise ConfigError(f"expected 1 or 2 columns, got {data.shape[1]}")
    out = Path(args.out)
    _write_manifest(out, "transform", args, {"signal": _sha256(args.signal)})
    fitop = fit_operator(grid, degree)
    coeffs = fit_poly(values, fitop)
    spectrum = sumudu_forward(coeffs)
    recon = horner_eval(coeffs, grid)
    resid = recon.values - values
    _write_csv(out / "transform.csv", ["mode", "coefficient", "spectrum"],
               [[m, float(coeffs.coeffs[m]), float(spectrum.scaled_coeffs[m])]
                for m in range(degree + 1)])
    summary = {"degree": degree, "n": grid.n,
               "residual_max_abs": float(np.max(np.abs(resid))),
               "residual_rel_l2": float(np.linalg.norm(resid)
                                        / max(np.linalg.norm(values), 1e-300))}
    with open(out / "transform_summary.json", "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
    print(f"residual max abs: {summary['residual_max_abs']:.3e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sno", epilog=EPILOG,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required, help="JSON config file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker cap (falls back to SNO_THREADS, then 1)")
        sp.add_argument("--resolution", type=int, default=None)
        sp.add_argument("--degree", type=int, default=None)
        sp.add_argument("--epochs", type=int, default=None)
        sp.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        sp.add_argument("--lr", type=float, default=None)

    sp = sub.add_parser("gen", help="generate a dataset from a task spec")
    common(sp, config_required=True)
    sp.set_defaults(fn=cmd_gen)

    sp = sub.add_parser("train", help="train a model per a run config")
    common(sp, config_required=True)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    sp.add_argument("checkpoint")
    sp.add_argument("dataset")
    common(sp)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("superres", help="zero-shot resolution sweep")
    sp.add_argument("checkpoint")
    sp.add_argument("dataset", help="fine-resolution dataset file")
    sp.add_argument("resolutions", help="comma-separated evaluation resolutions")
    common(sp)
    sp.set_defaults(fn=cmd_superres)

    sp = sub.add_parser("bench", help="runtime scaling of the decomposition step")
    sp.add_argument("sizes", help="comma-separated power-of-two sizes")
    sp.add_argument("--reps", type=int, default=20)
    common(sp)
    sp.set_defaults(fn=cmd_bench)

    sp = sub.add_parser("transform", help="inspect the transform of a signal CSV")
    sp.add_argument("signal", help="1-column (implicit [0,1] grid) or 2-column (t,f) CSV")
    common(sp)
    sp.set_defaults(fn=cmd_transform)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SnoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
