"""Command-line interface.

Subcommands:
    train     --config F [--out DIR] [--resume CKPT] [--no-augment]
    eval      --checkpoint F --manifest F [--out DIR]
    gradcheck [--tolerance X]
    bench     [--sizes CSV] [--repeats K] [--out DIR]
    synth     --cases N --size HxW[xD] --classes C --seed S --out DIR

Exit codes: 0 success, 1 numeric failure, 2 config error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys

from .errors import (
    ConfigError,
    ContractError,
    DataFormatError,
    GenerationError,
    NumericError,
    ShapeError,
)

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def _cmd_train(args) -> int:
    from .config import parse_run_config
    from .train import train

    cfg = parse_run_config(args.config)
    result = train(cfg, args.out, resume=args.resume, augment_data=not args.no_augment)
    print(f"trained {len(result.losses)} iterations")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"loss curve: {result.loss_csv_path}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    import numpy as np

    from .evaluate import evaluate_manifest, predict_labels, write_eval_outputs
    from .train import model_from_checkpoint

    model, _ = model_from_checkpoint(args.checkpoint)
    reports = evaluate_manifest(
        args.manifest,
        model.cfg.num_classes,
        lambda image: predict_labels(model, image),
    )
    case_csv, dot_csv = write_eval_outputs(args.out, reports)
    print(f"cases: {len(reports)}")
    print(f"mean foreground DSC: {np.mean([r.mean_dsc() for r in reports]):.4f}")
    print(f"mean foreground IoU: {np.mean([r.mean_iou() for r in reports]):.4f}")
    print(f"mean foreground HD95: {np.mean([r.mean_hd95() for r in reports]):.4f}")
    print(f"per-case report: {case_csv}")
    print(f"dot-plot data: {dot_csv}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    from .gradcheck import run_reference_gradcheck

    checks, offenders = run_reference_gradcheck(tolerance=args.tolerance)
    for c in checks:
        status = "ok" if c.passed(args.tolerance) else "FAIL"
        print(f"{status:>4}  {c.name:<24} max rel err {c.max_rel_err:.3e} "
              f"({c.checked} coords)")
    if offenders:
        print(f"{len(offenders)} parameter(s) exceed tolerance {args.tolerance}:")
        for c in offenders:
            print(f"  {c.name}: {c.max_rel_err:.3e}")
        return EXIT_NUMERIC
    print(f"all {len(checks)} parameters within tolerance {args.tolerance}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    import os

    from .bench import run_bench, write_bench_csv
    from .unet import ModelConfig, VilUNet, architecture_summary

    try:
        sizes = tuple(int(s) for s in args.sizes.split(","))
    except ValueError as exc:
        raise ConfigError(f"--sizes must be a comma-separated int list: {exc}")
    report = run_bench(sizes=sizes, repeats=args.repeats)
    os.makedirs(args.out, exist_ok=True)
    rows_csv = os.path.join(args.out, "bench_rows.csv")
    slopes_csv = os.path.join(args.out, "bench_slopes.csv")
    write_bench_csv(rows_csv, slopes_csv, report)
    for r in report.rows:
        print(
            f"{r.mixer:<10} n={r.n:<6} time={r.median_time * 1e3:8.3f} ms  "
            f"flops={r.flops:<12} state={r.state_bytes} B"
        )
    for mixer in ("mlstm", "attention"):
        print(
            f"{mixer}: wall-time slope {report.time_slopes[mixer]:.3f}, "
            f"FLOP slope {report.flop_slopes[mixer]:.3f}"
        )
    print(f"rows: {rows_csv}")
    print(f"slopes: {slopes_csv}")
    cfg = ModelConfig()
    summary_extent = cfg.divisor * 8
    print(architecture_summary(VilUNet(cfg, (summary_extent,) * cfg.spatial_rank)))
    return EXIT_OK


def _cmd_synth(args) -> int:
    from .data import synth_dataset

    try:
        extents = tuple(int(s) for s in args.size.lower().split("x"))
    except ValueError as exc:
        raise ConfigError(f"--size must look like HxW or HxWxD: {exc}")
    if len(extents) not in (2, 3):
        raise ConfigError(f"--size must have 2 or 3 extents, got {args.size!r}")
    manifest = synth_dataset(args.cases, extents, args.classes, args.seed, args.out)
    print(f"manifest: {manifest}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vixseg", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a key=value config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", default="train_out")
    t.add_argument("--resume", default=None)
    t.add_argument("--no-augment", action="store_true")
    t.set_defaults(fn=_cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint against a manifest")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--out", default="eval_out")
    e.set_defaults(fn=_cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    g.add_argument("--tolerance", type=float, default=1e-4)
    g.set_defaults(fn=_cmd_gradcheck)

    b = sub.add_parser("bench", help="complexity benchmark vs softmax attention")
    b.add_argument("--sizes", default="64,128,256,512,1024")
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--out", default="bench_out")
    b.set_defaults(fn=_cmd_bench)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--cases", type=int, required=True)
    s.add_argument("--size", required=True, help="HxW or HxWxD")
    s.add_argument("--classes", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ShapeError, ContractError, GenerationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
