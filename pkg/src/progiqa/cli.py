"""Command-line entry point.

Commands: train, eval, cross, ablate, synth, report. Every run is
reproducible from its config file plus seed; resolved settings and the
config fingerprint are written next to the outputs. Exit codes: 0 on
success, 2 for config/input problems, 3 when training diverges.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .config import RunConfig, load_run_config, resolve_manifest, resolve_named_manifest
from .data import split_dataset
from .errors import ConfigError, DivergenceError, ToolkitError
from .protocols import EvalReport, run_ablation, run_cross, run_within
from .synthetic import DISTORTIONS, SyntheticSpec, make_synthetic
from .training import config_fingerprint, read_log, train


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _load_config(args) -> RunConfig:
    overrides = list(args.set or [])
    if getattr(args, "device", None):
        overrides.append(f"train.device={args.device!r}")
    if getattr(args, "dataset", None):
        overrides.append(f"dataset.name={args.dataset!r}")
        if args.dataset == "synthetic":
            overrides.append('dataset.kind="synthetic"')
    return load_run_config(args.config, overrides)


def _write_run_meta(rc: RunConfig, out_dir: Path, extra: dict | None = None) -> Path:
    meta = {
        "fingerprint": config_fingerprint(
            rc.model_cfg, rc.train_cfg, rc.protocol.kind
        ),
        "model": asdict(rc.model_cfg),
        "train": asdict(rc.train_cfg),
        "protocol": asdict(rc.protocol),
        "train_fraction": rc.train_fraction,
    }
    if extra:
        meta.update(extra)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "run_meta.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path


def cmd_train(args) -> int:
    rc = _load_config(args)
    out_dir = Path(args.out)
    manifest = resolve_manifest(rc.dataset, out_dir)
    train_samples, _ = split_dataset(
        manifest,
        rc.train_fraction,
        rc.train_cfg.seed,
        crop_size=rc.train_cfg.crop_size,
        resize_short_side=rc.train_cfg.resize_short_side,
    )
    val_samples = None
    if rc.validation_fraction > 0.0:
        carve = max(1, round(rc.validation_fraction * len(train_samples)))
        if carve >= len(train_samples) - 1:
            raise ConfigError(
                f"validation_fraction {rc.validation_fraction} leaves too "
                f"few of {len(train_samples)} samples for training"
            )
        val_samples = train_samples[-carve:]
        train_samples = train_samples[:-carve]
    meta_path = _write_run_meta(rc, out_dir)
    print(f"run meta: {meta_path}")
    result = train(
        train_samples,
        rc.model_cfg,
        rc.train_cfg,
        variant=rc.protocol.variant,
        log_path=out_dir / "train_log.csv",
        val_samples=val_samples,
    )
    ckpt_path = result.checkpoint.save(out_dir / "checkpoint.pt")
    last = result.log[-1]
    print(f"checkpoint: {ckpt_path}")
    if result.best_checkpoint is not None:
        best_path = result.best_checkpoint.save(out_dir / "checkpoint_best.pt")
        print(f"best checkpoint: {best_path} "
              f"(val srcc {result.best_val_srcc:.4f} "
              f"at epoch {result.best_checkpoint.epoch})")
    print(f"log: {out_dir / 'train_log.csv'}")
    print(
        f"final epoch {last.epoch}: loss_r={last.loss_r:.4f} "
        f"loss_c={last.loss_c:.4f} loss_total={last.loss_total:.4f}"
    )
    return 0


def cmd_eval(args) -> int:
    rc = _load_config(args)
    out_dir = Path(args.out)
    manifest = resolve_manifest(rc.dataset, out_dir)
    num_runs = args.runs or rc.protocol.num_runs
    _write_run_meta(rc, out_dir, {"num_runs": num_runs})
    report = run_within(
        manifest,
        rc.model_cfg,
        rc.train_cfg,
        num_runs=num_runs,
        train_fraction=rc.train_fraction,
        log_dir=out_dir / "logs",
    )
    report_path = report.save(out_dir / "report.json")
    from .plots import render_report

    print(render_report(report))
    print(f"report: {report_path}")
    return 0


def cmd_cross(args) -> int:
    rc = _load_config(args)
    out_dir = Path(args.out)
    train_ref = args.train or rc.protocol.train_dataset
    test_ref = args.test or rc.protocol.test_dataset
    if not train_ref or not test_ref:
        raise ConfigError("cross needs --train and --test datasets (or protocol keys)")
    train_manifest = resolve_named_manifest(train_ref)
    test_manifest = resolve_named_manifest(test_ref)
    _write_run_meta(rc, out_dir)
    report = run_cross(
        train_manifest,
        test_manifest,
        rc.model_cfg,
        rc.train_cfg,
        log_dir=out_dir / "logs",
    )
    report_path = report.save(out_dir / "report.json")
    from .plots import render_report

    print(render_report(report))
    print(f"report: {report_path}")
    return 0


def cmd_ablate(args) -> int:
    rc = _load_config(args)
    out_dir = Path(args.out)
    manifest = resolve_manifest(rc.dataset, out_dir)
    num_runs = args.runs or rc.protocol.num_runs
    _write_run_meta(rc, out_dir, {"num_runs": num_runs})
    report = run_ablation(
        manifest,
        rc.model_cfg,
        rc.train_cfg,
        num_runs=num_runs,
        train_fraction=rc.train_fraction,
        log_dir=out_dir / "logs",
    )
    report_path = report.save(out_dir / "report.json")
    from .plots import render_report

    print(render_report(report))
    print(f"report: {report_path}")
    return 0


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        num_images=args.n,
        image_size=args.size,
        distortion=args.distortion,
        severity_levels=args.levels,
        seed=args.seed,
    )
    _, csv_path = make_synthetic(spec, args.out, name=args.name)
    print(f"manifest: {csv_path}")
    return 0


def cmd_report(args) -> int:
    path = Path(args.path)
    if not path.is_file():
        raise ConfigError(f"no such report or log: {path}")
    from .plots import plot_ablation, plot_training_log, render_report

    if path.suffix == ".json":
        report = EvalReport.load(path)
        print(render_report(report), end="")
        if args.plot_dir and report.variants:
            out = plot_ablation(report, Path(args.plot_dir) / "ablation.png")
            print(f"plot: {out}")
    elif path.suffix == ".csv":
        log = read_log(path)
        last = log[-1]
        print(f"{len(log)} epochs; final loss_r={last.loss_r:.4f} "
              f"loss_c={last.loss_c:.4f} loss_total={last.loss_total:.4f}")
        if args.plot_dir:
            out = plot_training_log(log, Path(args.plot_dir) / "training.png")
            print(f"plot: {out}")
    else:
        raise ConfigError(f"cannot render {path.suffix!r} files (.json or .csv)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="progiqa",
        description="Progressive multi-task blind image quality assessment toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, runs_flag=False):
        p.add_argument("--config", required=True, help="run config TOML")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--device", default=None, help="torch device (e.g. cpu, cuda:0)")
        if runs_flag:
            p.add_argument("--runs", type=_positive_int, default=None,
                           help="number of independent runs")

    p_train = sub.add_parser("train", help="train one model, save checkpoint + log")
    add_common(p_train)
    p_train.set_defaults(func=cmd_train, default_out="runs/train")

    p_eval = sub.add_parser("eval", help="within-dataset protocol with run medians")
    add_common(p_eval, runs_flag=True)
    p_eval.add_argument("--dataset", default=None,
                        help="dataset name override ('synthetic' generates one)")
    p_eval.set_defaults(func=cmd_eval, default_out="runs/eval")

    p_cross = sub.add_parser("cross", help="train on one dataset, test on another")
    add_common(p_cross)
    p_cross.add_argument("--train", default=None, help="training dataset (name or manifest.csv)")
    p_cross.add_argument("--test", default=None, help="test dataset (name or manifest.csv)")
    p_cross.set_defaults(func=cmd_cross, default_out="runs/cross")

    p_ablate = sub.add_parser("ablate", help="four-variant ablation at matched size")
    add_common(p_ablate, runs_flag=True)
    p_ablate.set_defaults(func=cmd_ablate, default_out="runs/ablate")

    p_synth = sub.add_parser("synth", help="generate a synthetic distortion dataset")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.add_argument("--n", type=_positive_int, default=32, help="number of images")
    p_synth.add_argument("--size", type=_positive_int, default=64, help="image side length")
    p_synth.add_argument("--distortion", choices=DISTORTIONS, default="gaussian_blur")
    p_synth.add_argument("--levels", type=_positive_int, default=7,
                         help="number of nonzero severity levels")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--name", default=None, help="dataset name in the sidecar")
    p_synth.set_defaults(func=cmd_synth)

    p_report = sub.add_parser("report", help="render a report JSON or training log CSV")
    p_report.add_argument("path", help="report.json or train_log.csv")
    p_report.add_argument("--plot-dir", default=None, help="emit plots here")
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "out", None) is None and hasattr(args, "default_out"):
        args.out = args.default_out
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
