"""Experiment protocols: within-dataset runs, cross-database transfer,
and the four-variant ablation.

Within-dataset: several independently seeded split+train+test cycles with
the per-run SRCC/PLCC and their medians. Cross-database: train on all of
one dataset, test on all of another (provenance-checked so test images can
never leak into training). Ablation: the four architecture/schedule
variants at matched parameter budgets on a shared split.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import TEST, TRAIN, DatasetManifest, load_all, split_dataset
from .errors import ConfigError
from .metrics import PairedScores, plcc, srcc
from .models.assembly import (
    FIXED_WEIGHTS,
    PROGRESSIVE,
    VARIANTS,
    ModelConfig,
    build_model,
    count_parameters,
    equalize_variant_config,
    variant_param_count,
)
from .presets import REFERENCE_CROSS, REFERENCE_WITHIN
from .training import TrainConfig, config_fingerprint, predict, train

WITHIN_DATASET = "within_dataset"
CROSS_DATABASE = "cross_database"
ABLATION = "ablation"
PROTOCOL_KINDS = (WITHIN_DATASET, CROSS_DATABASE, ABLATION)


@dataclass(frozen=True)
class ProtocolSpec:
    """Which experiment to run and on which dataset(s)."""

    kind: str
    train_dataset: str
    test_dataset: str = ""
    num_runs: int = 1
    variant: str = PROGRESSIVE

    def __post_init__(self):
        if self.kind not in PROTOCOL_KINDS:
            raise ConfigError(f"unknown protocol kind {self.kind!r}")
        if self.num_runs < 1:
            raise ConfigError(f"num_runs must be >= 1, got {self.num_runs}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        test = self.test_dataset or self.train_dataset
        if self.kind == CROSS_DATABASE and test == self.train_dataset:
            raise ConfigError(
                "cross-database protocol needs distinct train and test datasets"
            )
        if self.kind == WITHIN_DATASET and test != self.train_dataset:
            raise ConfigError(
                "within-dataset protocol uses a single dataset"
            )


def lower_median(values: list[float]) -> float:
    """Median that returns an observed value (lower of the two middles)."""
    if not values:
        raise ValueError("no values")
    return float(sorted(values)[(len(values) - 1) // 2])


@dataclass
class EvalReport:
    """Serializable record of one protocol execution."""

    protocol: str
    datasets: list[str]
    runs: list[dict]
    median: dict
    variants: list[dict] | None = None
    params: dict[str, int] | None = None
    reference: dict | None = None
    fingerprint: str = ""

    def to_dict(self) -> dict:
        out = {
            "protocol": self.protocol,
            "datasets": self.datasets,
            "runs": self.runs,
            "median": self.median,
            "fingerprint": self.fingerprint,
        }
        if self.variants is not None:
            out["variants"] = self.variants
        if self.params is not None:
            out["params"] = self.params
        if self.reference is not None:
            out["reference"] = self.reference
        return out

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls(
            protocol=payload["protocol"],
            datasets=payload["datasets"],
            runs=payload["runs"],
            median=payload["median"],
            variants=payload.get("variants"),
            params=payload.get("params"),
            reference=payload.get("reference"),
            fingerprint=payload.get("fingerprint", ""),
        )


def _scored_pair(samples, predictions) -> PairedScores:
    return PairedScores(
        np.array([s.scaled_score for s in samples]), np.asarray(predictions)
    )


def run_within(
    manifest: DatasetManifest,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    num_runs: int = 1,
    train_fraction: float = 0.8,
    log_dir: str | Path | None = None,
) -> EvalReport:
    """num_runs independent split+train+test cycles on one dataset."""
    if num_runs < 1:
        raise ConfigError(f"num_runs must be >= 1, got {num_runs}")
    runs = []
    for i in range(num_runs):
        seed = train_cfg.seed + i
        cfg = replace(train_cfg, seed=seed, dataset=manifest.name)
        train_samples, test_samples = split_dataset(
            manifest, train_fraction, seed,
            crop_size=cfg.crop_size, resize_short_side=cfg.resize_short_side,
        )
        log_path = (
            Path(log_dir) / f"{manifest.name}_seed{seed}.csv" if log_dir else None
        )
        result = train(train_samples, model_cfg, cfg, log_path=log_path)
        predictions = predict(result.checkpoint.build(), test_samples, cfg)
        pairs = _scored_pair(test_samples, predictions)
        runs.append({"seed": seed, "srcc": srcc(pairs), "plcc": plcc(pairs)})

    median = {
        "srcc": lower_median([r["srcc"] for r in runs]),
        "plcc": lower_median([r["plcc"] for r in runs]),
    }
    reference = None
    if manifest.name.lower() in REFERENCE_WITHIN:
        ref_srcc, ref_plcc = REFERENCE_WITHIN[manifest.name.lower()]
        reference = {"srcc": ref_srcc, "plcc": ref_plcc, "scale": "full"}
    return EvalReport(
        protocol=WITHIN_DATASET,
        datasets=[manifest.name],
        runs=runs,
        median=median,
        reference=reference,
        fingerprint=config_fingerprint(model_cfg, train_cfg, WITHIN_DATASET),
    )


def run_cross(
    train_manifest: DatasetManifest,
    test_manifest: DatasetManifest,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    log_dir: str | Path | None = None,
) -> EvalReport:
    """Train on the entirety of one dataset, evaluate on all of another."""
    if train_manifest.name == test_manifest.name:
        raise ConfigError(
            f"cross-database test needs two datasets, got {train_manifest.name!r} twice"
        )
    cfg = replace(train_cfg, dataset=train_manifest.name)
    train_samples = load_all(
        train_manifest, TRAIN, cfg.crop_size, cfg.resize_short_side
    )
    test_samples = load_all(
        test_manifest, TEST, cfg.crop_size, cfg.resize_short_side
    )
    # Provenance audit: nothing from the test dataset may enter training.
    leaked = {s.dataset for s in train_samples} - {train_manifest.name}
    if leaked:
        raise ConfigError(f"foreign samples in training set: {sorted(leaked)}")

    log_path = (
        Path(log_dir) / f"{train_manifest.name}_to_{test_manifest.name}.csv"
        if log_dir
        else None
    )
    result = train(train_samples, model_cfg, cfg, log_path=log_path)
    predictions = predict(result.checkpoint.build(), test_samples, cfg)
    pairs = _scored_pair(test_samples, predictions)
    row = {"seed": cfg.seed, "srcc": srcc(pairs), "plcc": plcc(pairs)}

    key = (train_manifest.name.lower(), test_manifest.name.lower())
    reference = (
        {"srcc": REFERENCE_CROSS[key], "scale": "full"}
        if key in REFERENCE_CROSS
        else None
    )
    return EvalReport(
        protocol=CROSS_DATABASE,
        datasets=[train_manifest.name, test_manifest.name],
        runs=[row],
        median={"srcc": row["srcc"], "plcc": row["plcc"]},
        reference=reference,
        fingerprint=config_fingerprint(model_cfg, train_cfg, CROSS_DATABASE),
    )


def run_ablation(
    manifest: DatasetManifest,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    num_runs: int = 1,
    train_fraction: float = 0.8,
    log_dir: str | Path | None = None,
    tolerance: float = 0.10,
) -> EvalReport:
    """Evaluate the four variants at matched parameter budgets.

    Every variant sees the same split(s); the fixed-weight variant trains
    with constant (0.5, 0.5) task weights. Parameter counts are equalized
    to the progressive variant within ``tolerance`` beforehand.
    """
    target = variant_param_count(model_cfg, PROGRESSIVE)
    configs = {v: equalize_variant_config(model_cfg, v, tolerance) for v in VARIANTS}
    params: dict[str, int] = {}
    for v, cfg in configs.items():
        count = count_parameters(build_model(cfg, v))
        if abs(count - target) > tolerance * target:
            raise ConfigError(
                f"variant {v} has {count} parameters, outside "
                f"{tolerance:.0%} of {target}"
            )
        params[v] = count

    runs = []
    per_variant: dict[str, list[dict]] = {v: [] for v in VARIANTS}
    for i in range(num_runs):
        seed = train_cfg.seed + i
        train_samples, test_samples = split_dataset(
            manifest, train_fraction, seed,
            crop_size=train_cfg.crop_size,
            resize_short_side=train_cfg.resize_short_side,
        )
        for v in VARIANTS:
            cfg = replace(
                train_cfg,
                seed=seed,
                dataset=manifest.name,
                fixed_weights=(0.5, 0.5) if v == FIXED_WEIGHTS else None,
            )
            log_path = Path(log_dir) / f"{v}_seed{seed}.csv" if log_dir else None
            result = train(train_samples, configs[v], cfg, variant=v, log_path=log_path)
            predictions = predict(result.checkpoint.build(), test_samples, cfg)
            pairs = _scored_pair(test_samples, predictions)
            row = {"seed": seed, "variant": v, "srcc": srcc(pairs), "plcc": plcc(pairs)}
            runs.append(row)
            per_variant[v].append(row)

    variants = [
        {
            "name": v,
            "srcc": lower_median([r["srcc"] for r in per_variant[v]]),
            "plcc": lower_median([r["plcc"] for r in per_variant[v]]),
            "params": params[v],
        }
        for v in VARIANTS
    ]
    full = next(item for item in variants if item["name"] == PROGRESSIVE)
    return EvalReport(
        protocol=ABLATION,
        datasets=[manifest.name],
        runs=runs,
        median={"srcc": full["srcc"], "plcc": full["plcc"]},
        variants=variants,
        params=params,
        fingerprint=config_fingerprint(model_cfg, train_cfg, ABLATION),
    )
