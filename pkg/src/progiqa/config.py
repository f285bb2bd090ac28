"""Run configuration files: one TOML document per run.

Sections: [dataset], [model], [schedule], [train], [protocol]. Every key
is validated before any work starts and unknown keys are rejected by name.
Known dataset names pull their tuned defaults (learning rate, batch size,
tradeoff, view count) unless the file or a --set override pins them.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .binning import BinningConfig
from .data import DatasetManifest, load_manifest
from .errors import ConfigError
from .models.assembly import PROGRESSIVE, ModelConfig
from .models.backbone import RESNET50, TOY_CNN, BackboneSpec
from .presets import DATASET_PRESETS, DEFAULT_TRADEOFF
from .protocols import ProtocolSpec, WITHIN_DATASET
from .synthetic import SyntheticSpec, make_synthetic
from .training import MULTI_CROP, TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DATASET_ROOT_ENV = "DATASET_ROOT"

_SECTION_KEYS = {
    "dataset": {
        "kind", "name", "manifest", "crop_size", "resize_short_side",
        "num_views", "allow_hflip", "test_time_augment",
        "num_images", "image_size", "distortion", "severity_levels",
    },
    "model": {
        "backbone", "stage_channels", "projection_width", "reg_widths",
        "cls_widths", "bin_width", "pretrained", "weights_path",
        "freeze_backbone",
    },
    "schedule": {"max_epochs", "tradeoff", "first_epoch", "fixed_weights"},
    "train": {
        "learning_rate", "batch_size", "weight_decay", "dropout", "seed",
        "train_fraction", "validation_fraction", "backbone_lr_scale", "device",
    },
    "protocol": {"kind", "num_runs", "train_dataset", "test_dataset", "variant"},
}


@dataclass(frozen=True)
class DatasetSection:
    """Resolved [dataset] section."""

    kind: str
    name: str
    manifest: str
    crop_size: int
    resize_short_side: int
    num_views: int | None
    allow_hflip: bool
    test_time_augment: str
    synthetic: SyntheticSpec | None


@dataclass(frozen=True)
class RunConfig:
    """Fully validated configuration for one command invocation."""

    dataset: DatasetSection
    model_cfg: ModelConfig
    train_cfg: TrainConfig
    protocol: ProtocolSpec
    train_fraction: float
    validation_fraction: float
    raw: dict


def _check_keys(doc: dict) -> None:
    unknown_sections = set(doc) - set(_SECTION_KEYS)
    if unknown_sections:
        raise ConfigError(f"unknown config section(s): {sorted(unknown_sections)}")
    for section, keys in _SECTION_KEYS.items():
        body = doc.get(section, {})
        if not isinstance(body, dict):
            raise ConfigError(f"section [{section}] must be a table")
        unknown = set(body) - keys
        if unknown:
            raise ConfigError(
                f"unknown key(s) in [{section}]: {sorted(unknown)}"
            )


def _typed(section: dict, key: str, kind, default):
    if key not in section:
        return default
    value = section[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind in (int, float) and isinstance(value, bool):
        raise ConfigError(f"key {key!r}: expected {kind.__name__}, got bool")
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(
            f"key {key!r}: expected {getattr(kind, '__name__', kind)}, "
            f"got {type(value).__name__}"
        )
    return value


def _int_list(section: dict, key: str, default: list[int]) -> tuple[int, ...]:
    values = _typed(section, key, list, default)
    if not all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in values):
        raise ConfigError(f"key {key!r}: expected a list of positive integers, got {values}")
    return tuple(values)


def parse_run_config(doc: dict, overrides: dict | None = None) -> RunConfig:
    """Validate a parsed TOML document into a RunConfig."""
    if overrides:
        doc = _apply_overrides(doc, overrides)
    _check_keys(doc)

    ds = doc.get("dataset", {})
    name = _typed(ds, "name", str, "")
    preset = DATASET_PRESETS.get(name.lower(), {})
    kind = _typed(ds, "kind", str, "synthetic" if name == "synthetic" else "manifest")
    if kind not in ("manifest", "synthetic"):
        raise ConfigError(f"dataset.kind must be 'manifest' or 'synthetic', got {kind!r}")

    synthetic = None
    if kind == "synthetic":
        synthetic = SyntheticSpec(
            num_images=_typed(ds, "num_images", int, 32),
            image_size=_typed(ds, "image_size", int, 64),
            distortion=_typed(ds, "distortion", str, "gaussian_blur"),
            severity_levels=_typed(ds, "severity_levels", int, 7),
            seed=_typed(doc.get("train", {}), "seed", int, 0),
        )
        name = name or "synthetic"

    toy_run = kind == "synthetic"
    dataset = DatasetSection(
        kind=kind,
        name=name,
        manifest=_typed(ds, "manifest", str, ""),
        crop_size=_typed(ds, "crop_size", int, 56 if toy_run else 224),
        resize_short_side=_typed(ds, "resize_short_side", int, 64 if toy_run else 256),
        num_views=_typed(ds, "num_views", int, None),
        allow_hflip=_typed(ds, "allow_hflip", bool, True),
        test_time_augment=_typed(ds, "test_time_augment", str, MULTI_CROP),
        synthetic=synthetic,
    )

    model = doc.get("model", {})
    backbone_kind = _typed(model, "backbone", str, TOY_CNN if toy_run else RESNET50)
    if backbone_kind == TOY_CNN:
        channels = _int_list(model, "stage_channels", [8, 16])
        backbone = BackboneSpec(kind=TOY_CNN, stage_channels=channels, pretrained=False)
    elif backbone_kind == RESNET50:
        backbone = BackboneSpec(
            kind=RESNET50,
            pretrained=_typed(model, "pretrained", bool, True),
            weights_path=_typed(model, "weights_path", str, ""),
        )
    else:
        raise ConfigError(f"unknown backbone {backbone_kind!r}")

    bin_width = _typed(model, "bin_width", float, 0.2)
    num_levels = BinningConfig(w=bin_width, y_min=0.0, y_max=1.0).num_levels
    train = doc.get("train", {})
    model_cfg = ModelConfig(
        backbone=backbone,
        projection_width=_typed(model, "projection_width", int, 16 if toy_run else 256),
        reg_widths=_int_list(model, "reg_widths",
                             [64, 32, 16] if toy_run else [512, 256, 128]),
        cls_widths=_int_list(model, "cls_widths",
                             [64, 32] if toy_run else [512, 256]),
        num_levels=num_levels,
        dropout=_typed(train, "dropout", float, 0.1),
        freeze_backbone=_typed(model, "freeze_backbone", bool, False),
    )

    schedule = doc.get("schedule", {})
    fixed = schedule.get("fixed_weights")
    if fixed is not None:
        if not isinstance(fixed, list) or len(fixed) != 2 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in fixed
        ):
            raise ConfigError(f"fixed_weights needs two numbers, got {fixed!r}")
        fixed = (float(fixed[0]), float(fixed[1]))

    num_views = dataset.num_views
    if num_views is None:
        num_views = preset.get("num_views", 5)
    train_cfg = TrainConfig(
        learning_rate=_typed(train, "learning_rate", float,
                             preset.get("learning_rate", 2e-3 if toy_run else 3e-4)),
        batch_size=_typed(train, "batch_size", int,
                          preset.get("batch_size", 16 if toy_run else 12)),
        max_epochs=_typed(schedule, "max_epochs", int, 50 if toy_run else 100),
        tradeoff=_typed(schedule, "tradeoff", float,
                        preset.get("tradeoff", DEFAULT_TRADEOFF)),
        weight_decay=_typed(train, "weight_decay", float, 1e-4),
        seed=_typed(train, "seed", int, 0),
        dataset=name,
        crop_size=dataset.crop_size,
        num_views=num_views,
        allow_hflip=dataset.allow_hflip,
        resize_short_side=dataset.resize_short_side,
        backbone_lr_scale=_typed(train, "backbone_lr_scale", float, 1.0),
        first_epoch=_typed(schedule, "first_epoch", int, 0),
        fixed_weights=fixed,
        bin_width=bin_width,
        test_time_augment=dataset.test_time_augment,
        device=_typed(train, "device", str, "cpu"),
    )

    proto = doc.get("protocol", {})
    protocol = ProtocolSpec(
        kind=_typed(proto, "kind", str, WITHIN_DATASET),
        train_dataset=_typed(proto, "train_dataset", str, name),
        test_dataset=_typed(proto, "test_dataset", str, ""),
        num_runs=_typed(proto, "num_runs", int, 1),
        variant=_typed(proto, "variant", str, PROGRESSIVE),
    )

    train_fraction = _typed(train, "train_fraction", float, 0.8)
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
    validation_fraction = _typed(train, "validation_fraction", float, 0.0)
    if not 0.0 <= validation_fraction < 1.0:
        raise ConfigError(
            f"validation_fraction must be in [0, 1), got {validation_fraction}"
        )
    return RunConfig(
        dataset=dataset,
        model_cfg=model_cfg,
        train_cfg=train_cfg,
        protocol=protocol,
        train_fraction=train_fraction,
        validation_fraction=validation_fraction,
        raw=doc,
    )


def load_run_config(path: str | Path, overrides: list[str] | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parse_run_config(doc, parse_overrides(overrides or []))


def parse_overrides(pairs: list[str]) -> dict:
    """Parse ``section.key=value`` strings; values use TOML literal syntax."""
    out: dict = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form section.key=value")
        dotted, value = pair.split("=", 1)
        parts = dotted.strip().split(".")
        if len(parts) != 2:
            raise ConfigError(f"override key {dotted!r} must be section.key")
        section, key = parts[0].strip(), parts[1].strip()
        try:
            parsed = tomllib.loads(f"v = {value.strip()}")["v"]
        except tomllib.TOMLDecodeError:
            parsed = value.strip()
        out.setdefault(section, {})[key] = parsed
    return out


def _apply_overrides(doc: dict, overrides: dict) -> dict:
    merged = {k: dict(v) if isinstance(v, dict) else v for k, v in doc.items()}
    for section, body in overrides.items():
        merged.setdefault(section, {})
        merged[section].update(body)
    return merged


def dataset_root() -> Path:
    return Path(os.environ.get(DATASET_ROOT_ENV, "."))


def resolve_manifest(
    dataset: DatasetSection, workdir: str | Path
) -> DatasetManifest:
    """Locate or, for synthetic datasets, generate the manifest."""
    if dataset.kind == "synthetic":
        out_dir = Path(workdir) / f"{dataset.name}-data"
        manifest, _ = make_synthetic(dataset.synthetic, out_dir, name=dataset.name)
        return manifest
    if dataset.manifest:
        return load_manifest(dataset.manifest)
    if dataset.name:
        return load_manifest(dataset_root() / dataset.name / "manifest.csv")
    raise ConfigError("dataset section needs either a manifest path or a name")


def resolve_named_manifest(name_or_path: str) -> DatasetManifest:
    """Resolve a protocol dataset reference: CSV path or $DATASET_ROOT name."""
    if name_or_path.endswith(".csv"):
        return load_manifest(name_or_path)
    return load_manifest(dataset_root() / name_or_path / "manifest.csv")
