"""Per-dataset defaults and full-scale reference results.

The four public IQA datasets come with tuned hyperparameters (learning
rate, batch size, loss tradeoff) and their standard score semantics: LIVE
and CSIQ report DMOS (lower is better), BID and LIVE-C report MOS. The
reference tables hold the published full-scale results of this method for
comparison in reports; desk-scale runs on synthetic data will not land
near them.
"""

from __future__ import annotations

from .data import HIGHER_IS_BETTER, LOWER_IS_BETTER
from .models.assembly import ModelConfig
from .models.backbone import BackboneSpec
from .training import TrainConfig

DEFAULT_TRADEOFF = 0.95

#: Tuned (learning_rate, batch_size, tradeoff) plus dataset conventions.
DATASET_PRESETS: dict[str, dict] = {
    "bid": {
        "learning_rate": 1.09e-4,
        "batch_size": 12,
        "tradeoff": 0.9419,
        "polarity": HIGHER_IS_BETTER,
        "num_views": 5,
    },
    "livec": {
        "learning_rate": 4.72e-4,
        "batch_size": 12,
        "tradeoff": 0.9841,
        "polarity": HIGHER_IS_BETTER,
        "num_views": 10,
    },
    "live": {
        "learning_rate": 3.23e-4,
        "batch_size": 12,
        "tradeoff": 0.9941,
        "polarity": LOWER_IS_BETTER,
        "num_views": 5,
    },
    "csiq": {
        "learning_rate": 4.72e-4,
        "batch_size": 12,
        "tradeoff": 0.8931,
        "polarity": LOWER_IS_BETTER,
        "num_views": 5,
    },
}

#: Published full-scale (srcc, plcc) of this method, median of ten runs.
REFERENCE_WITHIN: dict[str, tuple[float, float]] = {
    "bid": (0.874, 0.894),
    "livec": (0.866, 0.893),
    "live": (0.969, 0.971),
    "csiq": (0.949, 0.951),
}

#: Published full-scale cross-database SRCC, keyed (train, test).
REFERENCE_CROSS: dict[tuple[str, str], float] = {
    ("livec", "bid"): 0.897,
    ("bid", "livec"): 0.782,
    ("live", "csiq"): 0.766,
    ("csiq", "live"): 0.934,
}


def full_scale_model_config(**overrides) -> ModelConfig:
    """Pretrained-backbone architecture defaults."""
    params = dict(
        backbone=BackboneSpec(kind="resnet50", pretrained=True),
        projection_width=256,
        reg_widths=(512, 256, 128),
        cls_widths=(512, 256),
        num_levels=5,
        dropout=0.1,
    )
    params.update(overrides)
    return ModelConfig(**params)


def toy_model_config(**overrides) -> ModelConfig:
    """Small CPU-friendly architecture used for tests and synthetic runs."""
    params = dict(
        backbone=BackboneSpec.toy((8, 16)),
        projection_width=16,
        reg_widths=(64, 32, 16),
        cls_widths=(64, 32),
        num_levels=5,
        dropout=0.1,
    )
    params.update(overrides)
    return ModelConfig(**params)


def toy_train_config(**overrides) -> TrainConfig:
    """Desk-scale training defaults matching :func:`toy_model_config`."""
    params = dict(
        learning_rate=2e-3,
        batch_size=16,
        max_epochs=50,
        tradeoff=DEFAULT_TRADEOFF,
        weight_decay=1e-4,
        seed=0,
        crop_size=56,
        num_views=5,
        resize_short_side=64,
    )
    params.update(overrides)
    return TrainConfig(**params)


def train_config_for_dataset(name: str, **overrides) -> TrainConfig:
    """Tuned TrainConfig for a known dataset; generic defaults otherwise."""
    preset = DATASET_PRESETS.get(name.lower(), {})
    params = dict(
        learning_rate=preset.get("learning_rate", 3e-4),
        batch_size=preset.get("batch_size", 12),
        tradeoff=preset.get("tradeoff", DEFAULT_TRADEOFF),
        num_views=preset.get("num_views", 5),
        dataset=name,
    )
    params.update(overrides)
    return TrainConfig(**params)
