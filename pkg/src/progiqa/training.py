"""Joint end-to-end optimization of the extractor and both heads.

One run: expand the training samples into augmented views, then for each
epoch refresh the task weights, iterate shuffled mini-batches, and take Adam
steps with weight decay on everything but biases. Per-epoch weights and
losses go to a CSV log; the final (and optionally best-on-validation)
parameters are captured in a self-describing checkpoint.
"""

from __future__ import annotations

import csv
import hashlib
import json
import zlib
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .binning import BinningConfig, to_level
from .data import (
    IMAGENET_MEAN,
    IMAGENET_STD,
    AugmentationSpec,
    ImageSample,
    augment,
    derive_seed,
)
from .errors import ConfigError, DivergenceError
from .losses import (
    FixedWeights,
    ScheduleState,
    TaskWeights,
    ce_loss_from_logits,
    l1_loss,
)
from .metrics import PairedScores, plcc, srcc
from .models.assembly import (
    PROGRESSIVE,
    VARIANTS,
    ModelConfig,
    QualityModel,
    build_model,
)
from .models.backbone import BackboneSpec

LOG_COLUMNS = ("epoch", "lambda1", "lambda2", "loss_r", "loss_c", "loss_total")

MULTI_CROP = "multi_crop"
CENTER_CROP = "center_crop"


@dataclass(frozen=True)
class TrainConfig:
    """Optimization and augmentation settings for one training run."""

    learning_rate: float = 3e-4
    batch_size: int = 12
    max_epochs: int = 100
    tradeoff: float = 0.95
    weight_decay: float = 1e-4
    seed: int = 0
    dataset: str = ""
    optimizer: str = "adam"
    crop_size: int = 224
    num_views: int = 5
    allow_hflip: bool = True
    resize_short_side: int = 256
    backbone_lr_scale: float = 1.0
    first_epoch: int = 0
    fixed_weights: tuple[float, float] | None = None
    bin_width: float = 0.2
    test_time_augment: str = MULTI_CROP
    device: str = "cpu"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.optimizer != "adam":
            raise ConfigError(f"unsupported optimizer {self.optimizer!r}")
        if self.first_epoch not in (0, 1):
            raise ConfigError(f"first_epoch must be 0 or 1, got {self.first_epoch}")
        if self.test_time_augment not in (MULTI_CROP, CENTER_CROP):
            raise ConfigError(
                f"test_time_augment must be {MULTI_CROP!r} or {CENTER_CROP!r}"
            )


@dataclass
class EpochLog:
    epoch: int
    lambda1: float
    lambda2: float
    loss_r: float
    loss_c: float
    loss_total: float

    def row(self) -> list[str]:
        return [
            str(self.epoch),
            repr(self.lambda1),
            repr(self.lambda2),
            repr(self.loss_r),
            repr(self.loss_c),
            repr(self.loss_total),
        ]


@dataclass
class Checkpoint:
    """Everything needed to resume or rerun inference bit-identically."""

    epoch: int
    model_state: dict
    optimizer_state: dict
    schedule: dict
    model_cfg: ModelConfig
    train_cfg: TrainConfig
    variant: str
    fingerprint: str

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(
            {
                "epoch": self.epoch,
                "model_state": self.model_state,
                "optimizer_state": self.optimizer_state,
                "schedule": self.schedule,
                "model_cfg": asdict(self.model_cfg),
                "train_cfg": asdict(self.train_cfg),
                "variant": self.variant,
                "fingerprint": self.fingerprint,
            },
            path,
        )
        return path

    def build(self) -> QualityModel:
        model = build_model(self.model_cfg, self.variant)
        model.load_state_dict(self.model_state)
        model.eval()
        return model


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    model_cfg_dict = dict(payload["model_cfg"])
    raw_backbone = model_cfg_dict.pop("backbone")
    backbone = BackboneSpec(
        kind=raw_backbone["kind"],
        stage_channels=tuple(raw_backbone["stage_channels"]),
        pretrained=raw_backbone["pretrained"],
        weights_path=raw_backbone["weights_path"],
    )
    model_cfg_dict["reg_widths"] = tuple(model_cfg_dict["reg_widths"])
    model_cfg_dict["cls_widths"] = tuple(model_cfg_dict["cls_widths"])
    model_cfg = ModelConfig(backbone=backbone, **model_cfg_dict)
    train_cfg_dict = dict(payload["train_cfg"])
    if train_cfg_dict.get("fixed_weights") is not None:
        train_cfg_dict["fixed_weights"] = tuple(train_cfg_dict["fixed_weights"])
    train_cfg = TrainConfig(**train_cfg_dict)
    return Checkpoint(
        epoch=payload["epoch"],
        model_state=payload["model_state"],
        optimizer_state=payload["optimizer_state"],
        schedule=payload["schedule"],
        model_cfg=model_cfg,
        train_cfg=train_cfg,
        variant=payload["variant"],
        fingerprint=payload["fingerprint"],
    )


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: list[EpochLog]
    best_checkpoint: Checkpoint | None = None
    best_val_srcc: float | None = None
    val_history: list[tuple[int, float, float]] | None = None  # (epoch, srcc, plcc)


def config_fingerprint(model_cfg: ModelConfig, train_cfg: TrainConfig, variant: str) -> str:
    blob = json.dumps(
        {"model": asdict(model_cfg), "train": asdict(train_cfg), "variant": variant},
        sort_keys=True,
        default=str,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def views_to_tensor(samples: list[ImageSample]) -> torch.Tensor:
    """Stack samples into a channel-normalized float tensor (B x 3 x H x W)."""
    batch = np.stack([s.image for s in samples]).astype(np.float32) / 255.0
    batch = (batch - IMAGENET_MEAN) / IMAGENET_STD
    return torch.from_numpy(batch.transpose(0, 3, 1, 2)).contiguous()


def expand_views(samples: list[ImageSample], cfg: TrainConfig) -> list[ImageSample]:
    """Deterministically augment every sample into its training views."""
    views: list[ImageSample] = []
    for idx, sample in enumerate(samples):
        spec = AugmentationSpec(
            crop_size=cfg.crop_size,
            num_views=cfg.num_views,
            allow_hflip=cfg.allow_hflip,
            seed=derive_seed(cfg.seed, idx),
            resize_short_side=cfg.resize_short_side,
        )
        views.extend(augment(sample, spec))
    return views


def _param_groups(model: QualityModel, cfg: TrainConfig) -> list[dict]:
    """Adam groups: weight decay on everything but biases; optional
    backbone learning-rate scaling."""
    backbone = getattr(model.extractor, "backbone", None)
    backbone_param_ids = (
        {id(p) for p in backbone.parameters()} if backbone is not None else set()
    )
    groups: dict[tuple[bool, bool], list] = {}
    for name, param in model.named_parameters():
        if not param.requires_grad:
            continue
        key = (id(param) in backbone_param_ids, name.endswith(".bias"))
        groups.setdefault(key, []).append(param)
    out = []
    for (in_backbone, is_bias), params in groups.items():
        out.append(
            {
                "params": params,
                "lr": cfg.learning_rate * (cfg.backbone_lr_scale if in_backbone else 1.0),
                "weight_decay": 0.0 if is_bias else cfg.weight_decay,
            }
        )
    return out


def _weights_for_epoch(model: QualityModel, cfg: TrainConfig, epoch: int) -> TaskWeights:
    if not model.has_level_head:
        return FixedWeights(1.0, 0.0)
    if cfg.fixed_weights is not None:
        return FixedWeights(*cfg.fixed_weights)
    return ScheduleState.at_epoch(epoch + cfg.first_epoch, cfg.max_epochs, cfg.tradeoff)


def write_log(log: list[EpochLog], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for entry in log:
            writer.writerow(entry.row())
    return path


def read_log(path: str | Path) -> list[EpochLog]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [
            EpochLog(
                epoch=int(row["epoch"]),
                lambda1=float(row["lambda1"]),
                lambda2=float(row["lambda2"]),
                loss_r=float(row["loss_r"]),
                loss_c=float(row["loss_c"]),
                loss_total=float(row["loss_total"]),
            )
            for row in reader
        ]


def train(
    train_samples: list[ImageSample],
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    variant: str = PROGRESSIVE,
    log_path: str | Path | None = None,
    val_samples: list[ImageSample] | None = None,
) -> TrainResult:
    """Run the full optimization and return checkpoint(s) plus the log."""
    if not train_samples:
        raise ConfigError("empty training set")
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    if cfg.dataset:
        foreign = {s.dataset for s in train_samples if s.dataset} - {cfg.dataset}
        if foreign:
            raise ConfigError(
                f"training set for {cfg.dataset!r} contains samples from {sorted(foreign)}"
            )
    device = torch.device(cfg.device)

    torch.manual_seed(cfg.seed)
    model = build_model(model_cfg, variant).to(device)
    optimizer = torch.optim.Adam(_param_groups(model, cfg))
    binning = BinningConfig(w=cfg.bin_width, y_min=0.0, y_max=1.0)

    views = expand_views(train_samples, cfg)
    targets = torch.tensor([[v.scaled_score] for v in views], dtype=torch.float32)
    levels = torch.tensor([to_level(v.scaled_score, binning) for v in views])
    one_hot = torch.nn.functional.one_hot(levels - 1, binning.num_levels).float()

    batch_rng = np.random.default_rng(derive_seed(cfg.seed, len(views), 0xB41C))
    log: list[EpochLog] = []
    best_state = None
    best_val = -np.inf
    val_history: list[tuple[int, float, float]] = []
    fingerprint = config_fingerprint(model_cfg, cfg, variant)

    for epoch in range(cfg.max_epochs):
        weights = _weights_for_epoch(model, cfg, epoch)
        model.train()
        order = batch_rng.permutation(len(views))
        sums = {"r": 0.0, "c": 0.0, "total": 0.0}
        seen = 0
        for start in range(0, len(views), cfg.batch_size):
            batch_idx = order[start : start + cfg.batch_size]
            batch = views_to_tensor([views[i] for i in batch_idx]).to(device)
            score, logits = model(batch)
            loss_r = l1_loss(score, targets[batch_idx].to(device))
            if model.has_level_head:
                loss_c = ce_loss_from_logits(logits, one_hot[batch_idx].to(device))
            else:
                loss_c = torch.zeros((), device=device)
            loss = (
                weights.regression_weight * loss_r
                + weights.classification_weight * loss_c
            )
            if not torch.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch} "
                    f"(loss_r={loss_r.item():.4g}, loss_c={loss_c.item():.4g})"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            n = len(batch_idx)
            sums["r"] += loss_r.item() * n
            sums["c"] += loss_c.item() * n
            sums["total"] += loss.item() * n
            seen += n
        log.append(
            EpochLog(
                epoch=epoch,
                lambda1=weights.regression_weight,
                lambda2=weights.classification_weight,
                loss_r=sums["r"] / seen,
                loss_c=sums["c"] / seen,
                loss_total=sums["total"] / seen,
            )
        )
        if val_samples:
            val_pred = predict(model, val_samples, cfg)
            pairs = PairedScores(
                np.array([s.scaled_score for s in val_samples]), val_pred
            )
            val_srcc = srcc(pairs)
            val_history.append((epoch, val_srcc, plcc(pairs)))
            if val_srcc > best_val:
                best_val = val_srcc
                best_state = {
                    "epoch": epoch,
                    "model_state": {
                        k: v.detach().cpu().clone() for k, v in model.state_dict().items()
                    },
                }

    if log_path is not None:
        write_log(log, log_path)

    def snapshot(epoch: int, model_state: dict, optimizer_state: dict) -> Checkpoint:
        weights = _weights_for_epoch(model, cfg, max(epoch, 0))
        return Checkpoint(
            epoch=epoch,
            model_state=model_state,
            optimizer_state=optimizer_state,
            schedule={
                "epoch": epoch,
                "max_epochs": cfg.max_epochs,
                "tradeoff": cfg.tradeoff,
                "lambda1": weights.regression_weight,
                "lambda2": weights.classification_weight,
            },
            model_cfg=model_cfg,
            train_cfg=cfg,
            variant=variant,
            fingerprint=fingerprint,
        )

    final = snapshot(
        cfg.max_epochs - 1,
        {k: v.detach().cpu().clone() for k, v in model.state_dict().items()},
        optimizer.state_dict(),
    )
    best = None
    if best_state is not None:
        best = snapshot(best_state["epoch"], best_state["model_state"], {})
    return TrainResult(
        checkpoint=final,
        log=log,
        best_checkpoint=best,
        best_val_srcc=None if not val_samples else float(best_val),
        val_history=val_history if val_samples else None,
    )


def _center_crop(sample: ImageSample, crop_size: int) -> ImageSample:
    h, w = sample.image.shape[:2]
    top = (h - crop_size) // 2
    left = (w - crop_size) // 2
    return replace(
        sample,
        image=np.ascontiguousarray(
            sample.image[top : top + crop_size, left : left + crop_size]
        ),
    )


def predict(
    model: QualityModel,
    samples: list[ImageSample],
    cfg: TrainConfig,
    batch_size: int = 64,
) -> np.ndarray:
    """Per-image scalar scores, averaged over each image's test-time views.

    Only the score head drives inference; the level head is ignored. In
    multi-crop mode each image gets the same number of views as training
    (seeded independently of the training stream); center-crop mode uses a
    single deterministic view.
    """
    device = torch.device(cfg.device)
    model = model.to(device)
    model.eval()
    all_views: list[ImageSample] = []
    owner: list[int] = []
    for idx, sample in enumerate(samples):
        if cfg.test_time_augment == CENTER_CROP:
            views = [_center_crop(sample, cfg.crop_size)]
        else:
            # Seed from the image identity, not its batch position, so a
            # sample's views (and score) never depend on its neighbours.
            spec = AugmentationSpec(
                crop_size=cfg.crop_size,
                num_views=cfg.num_views,
                allow_hflip=cfg.allow_hflip,
                seed=derive_seed(
                    cfg.seed, 0x7E57, zlib.crc32(sample.source_path.encode())
                ),
                resize_short_side=cfg.resize_short_side,
            )
            views = augment(sample, spec)
        all_views.extend(views)
        owner.extend([idx] * len(views))

    scores = np.zeros(len(all_views), dtype=np.float64)
    with torch.no_grad():
        for start in range(0, len(all_views), batch_size):
            chunk = all_views[start : start + batch_size]
            x = views_to_tensor(chunk).to(device)
            scores[start : start + len(chunk)] = (
                model.predict_scores(x).cpu().numpy().astype(np.float64)
            )
    owner_arr = np.asarray(owner)
    return np.array(
        [scores[owner_arr == i].mean() for i in range(len(samples))]
    )


def predict_from_checkpoint(
    checkpoint: Checkpoint, samples: list[ImageSample], batch_size: int = 64
) -> np.ndarray:
    return predict(checkpoint.build(), samples, checkpoint.train_cfg, batch_size)
