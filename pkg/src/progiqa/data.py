"""Dataset ingestion: manifests, score scaling, splits, and augmentation.

A dataset is described by a CSV manifest (``path,score`` header) plus a
sidecar TOML giving the score polarity, raw range, and view count. Raw
scores are scaled affinely into [0, 1] with 1 always meaning best quality
(DMOS-style lower-is-better scores are flipped). Training images are
augmented into several random-crop / random-hflip views.
"""

from __future__ import annotations

import csv
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    ConfigError,
    DegenerateScoreRangeError,
    InsufficientDataError,
    InvalidImageError,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

HIGHER_IS_BETTER = "higher_is_better"
LOWER_IS_BETTER = "lower_is_better"

# Channel statistics used to normalize inputs for the pretrained backbone.
IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

TRAIN = "train"
TEST = "test"


@dataclass(frozen=True)
class DatasetManifest:
    """Declarative listing of one dataset: image paths, raw scores, range."""

    name: str
    entries: tuple[tuple[str, float], ...]
    score_polarity: str = HIGHER_IS_BETTER
    raw_min: float = 0.0
    raw_max: float = 1.0
    num_views: int = 5

    def __post_init__(self):
        if self.score_polarity not in (HIGHER_IS_BETTER, LOWER_IS_BETTER):
            raise ConfigError(f"unknown polarity {self.score_polarity!r}")
        if not self.entries:
            raise ConfigError(f"manifest {self.name!r} has no entries")
        if self.raw_max <= self.raw_min:
            raise DegenerateScoreRangeError(
                f"raw score range [{self.raw_min}, {self.raw_max}] is degenerate"
            )
        paths = [p for p, _ in self.entries]
        if len(set(paths)) != len(paths):
            raise ConfigError(f"manifest {self.name!r} has duplicate image paths")
        for path, score in self.entries:
            if not self.raw_min <= score <= self.raw_max:
                raise ConfigError(
                    f"score {score} for {path!r} outside "
                    f"[{self.raw_min}, {self.raw_max}]"
                )

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class ScoreScaler:
    """Affine map from raw scores onto [0, 1] with fixed orientation.

    After scaling, 1 is always best quality: lower-is-better raw scores are
    flipped so the best raw value maps to 1.
    """

    raw_min: float
    raw_max: float
    polarity: str = HIGHER_IS_BETTER

    def __post_init__(self):
        if self.raw_max <= self.raw_min:
            raise DegenerateScoreRangeError(
                f"raw score range [{self.raw_min}, {self.raw_max}] is degenerate"
            )
        if self.polarity not in (HIGHER_IS_BETTER, LOWER_IS_BETTER):
            raise ConfigError(f"unknown polarity {self.polarity!r}")

    @classmethod
    def for_manifest(cls, manifest: DatasetManifest) -> "ScoreScaler":
        return cls(manifest.raw_min, manifest.raw_max, manifest.score_polarity)

    def scale(self, raw: float) -> float:
        unit = (raw - self.raw_min) / (self.raw_max - self.raw_min)
        if self.polarity == LOWER_IS_BETTER:
            unit = 1.0 - unit
        return float(unit)


@dataclass(frozen=True)
class AugmentationSpec:
    """Random-crop / horizontal-flip view generation parameters."""

    crop_size: int = 224
    num_views: int = 5
    allow_hflip: bool = True
    seed: int = 0
    resize_short_side: int = 256

    def __post_init__(self):
        if self.crop_size <= 0:
            raise ConfigError(f"crop_size must be positive, got {self.crop_size}")
        if self.num_views < 1:
            raise ConfigError(f"num_views must be >= 1, got {self.num_views}")


@dataclass
class ImageSample:
    """One decoded image with its scaled score and provenance."""

    image: np.ndarray  # H x W x 3, uint8
    scaled_score: float
    split: str
    source_path: str
    dataset: str = ""

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise InvalidImageError(
                f"{self.source_path!r}: expected HxWx3 image, "
                f"got shape {self.image.shape}"
            )
        if not 0.0 <= self.scaled_score <= 1.0:
            raise ConfigError(
                f"scaled score {self.scaled_score} outside [0, 1]"
            )
        if self.split not in (TRAIN, TEST):
            raise ConfigError(f"unknown split {self.split!r}")


def scale_scores(manifest: DatasetManifest) -> list[float]:
    """Scale every raw score in the manifest into [0, 1], preserving order."""
    scaler = ScoreScaler.for_manifest(manifest)
    return [scaler.scale(score) for _, score in manifest.entries]


def load_manifest(csv_path: str | Path, sidecar_path: str | Path | None = None) -> DatasetManifest:
    """Load a ``path,score`` CSV manifest plus its sidecar TOML config.

    The sidecar defaults to the manifest path with a .toml suffix and must
    provide name, polarity, raw_min, and raw_max (num_views optional).
    Relative image paths are resolved against the manifest's directory.
    """
    csv_path = Path(csv_path)
    if not csv_path.is_file():
        raise ConfigError(f"manifest not found: {csv_path}")
    sidecar = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".toml")
    if not sidecar.is_file():
        raise ConfigError(f"manifest sidecar not found: {sidecar}")

    with open(sidecar, "rb") as fh:
        meta = tomllib.load(fh)
    known = {"name", "polarity", "raw_min", "raw_max", "num_views"}
    unknown = set(meta) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in {sidecar}: {sorted(unknown)}")
    missing = {"name", "polarity", "raw_min", "raw_max"} - set(meta)
    if missing:
        raise ConfigError(f"missing key(s) in {sidecar}: {sorted(missing)}")

    entries = []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["path", "score"]:
            raise ConfigError(
                f"{csv_path}: expected header 'path,score', got {reader.fieldnames}"
            )
        for row in reader:
            path = row["path"].strip()
            resolved = Path(path)
            if not resolved.is_absolute():
                resolved = csv_path.parent / resolved
            entries.append((str(resolved), float(row["score"])))

    return DatasetManifest(
        name=str(meta["name"]),
        entries=tuple(entries),
        score_polarity=str(meta["polarity"]),
        raw_min=float(meta["raw_min"]),
        raw_max=float(meta["raw_max"]),
        num_views=int(meta.get("num_views", 5)),
    )


def write_manifest(manifest: DatasetManifest, csv_path: str | Path) -> Path:
    """Write a manifest CSV and its sidecar TOML next to it.

    Image paths under the manifest's directory are stored relative to it so
    the dataset directory stays relocatable.
    """
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    base = csv_path.parent.resolve()
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "score"])
        for path, score in manifest.entries:
            resolved = Path(path).resolve()
            if resolved.is_relative_to(base):
                path = str(resolved.relative_to(base))
            writer.writerow([path, repr(score)])
    sidecar = csv_path.with_suffix(".toml")
    with open(sidecar, "w", encoding="utf-8") as fh:
        fh.write(f'name = "{manifest.name}"\n')
        fh.write(f'polarity = "{manifest.score_polarity}"\n')
        fh.write(f"raw_min = {manifest.raw_min}\n")
        fh.write(f"raw_max = {manifest.raw_max}\n")
        fh.write(f"num_views = {manifest.num_views}\n")
    return csv_path


def load_image(path: str | Path, crop_size: int, resize_short_side: int = 256) -> np.ndarray:
    """Decode an image to uint8 RGB, upsizing when smaller than the crop.

    Images whose short side is below crop_size are resized so the short side
    equals resize_short_side (aspect preserved) before any cropping happens.
    """
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
    except FileNotFoundError:
        raise ConfigError(f"image not found: {path}") from None
    except Exception as exc:
        raise InvalidImageError(f"cannot decode {path}: {exc}") from exc
    w, h = rgb.size
    if min(w, h) < crop_size:
        scale = resize_short_side / min(w, h)
        new_w, new_h = round(w * scale), round(h * scale)
        rgb = rgb.resize((new_w, new_h), Image.BILINEAR)
    arr = np.asarray(rgb, dtype=np.uint8)
    if min(arr.shape[0], arr.shape[1]) < crop_size:
        raise InvalidImageError(
            f"{path}: {arr.shape[1]}x{arr.shape[0]} still smaller than "
            f"crop {crop_size} after resize policy"
        )
    return arr


def split_dataset(
    manifest: DatasetManifest,
    train_fraction: float,
    seed: int,
    crop_size: int = 224,
    resize_short_side: int = 256,
) -> tuple[list[ImageSample], list[ImageSample]]:
    """Random disjoint train/test partition with decoded images.

    The train side gets round(train_fraction * N) entries (clamped so both
    sides are nonempty); the same seed always reproduces the same membership.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(manifest)
    if n < 2:
        raise InsufficientDataError(
            f"manifest {manifest.name!r} has {n} entries; need at least 2 to split"
        )
    n_train = int(np.floor(train_fraction * n + 0.5))
    n_train = min(max(n_train, 1), n - 1)

    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    scaled = scale_scores(manifest)

    def build(idx: int, split: str) -> ImageSample:
        path, _ = manifest.entries[idx]
        return ImageSample(
            image=load_image(path, crop_size, resize_short_side),
            scaled_score=scaled[idx],
            split=split,
            source_path=path,
            dataset=manifest.name,
        )

    train = [build(i, TRAIN) for i in order[:n_train]]
    test = [build(i, TEST) for i in order[n_train:]]
    return train, test


def load_all(
    manifest: DatasetManifest,
    split: str,
    crop_size: int = 224,
    resize_short_side: int = 256,
) -> list[ImageSample]:
    """Decode every manifest entry under a single split tag."""
    scaled = scale_scores(manifest)
    return [
        ImageSample(
            image=load_image(path, crop_size, resize_short_side),
            scaled_score=scaled[i],
            split=split,
            source_path=path,
            dataset=manifest.name,
        )
        for i, (path, _) in enumerate(manifest.entries)
    ]


def augment(sample: ImageSample, spec: AugmentationSpec) -> list[ImageSample]:
    """Generate num_views random-crop (and maybe hflipped) views of a sample.

    Views inherit the source's score, split, and provenance. The same spec
    (including seed) always yields bit-identical crops and flip decisions.
    """
    h, w = sample.image.shape[:2]
    if h < spec.crop_size or w < spec.crop_size:
        raise InvalidImageError(
            f"{sample.source_path!r}: {w}x{h} smaller than crop {spec.crop_size}"
        )
    rng = np.random.default_rng(spec.seed)
    views = []
    for _ in range(spec.num_views):
        top = int(rng.integers(0, h - spec.crop_size + 1))
        left = int(rng.integers(0, w - spec.crop_size + 1))
        crop = sample.image[top : top + spec.crop_size, left : left + spec.crop_size]
        if spec.allow_hflip and rng.random() < 0.5:
            crop = crop[:, ::-1]
        views.append(replace(sample, image=np.ascontiguousarray(crop)))
    return views


def derive_seed(*parts: int) -> int:
    """Stable child seed from a tuple of integers (for per-sample streams)."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])
