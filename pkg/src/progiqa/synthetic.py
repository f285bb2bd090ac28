"""Procedural image dataset with severity-graded distortions.

A desk-scale stand-in for the licensed IQA datasets: base images are
random compositions of smooth gradients, shapes, and texture; each is
degraded at one of severity_levels + 1 strengths by blur, additive noise,
or JPEG recompression. Ground-truth quality is linear in severity
(severity 0 -> score 1.0, max severity -> score 0.0), which is all the
rank metrics need. Everything is deterministic under the seed.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageFilter

from .data import HIGHER_IS_BETTER, DatasetManifest, write_manifest
from .errors import ConfigError

GAUSSIAN_BLUR = "gaussian_blur"
GAUSSIAN_NOISE = "gaussian_noise"
JPEG_LIKE = "jpeg_like"
DISTORTIONS = (GAUSSIAN_BLUR, GAUSSIAN_NOISE, JPEG_LIKE)


@dataclass(frozen=True)
class SyntheticSpec:
    """Size, distortion family, and severity grid of a generated dataset."""

    num_images: int = 32
    image_size: int = 64
    distortion: str = GAUSSIAN_BLUR
    severity_levels: int = 7
    seed: int = 0

    def __post_init__(self):
        if self.num_images < 1:
            raise ConfigError(f"num_images must be >= 1, got {self.num_images}")
        if self.image_size < 8:
            raise ConfigError(f"image_size must be >= 8, got {self.image_size}")
        if self.distortion not in DISTORTIONS:
            raise ConfigError(
                f"unknown distortion {self.distortion!r}; expected one of {DISTORTIONS}"
            )
        if self.severity_levels < 1:
            raise ConfigError(
                f"severity_levels must be >= 1, got {self.severity_levels}"
            )


def _base_image(rng: np.random.Generator, size: int) -> np.ndarray:
    """Random scene: smooth color field + rectangles + circles + texture."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32) / size
    img = np.zeros((size, size, 3), dtype=np.float32)
    for ch in range(3):
        fx, fy = rng.uniform(0.5, 3.0, size=2)
        phase = rng.uniform(0, 2 * np.pi, size=2)
        img[:, :, ch] = 0.5 + 0.25 * np.sin(2 * np.pi * fx * xx + phase[0]) \
            + 0.25 * np.sin(2 * np.pi * fy * yy + phase[1])
    for _ in range(rng.integers(3, 7)):
        color = rng.uniform(0, 1, size=3).astype(np.float32)
        if rng.random() < 0.5:
            x0, y0 = rng.integers(0, size - 4, size=2)
            w, h = rng.integers(4, max(5, size // 2), size=2)
            img[y0 : y0 + h, x0 : x0 + w] = color
        else:
            cx, cy = rng.integers(0, size, size=2)
            r = int(rng.integers(3, max(4, size // 4)))
            mask = (xx * size - cx) ** 2 + (yy * size - cy) ** 2 <= r * r
            img[mask] = color
    img += rng.normal(0.0, 0.06, size=img.shape).astype(np.float32)
    return (np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)


def apply_distortion(
    image: np.ndarray, distortion: str, strength: float, rng: np.random.Generator
) -> np.ndarray:
    """Degrade an 8-bit RGB image; strength 0 returns it untouched."""
    if strength <= 0:
        return image
    size = image.shape[0]
    if distortion == GAUSSIAN_BLUR:
        radius = strength * size / 16.0
        out = Image.fromarray(image).filter(ImageFilter.GaussianBlur(radius))
        return np.asarray(out, dtype=np.uint8)
    if distortion == GAUSSIAN_NOISE:
        noise = rng.normal(0.0, 50.0 * strength, size=image.shape)
        return np.clip(image.astype(np.float32) + noise, 0, 255).astype(np.uint8)
    if distortion == JPEG_LIKE:
        quality = int(round(95 - 90 * strength))
        buf = io.BytesIO()
        Image.fromarray(image).save(buf, format="JPEG", quality=quality)
        buf.seek(0)
        return np.asarray(Image.open(buf).convert("RGB"), dtype=np.uint8)
    raise ConfigError(f"unknown distortion {distortion!r}")


def make_synthetic(
    spec: SyntheticSpec, out_dir: str | Path, name: str | None = None
) -> tuple[DatasetManifest, Path]:
    """Generate images + manifest on disk; returns (manifest, csv path).

    Severities are assigned by cycling through the grid so every level is
    as evenly represented as the image count allows.
    """
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    name = name or f"synthetic-{spec.distortion}"

    rng = np.random.default_rng(spec.seed)
    grid = np.tile(np.arange(spec.severity_levels + 1), spec.num_images)[
        : spec.num_images
    ]
    severities = rng.permutation(grid)

    entries = []
    for idx in range(spec.num_images):
        base = _base_image(rng, spec.image_size)
        strength = severities[idx] / spec.severity_levels
        distorted = apply_distortion(base, spec.distortion, strength, rng)
        path = images_dir / f"img_{idx:04d}.png"
        Image.fromarray(distorted).save(path, format="PNG")
        score = 1.0 - severities[idx] / spec.severity_levels
        entries.append((str(path.resolve()), float(score)))

    manifest = DatasetManifest(
        name=name,
        entries=tuple(entries),
        score_polarity=HIGHER_IS_BETTER,
        raw_min=0.0,
        raw_max=1.0,
        num_views=5,
    )
    csv_path = write_manifest(manifest, out_dir / "manifest.csv")
    return manifest, csv_path
