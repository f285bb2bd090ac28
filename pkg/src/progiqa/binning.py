"""Quality-level binning: map scalar scores to discrete quality categories.

The score range [y_min, y_max] is partitioned into half-open intervals of
width ``w``; the number of categories is floor((y_max - y_min) / w).
The last interval is closed on the right, and when the range is not an
exact multiple of ``w`` the residual tail is merged into the top level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ScoreOutOfRangeError


@dataclass(frozen=True)
class BinningConfig:
    """Partition of [y_min, y_max] into quality levels of width ``w``."""

    w: float = 0.2
    y_min: float = 0.0
    y_max: float = 1.0

    def __post_init__(self):
        if self.w <= 0:
            raise ConfigError(f"bin width must be positive, got {self.w}")
        if self.y_max <= self.y_min:
            raise ConfigError(
                f"score range is empty: [{self.y_min}, {self.y_max}]"
            )
        if self.w > self.y_max - self.y_min:
            raise ConfigError(
                f"bin width {self.w} exceeds score range "
                f"{self.y_max - self.y_min}"
            )
        if self.num_levels < 2:
            raise ConfigError(
                f"binning yields {self.num_levels} level(s); need at least 2"
            )

    @property
    def num_levels(self) -> int:
        return num_categories_of(self.w, self.y_min, self.y_max)


def num_categories_of(w: float, y_min: float, y_max: float) -> int:
    if w <= 0:
        raise ConfigError(f"bin width must be positive, got {w}")
    return int(math.floor(abs(y_max - y_min) / w))


def num_categories(cfg: BinningConfig) -> int:
    """Number of quality levels K defined by the config."""
    return cfg.num_levels


def to_level(score: float, cfg: BinningConfig) -> int:
    """Map a score to its 1-based quality level.

    Level c covers [y_min + (c-1)w, y_min + cw); the top level additionally
    absorbs the residual tail and is closed at y_max. Boundary membership is
    resolved against the float-computed boundaries themselves, so
    ``y_min + c*w`` always lands in level c+1 regardless of rounding in the
    division.
    """
    if not (cfg.y_min <= score <= cfg.y_max):
        raise ScoreOutOfRangeError(
            f"score {score} outside [{cfg.y_min}, {cfg.y_max}]"
        )
    c = int(math.floor((score - cfg.y_min) / cfg.w))
    while c > 0 and score < cfg.y_min + c * cfg.w:
        c -= 1
    while score >= cfg.y_min + (c + 1) * cfg.w:
        c += 1
    return min(c, cfg.num_levels - 1) + 1


def to_levels(scores, cfg: BinningConfig) -> list[int]:
    """Vector form of :func:`to_level`, preserving order."""
    return [to_level(float(s), cfg) for s in scores]


def to_one_hot(level: int, num_levels: int) -> np.ndarray:
    """One-hot encode a 1-based level into a float64 vector of length K."""
    if not 1 <= level <= num_levels:
        raise ScoreOutOfRangeError(
            f"level {level} outside 1..{num_levels}"
        )
    vec = np.zeros(num_levels, dtype=np.float64)
    vec[level - 1] = 1.0
    return vec
