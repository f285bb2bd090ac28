"""Rank- and linear-correlation metrics and method-rank aggregation.

``srcc`` uses fractional (average) ranks so tied predictions degrade
gracefully; on tie-free inputs it takes the classic squared-rank-difference
closed form, which is algebraically identical there. ``plcc`` is the plain
sample Pearson correlation. ``rank_methods`` aggregates multi-dataset result
tables into per-method average ranks using competition ("min") ranking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import UndefinedCorrelationError

# Per-dataset result cell: (srcc, plcc).
ResultTable = Mapping[str, Mapping[str, tuple[float, float]]]


@dataclass(frozen=True)
class PairedScores:
    """A subjective score vector paired with model predictions."""

    subjective: np.ndarray
    predicted: np.ndarray

    def __post_init__(self):
        subj = np.asarray(self.subjective, dtype=np.float64)
        pred = np.asarray(self.predicted, dtype=np.float64)
        object.__setattr__(self, "subjective", subj)
        object.__setattr__(self, "predicted", pred)
        if subj.ndim != 1 or pred.ndim != 1:
            raise ValueError("paired scores must be 1-D vectors")
        if subj.shape != pred.shape:
            raise ValueError(
                f"length mismatch: {subj.shape[0]} subjective vs "
                f"{pred.shape[0]} predicted"
            )
        if subj.shape[0] < 2:
            raise ValueError("need at least 2 paired scores")
        if not (np.all(np.isfinite(subj)) and np.all(np.isfinite(pred))):
            raise ValueError("paired scores must be finite")


def fractional_ranks(values: Sequence[float]) -> np.ndarray:
    """Average ranks (1-based); tied values share the mean of their ranks."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt(np.dot(xc, xc) * np.dot(yc, yc))
    if denom == 0.0:
        raise UndefinedCorrelationError(
            "correlation undefined: at least one vector is constant"
        )
    return float(np.dot(xc, yc) / denom)


def _has_ties(x: np.ndarray) -> bool:
    return len(np.unique(x)) < len(x)


def srcc(pairs: PairedScores) -> float:
    """Spearman rank-order correlation, in [-1, 1]."""
    subj, pred = pairs.subjective, pairs.predicted
    if _has_ties(subj) or _has_ties(pred):
        return _pearson(fractional_ranks(subj), fractional_ranks(pred))
    return srcc_closed_form(pairs)


def srcc_closed_form(pairs: PairedScores) -> float:
    """Tie-free Spearman closed form: 1 - 6*sum(d^2) / (n*(n^2-1)).

    Assumes distinct values in each vector; with ties this diverges from
    the fractional-rank value, so :func:`srcc` only routes tie-free input
    here.
    """
    subj, pred = pairs.subjective, pairs.predicted
    n = len(subj)
    d = fractional_ranks(subj) - fractional_ranks(pred)
    return float(1.0 - 6.0 * np.dot(d, d) / (n * (n * n - 1)))


def plcc(pairs: PairedScores) -> float:
    """Sample Pearson linear correlation, in [-1, 1]."""
    return _pearson(pairs.subjective, pairs.predicted)


def competition_ranks(values: Sequence[float]) -> list[int]:
    """Rank descending with ties sharing the better (smaller) rank.

    The best value gets rank 1; k-way ties all receive the rank of their
    first occupant, and the next distinct value is pushed down by k.
    """
    vals = np.asarray(values, dtype=np.float64)
    ranks = []
    for v in vals:
        ranks.append(1 + int(np.sum(vals > v)))
    return ranks


def rank_methods(table: ResultTable) -> dict[str, tuple[float, float]]:
    """Average per-method SRCC and PLCC ranks across dataset columns.

    Within each (dataset, metric) column, methods that report a value are
    competition-ranked (largest value is rank 1); each method's ranks are
    then averaged over the columns it appears in. Methods may omit datasets.
    """
    if not table:
        raise ValueError("empty result table")
    datasets: list[str] = []
    for per_dataset in table.values():
        for name in per_dataset:
            if name not in datasets:
                datasets.append(name)

    # rank_sums[method] = [srcc_rank_sum, plcc_rank_sum, n_columns]
    rank_sums = {method: [0.0, 0.0, 0] for method in table}
    for dataset in datasets:
        present = [m for m in table if dataset in table[m]]
        for metric_idx in range(2):
            column = [table[m][dataset][metric_idx] for m in present]
            if any(not -1.0 <= v <= 1.0 for v in column):
                raise ValueError(
                    f"correlation outside [-1, 1] in column {dataset}"
                )
            for method, rank in zip(present, competition_ranks(column)):
                rank_sums[method][metric_idx] += rank
        for method in present:
            rank_sums[method][2] += 1

    averages = {}
    for method, (srcc_sum, plcc_sum, n_cols) in rank_sums.items():
        if n_cols == 0:
            raise ValueError(f"method {method!r} has no dataset results")
        averages[method] = (srcc_sum / n_cols, plcc_sum / n_cols)
    return averages
