"""Composite training objective: weighted L1 regression + cross-entropy.

The two task losses are combined as ``w_r * L_r + w_c * L_c`` where the
regression weight ramps up linearly over training,

    w_r(t) = (t / (T + 1)) * tradeoff,      w_c(t) = 1 - w_r(t),

so early epochs are dominated by the (easier) quality-level classification
task and late epochs by score regression. ``tradeoff`` in (0, 1] balances
the scale difference between the two losses.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ConfigError

# Probability floor used when cross-entropy is computed from probabilities
# rather than logits; keeps log() finite at zero probability.
PROB_EPS = 1e-12


def task_weights(epoch: int, max_epochs: int, tradeoff: float) -> tuple[float, float]:
    """(regression_weight, classification_weight) at a given epoch.

    Weights always sum to 1; the regression weight is 0 at epoch 0 and
    reaches tradeoff * T / (T + 1) at epoch T, so classification keeps a
    nonzero share throughout.
    """
    if max_epochs < 1:
        raise ConfigError(f"max_epochs must be >= 1, got {max_epochs}")
    if not 0.0 < tradeoff <= 1.0:
        raise ConfigError(f"tradeoff must be in (0, 1], got {tradeoff}")
    if not 0 <= epoch <= max_epochs:
        raise ConfigError(
            f"epoch {epoch} outside 0..{max_epochs}"
        )
    w_r = (epoch / (max_epochs + 1)) * tradeoff
    return w_r, 1.0 - w_r


@dataclass(frozen=True)
class ScheduleState:
    """Loss weights at one epoch of the progressive schedule."""

    epoch: int
    max_epochs: int
    tradeoff: float
    regression_weight: float
    classification_weight: float

    @classmethod
    def at_epoch(cls, epoch: int, max_epochs: int, tradeoff: float) -> "ScheduleState":
        w_r, w_c = task_weights(epoch, max_epochs, tradeoff)
        return cls(epoch, max_epochs, tradeoff, w_r, w_c)


@dataclass(frozen=True)
class FixedWeights:
    """Constant task weights (the fixed-weight ablation variant)."""

    regression_weight: float = 0.5
    classification_weight: float = 0.5


TaskWeights = ScheduleState | FixedWeights


def l1_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute error over the batch."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    if pred.numel() == 0:
        raise ValueError("empty batch")
    return (pred - target).abs().mean()


def ce_loss(probs: torch.Tensor, one_hot: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy from class probabilities and one-hot targets.

    Probabilities are floored at PROB_EPS so a zero at the true class gives
    a large finite loss instead of NaN. Prefer :func:`ce_loss_from_logits`
    when logits are available.
    """
    if probs.shape != one_hot.shape:
        raise ValueError(f"shape mismatch: {tuple(probs.shape)} vs {tuple(one_hot.shape)}")
    if probs.numel() == 0:
        raise ValueError("empty batch")
    return -(one_hot * probs.clamp_min(PROB_EPS).log()).sum(dim=1).mean()


def ce_loss_from_logits(logits: torch.Tensor, one_hot: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy computed from logits via log-softmax (stable path)."""
    if logits.shape != one_hot.shape:
        raise ValueError(f"shape mismatch: {tuple(logits.shape)} vs {tuple(one_hot.shape)}")
    if logits.numel() == 0:
        raise ValueError("empty batch")
    return -(one_hot * torch.log_softmax(logits, dim=1)).sum(dim=1).mean()


def combined_loss(
    pred: torch.Tensor,
    probs: torch.Tensor,
    target: torch.Tensor,
    one_hot: torch.Tensor,
    state: TaskWeights,
) -> torch.Tensor:
    """Weighted sum of the two task losses from probabilities."""
    return (state.regression_weight * l1_loss(pred, target)
            + state.classification_weight * ce_loss(probs, one_hot))


def combined_loss_from_logits(
    pred: torch.Tensor,
    logits: torch.Tensor,
    target: torch.Tensor,
    one_hot: torch.Tensor,
    state: TaskWeights,
) -> torch.Tensor:
    """Weighted sum of the two task losses, classification from logits."""
    return (state.regression_weight * l1_loss(pred, target)
            + state.classification_weight * ce_loss_from_logits(logits, one_hot))
