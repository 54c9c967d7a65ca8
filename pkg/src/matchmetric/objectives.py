"""Contrastive training objectives over the alignment score.

Binary labels use a hinge: positives are pulled toward score 1, negatives
are penalized only above a margin ``m`` in [-1, 1].  Continuous labels on
[0, S] use a squared error between the rescaled similarity (1 + f) / 2 and
the normalized label y / S.

A positive ``temperature`` divides the score before either loss; the
smoothed score is clamped back into [-1, 1] so the loss scale stays put.
The default temperature of 1 leaves the objectives untouched; 0.07 is the
conventional smoothing preset.
"""

from __future__ import annotations

from dataclasses import dataclass

from .data import BINARY, CONTINUOUS
from .scoring import rescale_sim

SMOOTHING_TEMPERATURE = 0.07

REDUCTIONS = ("mean", "sum")


class ObjectiveError(ValueError):
    """Invalid label, configuration, or batch."""


@dataclass(frozen=True)
class LossConfig:
    margin: float = 0.0
    temperature: float = 1.0
    reduction: str = "mean"

    def __post_init__(self) -> None:
        if not -1.0 <= self.margin <= 1.0:
            raise ObjectiveError(f"margin must lie in [-1, 1], got {self.margin!r}")
        if not self.temperature > 0:
            raise ObjectiveError(f"temperature must be positive, got {self.temperature!r}")
        if self.reduction not in REDUCTIONS:
            raise ObjectiveError(f"reduction must be one of {REDUCTIONS}, got {self.reduction!r}")


def _smoothed(score: float, cfg: LossConfig) -> tuple[float, float]:
    """Temperature-scaled score clamped to [-1, 1], plus d(smoothed)/d(score)."""
    scaled = score / cfg.temperature
    if scaled > 1.0:
        return 1.0, 0.0
    if scaled < -1.0:
        return -1.0, 0.0
    return scaled, 1.0 / cfg.temperature


def binary_loss(score: float, label: float, cfg: LossConfig) -> float:
    """1 - f for positives; max(0, f - m) for negatives."""
    if label not in (0.0, 1.0):
        raise ObjectiveError(f"binary label must be 0 or 1, got {label!r}")
    smoothed, _ = _smoothed(score, cfg)
    if label == 1.0:
        return 1.0 - smoothed
    return max(0.0, smoothed - cfg.margin)


def continuous_loss(score: float, label: float, scale: float, cfg: LossConfig) -> float:
    """Squared error between (1 + f) / 2 and y / S."""
    if not scale > 0:
        raise ObjectiveError(f"scale must be positive, got {scale!r}")
    if not 0.0 <= label <= scale:
        raise ObjectiveError(f"label {label!r} outside [0, {scale!r}]")
    smoothed, _ = _smoothed(score, cfg)
    residual = rescale_sim(smoothed) - label / scale
    return residual * residual


def loss_gradient(kind: str, score: float, label: float, scale: float, cfg: LossConfig) -> float:
    """Analytic dL/df.  At the hinge corner the subgradient is fixed to 0."""
    smoothed, d_smoothed = _smoothed(score, cfg)
    if kind == BINARY:
        if label not in (0.0, 1.0):
            raise ObjectiveError(f"binary label must be 0 or 1, got {label!r}")
        if label == 1.0:
            return -d_smoothed
        return d_smoothed if smoothed > cfg.margin else 0.0
    if kind == CONTINUOUS:
        if not scale > 0:
            raise ObjectiveError(f"scale must be positive, got {scale!r}")
        if not 0.0 <= label <= scale:
            raise ObjectiveError(f"label {label!r} outside [0, {scale!r}]")
        residual = rescale_sim(smoothed) - label / scale
        return residual * d_smoothed
    raise ObjectiveError(f"unknown loss kind {kind!r}")


def batch_loss(
    pairs: list[tuple[float, float]],
    kind: str,
    cfg: LossConfig,
    scale: float = 1.0,
) -> tuple[float, list[float]]:
    """Reduce per-pair losses over a batch; gradients scale with the reduction."""
    if not pairs:
        raise ObjectiveError("batch is empty")
    losses = []
    grads = []
    for score, label in pairs:
        if kind == BINARY:
            losses.append(binary_loss(score, label, cfg))
        elif kind == CONTINUOUS:
            losses.append(continuous_loss(score, label, scale, cfg))
        else:
            raise ObjectiveError(f"unknown loss kind {kind!r}")
        grads.append(loss_gradient(kind, score, label, scale, cfg))
    if cfg.reduction == "mean":
        factor = 1.0 / len(pairs)
        return sum(losses) * factor, [g * factor for g in grads]
    return sum(losses), grads
