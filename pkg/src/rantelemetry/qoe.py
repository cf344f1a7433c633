"""QoE score over normalized resolution, frame rate, latency and loss.

``QoE = alpha*R + beta*F - gamma*L - delta*P`` where each input is min-max
normalized to [0, 1] over the runs being compared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import EmptySeries, UnnormalizedInput


@dataclass(frozen=True)
class QoeWeights:
    alpha: float = 0.5
    beta: float = 0.6
    gamma: float = 0.7
    delta: float = 0.8

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma, self.delta) <= 0:
            raise ValueError("QoE weights must be positive")


@dataclass(frozen=True)
class QoeInputs:
    resolution: float
    frame_rate: float
    latency: float
    loss: float


def qoe(inputs: QoeInputs, weights: QoeWeights = QoeWeights()) -> float:
    for name in ("resolution", "frame_rate", "latency", "loss"):
        v = getattr(inputs, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v) and 0.0 <= v <= 1.0):
            raise UnnormalizedInput(f"{name}={v!r} is outside [0, 1]")
    return (
        weights.alpha * inputs.resolution
        + weights.beta * inputs.frame_rate
        - weights.gamma * inputs.latency
        - weights.delta * inputs.loss
    )


def normalize(series: Sequence[float]) -> list[float]:
    """Min-max scale to [0, 1]; a constant series maps to all zeros."""
    values = list(series)
    if not values:
        raise EmptySeries("cannot normalize an empty series")
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.0] * len(values)
    span = hi - lo
    return [(v - lo) / span for v in values]


@dataclass(frozen=True)
class RawQoe:
    """Unnormalized per-run aggregates: one-axis resolution, fps, latency ms, loss fraction."""

    resolution: float
    frame_rate: float
    latency_ms: float
    loss: float


def score_runs(raw: Sequence[RawQoe], weights: QoeWeights = QoeWeights()) -> list[float]:
    """Normalize each metric across the runs, then score every run."""
    if not raw:
        raise EmptySeries("no runs to score")
    cols = [normalize([getattr(r, f) for r in raw]) for f in ("resolution", "frame_rate", "latency_ms", "loss")]
    return [qoe(QoeInputs(*vals), weights) for vals in zip(*cols)]
