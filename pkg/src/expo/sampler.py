"""Exponential-weight arm sampling over cumulative score estimates."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class CumulativeScores:
    """Running per-arm sums of predicted scores, ``s_hat``, and the number of updates ``t``."""

    s_hat: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, k: int) -> "CumulativeScores":
        return cls(np.zeros(k, dtype=np.float64), 0)

    def __len__(self) -> int:
        return self.s_hat.shape[0]


def accumulate(cs: CumulativeScores, predictions) -> CumulativeScores:
    pred = np.asarray(predictions, dtype=np.float64)
    if pred.shape != cs.s_hat.shape:
        raise ValueError(f"expected {cs.s_hat.shape[0]} predictions, got {pred.shape}")
    if not np.isfinite(pred).all():
        raise ValueError("predictions must be finite")
    return CumulativeScores(cs.s_hat + pred, cs.t + 1)


def distribution(s_hat, eta: float) -> np.ndarray:
    """``p_i ∝ exp(eta * (s_i - max_j s_j))``.

    Subtracting the maximum leaves the distribution unchanged and keeps every
    exponent <= 0, so nothing overflows; very unlikely arms underflow to 0.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    s = np.asarray(getattr(s_hat, "s_hat", s_hat), dtype=np.float64)
    if s.size == 1:
        return np.ones(1)
    z = eta * (s - s.max())
    w = np.exp(z)
    return w / w.sum()


def sample(probs, rng: np.random.Generator) -> int:
    """Inverse-CDF draw; consumes exactly one uniform from ``rng`` (none when k == 1)."""
    p = np.asarray(probs, dtype=np.float64)
    if p.size == 1:
        return 0
    cdf = np.cumsum(p)
    u = rng.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    return min(idx, p.size - 1)


@dataclass
class Exp3Sampler:
    """Convenience holder tying cumulative scores, ``eta`` and a generator together."""

    k: int
    eta: float = 100.0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    def __post_init__(self):
        self.scores = CumulativeScores.zeros(self.k)

    def update(self, predictions) -> np.ndarray:
        self.scores = accumulate(self.scores, predictions)
        return self.probs()

    def probs(self) -> np.ndarray:
        return distribution(self.scores.s_hat, self.eta)

    def draw(self) -> int:
        return sample(self.probs(), self.rng)
