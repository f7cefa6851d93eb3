"""Adversarial-bandit selection of exemplar sequences (EXPO-ES).

Candidate sequences change every iteration, so a running sum per candidate
cannot be kept. Instead every trained score network is stored, and a
candidate's cumulative estimate is the sum of all stored networks'
predictions for it. For bandit prompts the candidates are the fixed cyclic
rotations of the button order, and the usual incremental sum is used.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ExemplarSequence
from .estimator import MlpParams, ScoreNetwork, predict
from .optimizer import ScoreLedger
from .sampler import CumulativeScores, accumulate, distribution, sample

POOL_CAP = 30
EMPTY_SEQUENCE_TEXT = "(no exemplars)"
SNAPSHOT_FORMAT_VERSION = 1


@dataclass
class SequenceDomain:
    candidates: list
    generation: str = "random"  # "random" or "cyclic"

    def __len__(self) -> int:
        return len(self.candidates)


@dataclass
class SnapshotHistory:
    """Append-only list of score-network parameters, one per iteration."""

    snapshots: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.snapshots)

    def append(self, params: MlpParams) -> None:
        self.snapshots.append(params.copy())

    def __add__(self, other: "SnapshotHistory") -> "SnapshotHistory":
        return SnapshotHistory(self.snapshots + other.snapshots)

    def save(self, directory) -> None:
        """One versioned parameter file per iteration."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for i, p in enumerate(self.snapshots):
            path = d / f"theta_es_{i:05d}.npz"
            if not path.exists():
                p.save(path)
        (d / "index.json").write_text(json.dumps({"version": SNAPSHOT_FORMAT_VERSION, "count": len(self)}))

    @classmethod
    def load(cls, directory) -> "SnapshotHistory":
        d = Path(directory)
        meta = json.loads((d / "index.json").read_text())
        if meta.get("version") != SNAPSHOT_FORMAT_VERSION:
            raise ValueError(f"unsupported snapshot format {meta.get('version')!r}")
        return cls([MlpParams.load(d / f"theta_es_{i:05d}.npz") for i in range(meta["count"])])


def _pool(exemplars, cap: int = POOL_CAP) -> list:
    return sorted(exemplars, key=lambda e: e.score)[:min(len(exemplars), cap)]


def build_sequence_domain(task, exemplars, L: int, kES: int, heuristic: ExemplarSequence,
                          rng: np.random.Generator, pool_cap: int = POOL_CAP) -> SequenceDomain:
    """``kES - 1`` random ordered draws of ``L`` distinct exemplars plus the heuristic sequence.

    Draws come from the best ``min(n, pool_cap)`` exemplars. With ``L`` at
    least the pool size the domain is just the heuristic sequence.
    """
    if not exemplars:
        return SequenceDomain([])
    pool = _pool(exemplars, pool_cap)
    if L >= len(pool):
        return SequenceDomain([heuristic])
    candidates = []
    for _ in range(kES - 1):
        idx = rng.permutation(len(pool))[:L]
        candidates.append(task.render_sequence(pool[i] for i in idx))
    candidates.append(heuristic)
    return SequenceDomain(candidates)


def cyclic_domain(task) -> SequenceDomain:
    return SequenceDomain([task.summary(order) for order in task.rotations()], generation="cyclic")


def cumulative_sequence_scores(features: np.ndarray, history: SnapshotHistory) -> np.ndarray:
    """Sum over stored networks of their predictions, accumulated snapshot by snapshot."""
    if len(history) == 0:
        raise ValueError("snapshot history is empty")
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    total = np.zeros(features.shape[0])
    for params in history.snapshots:
        total += predict(params, features)
    return total


def select_sequence(scores, eta: float, rng: np.random.Generator) -> int:
    return sample(distribution(scores, eta), rng)


def sequence_text(seq: ExemplarSequence) -> str:
    return seq.rendered_text or EMPTY_SEQUENCE_TEXT


class RandomSequenceSelector:
    """Exemplar-sequence selection over freshly drawn candidate sequences."""

    def __init__(self, embedder, network: ScoreNetwork | None = None, L: int = 20, kES: int = 257,
                 eta: float = 10.0, rng: np.random.Generator | None = None, pool_cap: int = POOL_CAP,
                 max_history: int | None = None):
        self.embedder = embedder
        self.network = network if network is not None else ScoreNetwork(hidden_width=512)
        self.L = L
        self.kES = kES
        self.eta = eta
        self.rng = rng if rng is not None else np.random.default_rng()
        self.pool_cap = pool_cap
        self.max_history = max_history
        self.training = ScoreLedger()
        self.history = SnapshotHistory()
        self.last_domain: SequenceDomain | None = None
        self.last_scores: np.ndarray | None = None

    def initial(self, task, exemplars):
        return task.heuristic(exemplars), None

    def _features(self, domain: SequenceDomain) -> np.ndarray:
        return np.stack([self.embedder.embed(sequence_text(c)) for c in domain.candidates])

    def _active_history(self) -> SnapshotHistory:
        if self.max_history is None:
            return self.history
        return SnapshotHistory(self.history.snapshots[-self.max_history:])

    def update(self, task, used: ExemplarSequence, score: float, exemplars):
        self.training.add(self.embedder.embed(sequence_text(used)), score)
        self.network.fit(self.training.X, self.training.y)
        self.history.append(self.network.params_)
        heuristic = task.heuristic(exemplars)
        if len(exemplars) <= self.L:
            return heuristic, None
        domain = build_sequence_domain(task, exemplars, self.L, self.kES, heuristic, self.rng, self.pool_cap)
        self.last_domain = domain
        if len(domain) == 0:
            return used, None
        if len(domain) == 1:
            self.last_scores = None
            return domain.candidates[0], None
        self.last_scores = cumulative_sequence_scores(self._features(domain), self._active_history())
        j = select_sequence(self.last_scores, self.eta, self.rng)
        return domain.candidates[j], j


class CyclicSequenceSelector:
    """Bandit-prompt variant: the K rotations of the summary order, with incremental cumulative scores."""

    def __init__(self, embedder, network: ScoreNetwork | None = None, eta: float = 10.0,
                 rng: np.random.Generator | None = None):
        self.embedder = embedder
        self.network = network if network is not None else ScoreNetwork(hidden_width=512)
        self.eta = eta
        self.rng = rng if rng is not None else np.random.default_rng()
        self.training = ScoreLedger()
        self.scores: CumulativeScores | None = None

    def initial(self, task, exemplars):
        return task.summary(task.rotations()[0]), 0

    def update(self, task, used: ExemplarSequence, score: float, exemplars):
        domain = cyclic_domain(task)
        if self.scores is None:
            self.scores = CumulativeScores.zeros(len(domain))
        self.training.add(self.embedder.embed(sequence_text(used)), score)
        self.network.fit(self.training.X, self.training.y)
        feats = np.stack([self.embedder.embed(sequence_text(c)) for c in domain.candidates])
        self.scores = accumulate(self.scores, predict(self.network.params_, feats))
        j = select_sequence(self.scores.s_hat, self.eta, self.rng)
        return domain.candidates[j], j
