"""Benchmark tasks: noisy linear regression, Euclidean TSP and Bernoulli bandits.

Every environment is fully determined by its constructor arguments and seed,
and serializes to a small dict from which it is regenerated exactly.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np


class InvalidTour(ValueError):
    pass


class OracleViolation(RuntimeError):
    """A solver reported a tour shorter than the exact optimum."""


# --------------------------------------------------------------------------- linear regression


@dataclass
class LinearRegressionEnv:
    w_true: float
    b_true: float
    n_points: int = 50
    noise_sd: float = 1.0
    seed: int = 0
    xs: np.ndarray = field(init=False, repr=False)
    ys: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        self.xs = rng.uniform(-1.0, 1.0, self.n_points)
        noise = rng.normal(0.0, self.noise_sd, self.n_points) if self.noise_sd > 0 else np.zeros(self.n_points)
        self.ys = self.w_true * self.xs + self.b_true + noise

    @classmethod
    def from_points(cls, xs, ys) -> "LinearRegressionEnv":
        env = cls(0.0, 0.0, n_points=0, noise_sd=0.0)
        env.xs = np.asarray(xs, dtype=np.float64)
        env.ys = np.asarray(ys, dtype=np.float64)
        env.n_points = env.xs.size
        return env

    def to_dict(self) -> dict:
        return {"kind": "lr", "w_true": self.w_true, "b_true": self.b_true, "n_points": self.n_points,
                "noise_sd": self.noise_sd, "seed": self.seed}

    def optimum(self) -> tuple[float, float, float]:
        """Least-squares (w, b) for the sampled data and its MSE."""
        A = np.stack([self.xs, np.ones_like(self.xs)], axis=1)
        (w, b), *_ = np.linalg.lstsq(A, self.ys, rcond=None)
        return float(w), float(b), lr_evaluate(self, w, b)


def lr_evaluate(env: LinearRegressionEnv, w: float, b: float) -> float:
    if not (math.isfinite(w) and math.isfinite(b)):
        raise ValueError("w and b must be finite")
    resid = env.ys - (w * env.xs + b)
    return float(np.mean(resid ** 2))


def lr_initial_pairs(n: int = 5, seed: int = 0, low: int = 10, high: int = 20) -> list[tuple[float, float]]:
    """Warm-start (w, b) pairs, integers drawn uniformly from [low, high]."""
    rng = np.random.default_rng(seed)
    return [(float(w), float(b)) for w, b in rng.integers(low, high + 1, size=(n, 2))]


# --------------------------------------------------------------------------- TSP


@dataclass
class TspEnv:
    n_nodes: int
    seed: int = 0
    coord_range: float = 100.0
    nodes: np.ndarray = field(init=False, repr=False)
    _optimum: tuple | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ValueError("TSP needs at least 2 nodes")
        rng = np.random.default_rng(self.seed)
        r = int(self.coord_range)
        self.nodes = rng.integers(-r, r + 1, size=(self.n_nodes, 2)).astype(np.float64)

    @classmethod
    def from_nodes(cls, nodes) -> "TspEnv":
        nodes = np.asarray(nodes, dtype=np.float64)
        env = cls(max(2, len(nodes)))
        env.nodes = nodes
        env.n_nodes = len(nodes)
        return env

    def to_dict(self) -> dict:
        return {"kind": "tsp", "n_nodes": self.n_nodes, "seed": self.seed, "coord_range": self.coord_range}

    @property
    def optimal_tour(self) -> list[int]:
        return self._solve()[0]

    @property
    def optimal_length(self) -> float:
        return self._solve()[1]

    def _solve(self):
        if self._optimum is None:
            self._optimum = tsp_oracle(self.nodes)
        return self._optimum


def distance_matrix(nodes) -> np.ndarray:
    pts = np.asarray(nodes, dtype=np.float64)
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))


def canonical_tour(tour) -> list[int]:
    """Rotate to start at the smallest node id and orient so the second entry is smaller than the last."""
    t = list(tour)
    i = t.index(min(t))
    t = t[i:] + t[:i]
    if len(t) > 2 and t[1] > t[-1]:
        t = [t[0]] + t[:0:-1]
    return t


def validate_tour(tour, n: int) -> list[int]:
    t = [int(x) for x in tour]
    if len(t) != n or sorted(t) != list(range(n)):
        raise InvalidTour(f"tour must be a permutation of 0..{n - 1}, got {t}")
    return t


def tour_length(nodes, tour) -> float:
    """Closed-tour Euclidean length, summed over the canonical form of the tour.

    Summing in canonical order makes the result bit-identical for every
    rotation and reversal of the same cycle.
    """
    t = canonical_tour(tour)
    pts = np.asarray(nodes, dtype=np.float64)
    total = 0.0
    for a, b in zip(t, t[1:] + t[:1]):
        total += math.hypot(pts[b, 0] - pts[a, 0], pts[b, 1] - pts[a, 1])
    return total


def tsp_evaluate(env: TspEnv, tour) -> float:
    return tour_length(env.nodes, validate_tour(tour, env.n_nodes))


def tsp_oracle(nodes, max_nodes: int = 20) -> tuple[list[int], float]:
    """Exact optimum by dynamic programming over subsets (Held-Karp), node 0 fixed as start."""
    pts = np.asarray(nodes, dtype=np.float64)
    n = len(pts)
    if n > max_nodes:
        raise ValueError(f"exact TSP oracle supports at most {max_nodes} nodes, got {n}")
    if n <= 3:
        tour = list(range(n))
        return tour, tour_length(pts, tour)
    D = distance_matrix(pts)
    m = n - 1  # nodes 1..n-1 live on bits 0..m-1
    full = (1 << m) - 1
    dp = np.full((1 << m, m), np.inf)
    parent = np.full((1 << m, m), -1, dtype=np.int8)
    for j in range(m):
        dp[1 << j, j] = D[0, j + 1]
    masks = np.arange(1 << m)
    popcount = np.array([bin(x).count("1") for x in range(1 << m)])
    inner = D[1:, 1:]
    for size in range(2, m + 1):
        layer = masks[popcount == size]
        for j in range(m):
            bit = 1 << j
            sel = layer[(layer & bit) != 0]
            prev = sel ^ bit
            cand = dp[prev] + inner[:, j][None, :]
            best = np.argmin(cand, axis=1)
            dp[sel, j] = cand[np.arange(sel.size), best]
            parent[sel, j] = best
    closing = dp[full] + D[1:, 0]
    last = int(np.argmin(closing))
    order = []
    mask = full
    while last >= 0:
        order.append(last + 1)
        nxt = int(parent[mask, last])
        mask ^= 1 << last
        last = nxt
    tour = canonical_tour([0] + order[::-1])
    return tour, tour_length(pts, tour)


def tsp_brute_force(nodes) -> tuple[list[int], float]:
    """Exact optimum by enumerating every permutation with node 0 fixed (n <= 10)."""
    pts = np.asarray(nodes, dtype=np.float64)
    n = len(pts)
    if n > 10:
        raise ValueError("enumeration oracle is limited to n <= 10")
    if n <= 3:
        tour = list(range(n))
        return tour, tour_length(pts, tour)
    D = distance_matrix(pts)
    perms = np.array(list(itertools.permutations(range(1, n))), dtype=np.int64)
    lengths = D[0, perms[:, 0]] + D[perms[:, -1], 0]
    for i in range(n - 2):
        lengths = lengths + D[perms[:, i], perms[:, i + 1]]
    best = int(np.argmin(lengths))
    tour = canonical_tour([0] + perms[best].tolist())
    return tour, tour_length(pts, tour)


def greedy_tour(nodes, start: int = 0) -> list[int]:
    """Nearest-neighbour tour from ``start``."""
    D = distance_matrix(nodes)
    n = len(D)
    tour = [start]
    left = set(range(n)) - {start}
    while left:
        cur = tour[-1]
        nxt = min(left, key=lambda j: (D[cur, j], j))
        tour.append(nxt)
        left.remove(nxt)
    return tour


def tsp_initial_routes(n_nodes: int, n: int = 5, seed: int = 0) -> list[list[int]]:
    """Distinct random warm-start routes."""
    rng = np.random.default_rng(seed)
    routes, seen = [], set()
    attempts = 0
    while len(routes) < n and attempts < 1000:
        attempts += 1
        r = rng.permutation(n_nodes).tolist()
        key = tuple(canonical_tour(r))
        if key not in seen:
            seen.add(key)
            routes.append(r)
    return routes


def optimality_gap(solver_best: float, optimum: float) -> float:
    """Percent excess of the best tour found over the optimum."""
    if optimum <= 0:
        raise ValueError("optimum must be positive")
    if solver_best < optimum:
        raise OracleViolation(f"solver tour {solver_best} shorter than optimum {optimum}")
    return (solver_best - optimum) / optimum * 100.0


# --------------------------------------------------------------------------- Bernoulli bandits

BUTTON_COLORS = ("blue", "green", "red", "yellow", "purple")


@dataclass
class BernoulliMabEnv:
    """``K`` Bernoulli arms; arm ``best`` has mean 0.5 + gap/2, the rest 0.5 - gap/2."""

    K: int
    gap: float
    best: int = 0
    seed: int = 0
    means: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= self.best < self.K:
            raise ValueError("best arm out of range")
        if not 0 < self.gap <= 1:
            raise ValueError("gap must lie in (0, 1]")
        self.means = np.full(self.K, 0.5 - self.gap / 2)
        self.means[self.best] = 0.5 + self.gap / 2

    @classmethod
    def hard(cls, seed=0) -> "BernoulliMabEnv":
        return cls(K=5, gap=0.2, seed=seed)

    @classmethod
    def easy(cls, seed=0) -> "BernoulliMabEnv":
        return cls(K=4, gap=0.5, seed=seed)

    @property
    def best_mean(self) -> float:
        return float(self.means.max())

    def instant_regret(self, arm: int) -> float:
        """``mu* - mu_arm``, which is exactly ``gap`` for every suboptimal arm."""
        return 0.0 if arm == self.best else float(self.gap)

    @property
    def arm_names(self) -> list[str]:
        return list(BUTTON_COLORS[: self.K])

    def to_dict(self) -> dict:
        return {"kind": "mab", "K": self.K, "gap": self.gap, "best": self.best, "seed": self.seed}


@dataclass
class MabHistory:
    """Pull counts and reward sums per arm, plus the raw pull log."""

    K: int
    counts: np.ndarray = field(init=False)
    sums: np.ndarray = field(init=False)
    pulls: list = field(default_factory=list)

    def __post_init__(self):
        self.counts = np.zeros(self.K, dtype=np.int64)
        self.sums = np.zeros(self.K, dtype=np.float64)

    def record(self, arm: int, reward: float) -> None:
        self.counts[arm] += 1
        self.sums[arm] += reward
        self.pulls.append((int(arm), float(reward)))

    def empirical_means(self) -> np.ndarray:
        """Per-arm average reward, 0 for arms never pulled."""
        out = np.zeros(self.K)
        pulled = self.counts > 0
        out[pulled] = self.sums[pulled] / self.counts[pulled]
        return out

    def copy(self) -> "MabHistory":
        h = MabHistory(self.K)
        h.counts = self.counts.copy()
        h.sums = self.sums.copy()
        h.pulls = list(self.pulls)
        return h


def as_distribution(p, K: int) -> np.ndarray:
    """Clamp negatives, renormalize; malformed or all-zero input becomes uniform."""
    try:
        arr = np.asarray(p, dtype=np.float64).ravel()
    except (TypeError, ValueError):
        return np.full(K, 1.0 / K)
    if arr.shape != (K,) or not np.isfinite(arr).all():
        return np.full(K, 1.0 / K)
    arr = np.clip(arr, 0.0, None)
    total = arr.sum()
    if total <= 0:
        return np.full(K, 1.0 / K)
    return arr / total


def mab_step(env: BernoulliMabEnv, dist, rng: np.random.Generator) -> tuple[int, int, float]:
    """Draw an arm from ``dist``, then a Bernoulli reward; returns (arm, reward, instant regret)."""
    p = as_distribution(dist, env.K)
    arm = int(rng.choice(env.K, p=p))
    reward = int(rng.random() < env.means[arm])
    return arm, reward, env.instant_regret(arm)


def mab_prompt_score(p, history: MabHistory) -> float:
    """Expected reward of ``p`` under the empirical arm means, ``sum_i p_i mu_hat_i``."""
    p = as_distribution(p, history.K)
    return float(np.dot(p, history.empirical_means()))


def cumulative_regret(env: BernoulliMabEnv, arms) -> float:
    """``sum_t (mu* - mu_{a_t})``, summed exactly."""
    return math.fsum(env.instant_regret(int(a)) for a in arms)


# --------------------------------------------------------------------------- prompt score


@dataclass(frozen=True)
class PromptScoreConfig:
    b: float

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("stabilizing constant b must be positive")


def normalize_prompt_score(evaluation: float, cfg: PromptScoreConfig | float) -> float:
    """``(b - evaluation) / b``: 1 at a perfect evaluation of 0, decreasing linearly."""
    b = cfg.b if isinstance(cfg, PromptScoreConfig) else float(cfg)
    if not b > 0:
        raise ValueError("stabilizing constant b must be positive")
    return (-evaluation + b) / b
