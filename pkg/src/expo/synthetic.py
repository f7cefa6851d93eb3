"""Arm-level harness with a drifting hidden reward, for comparing arm-selection policies.

No language model is involved: playing arm ``i`` at step ``t`` returns
``mu_t(i) + noise`` where ``mu_t`` is a linear function of the arm's
``g(D) ⊕ g(I)`` features whose weight vector switches at ``switch``. The
policies under test are the same arm selectors the optimizer uses.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import NeuralUCBSelector, UniformArmSelector
from .estimator import ScoreNetwork
from .optimizer import DomainFeatures, Exp3ArmSelector


class DriftingArmEnv:
    """``k1 x k2`` arms with unit-norm synthetic description and instruction features.

    Parameters
    ----------
    k1, k2 : int, default=8
        Number of descriptions and instructions (``k = k1 * k2`` arms).
    dim : int, default=4
        Feature dimension of each half.
    switch : int, default=150
        First step at which the second weight vector is used.
    noise_sd : float, default=0.1
        Standard deviation of Gaussian observation noise.
    seed : int, default=0
    """

    def __init__(self, k1: int = 8, k2: int = 8, dim: int = 4, switch: int = 150, noise_sd: float = 0.1,
                 seed: int = 0):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD41F7]))
        self.switch = switch
        self.noise_sd = noise_sd
        desc = _unit_rows(rng.normal(size=(k1, dim)))
        instr = _unit_rows(rng.normal(size=(k2, dim)))
        self.features = DomainFeatures(desc, instr)
        X = np.stack([self.features.row(i) for i in range(self.features.k)])
        while True:
            u = rng.normal(size=(2, 2 * dim))
            means = np.stack([_rescale(X @ u[0]), _rescale(X @ u[1])])
            if np.argmax(means[0]) != np.argmax(means[1]):
                break
        self.weights = u
        self.means = means

    @property
    def k(self) -> int:
        return self.features.k

    def mean(self, t: int) -> np.ndarray:
        """Expected reward of every arm at step ``t``, in ``[0, 1]``."""
        return self.means[0 if t < self.switch else 1]

    def pull(self, t: int, arm: int, rng: np.random.Generator) -> float:
        return float(self.mean(t)[arm] + self.noise_sd * rng.normal())

    def uniform_pseudo_reward(self, T: int) -> np.ndarray:
        """Exact expected per-step reward of the uniformly random policy."""
        return np.array([self.mean(t).mean() for t in range(T)])

    def best_pseudo_reward(self, T: int) -> np.ndarray:
        return np.array([self.mean(t).max() for t in range(T)])


def _unit_rows(a: np.ndarray) -> np.ndarray:
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def _rescale(v: np.ndarray) -> np.ndarray:
    return (v - v.min()) / (v.max() - v.min())


@dataclass
class PolicyResult:
    arms: np.ndarray
    pseudo_rewards: np.ndarray
    regrets: np.ndarray

    @property
    def cumulative_reward(self) -> float:
        return float(self.pseudo_rewards.sum())

    @property
    def cumulative_regret(self) -> float:
        return float(self.regrets.sum())


def run_policy(env: DriftingArmEnv, selector, T: int, rng: np.random.Generator) -> PolicyResult:
    """Play ``T`` steps. Regret is measured against the per-step best arm."""
    arms = np.empty(T, dtype=np.int64)
    arm = selector.initial_arm()
    for t in range(T):
        arms[t] = arm
        selector.observe(arm, env.pull(t, arm, rng))
        arm = selector.select()
    pseudo = np.array([env.mean(t)[a] for t, a in enumerate(arms)])
    best = env.best_pseudo_reward(T)
    return PolicyResult(arms, pseudo, best - pseudo)


def harness_network(seed: int, hidden_width: int = 32, epochs: int = 100, learning_rate: float = 1e-2) -> ScoreNetwork:
    return ScoreNetwork(hidden_width=hidden_width, epochs=epochs, learning_rate=learning_rate, random_state=seed)


def make_selector(kind: str, env: DriftingArmEnv, seed: int, eta: float = 10.0, beta: float = 1.0, **net):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    if kind == "expo":
        return Exp3ArmSelector(env.features, harness_network(seed, **net), eta=eta, rng=rng)
    if kind == "neural_ucb":
        return NeuralUCBSelector(env.features, harness_network(seed, **net), beta=beta)
    if kind == "uniform_random":
        return UniformArmSelector(env.k, rng)
    raise ValueError(f"unknown policy {kind!r}")


def compare_policies(seeds, T: int = 300, kinds=("expo", "neural_ucb", "uniform_random"), env_kw=None,
                     **selector_kw) -> dict[str, list[PolicyResult]]:
    """Run every policy on the same environment instance and noise stream per seed."""
    out: dict[str, list[PolicyResult]] = {k: [] for k in kinds}
    for seed in seeds:
        env = DriftingArmEnv(seed=seed, **(env_kw or {}))
        for kind in kinds:
            noise = np.random.default_rng(np.random.SeedSequence([seed, 2]))
            out[kind].append(run_policy(env, make_selector(kind, env, seed, **selector_kw), T, noise))
    return out
