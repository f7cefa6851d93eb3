"""Comparators: fixed-prompt OPRO, uniform-random arms, NeuralUCB and fixed-prompt replay.

Every baseline is an arm selector plugged into the same
:class:`~expo.optimizer.ExpoOptimizer` loop, so they share the environment,
agent, exemplar and ledger plumbing with EXPO.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import PromptDomain, domain_from_texts
from .optimizer import DomainFeatures, ExpoOptimizer, RunStreams, ScoreLedger, default_network

BASELINE_KINDS = ("opro", "opro_enhanced", "neural_ucb", "uniform_random", "fixed_prompt_replay")
RUN_DIR_SCHEMA = 1


class SchemaError(ValueError):
    """A saved run directory was written with an incompatible layout."""


class FixedArmSelector:
    """Always plays one arm; the network is never trained."""

    def __init__(self, arm: int = 0):
        self.arm = int(arm)

    def initial_arm(self) -> int:
        return self.arm

    def observe(self, arm: int, score: float) -> None:
        pass

    def select(self) -> int:
        return self.arm

    def best_arm(self) -> int:
        return self.arm

    def params(self):
        return None


class UniformArmSelector:
    """Uniformly random arm every iteration, ignoring feedback."""

    def __init__(self, k: int, rng: np.random.Generator | None = None, initial_arm: int = 0):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.rng = rng if rng is not None else np.random.default_rng()
        self.initial = initial_arm
        self.counts = np.zeros(k, dtype=np.int64)

    def initial_arm(self) -> int:
        return self.initial

    def observe(self, arm: int, score: float) -> None:
        self.counts[arm] += 1

    def select(self) -> int:
        return int(self.rng.integers(self.k))

    def best_arm(self) -> int:
        return int(np.argmax(self.counts))

    def params(self):
        return None


def ucb_bonus(t: int, pulls: np.ndarray) -> np.ndarray:
    """Count-based exploration width ``sqrt(log(t + 1) / (1 + pulls))``."""
    return np.sqrt(np.log(t + 1.0) / (1.0 + np.asarray(pulls, dtype=np.float64)))


class NeuralUCBSelector:
    """Optimism over the score network's predictions.

    Picks ``argmax(prediction + beta * bonus)``; ``np.argmax`` breaks ties
    toward the lowest index. With all arms unpulled and an untrained network
    the first arm is arm 0.
    """

    def __init__(self, features: DomainFeatures, network=None, beta: float = 1.0):
        if beta < 0:
            raise ValueError("beta must be >= 0")
        self.features = features
        self.network = network if network is not None else default_network()
        self.beta = beta
        self.ledger = ScoreLedger()
        self.pulls = np.zeros(features.k, dtype=np.int64)
        self.t = 0
        self.last_ucb = None

    def initial_arm(self) -> int:
        return 0

    def observe(self, arm: int, score: float) -> None:
        self.ledger.add(self.features.row(arm), score)
        self.network.fit(self.ledger.X, self.ledger.y)
        self.pulls[arm] += 1
        self.t += 1

    def select(self) -> int:
        mean = self.features.predict_all(self.network.params_)
        self.last_ucb = mean + self.beta * ucb_bonus(self.t, self.pulls)
        return int(np.argmax(self.last_ucb))

    def best_arm(self) -> int:
        return int(np.argmax(self.pulls))

    def params(self):
        return getattr(self.network, "params_", None)


def template_domain(task) -> PromptDomain:
    """One-arm domain holding the task template's own description and instruction."""
    return domain_from_texts([task.template.description], [task.template.instruction])


def run_opro(task, agent, T: int, streams: RunStreams | None = None, domain: PromptDomain | None = None,
             arm: int = 0, batch_size: int | None = None):
    """Fixed description and instruction for the whole run.

    The enhanced variant is the same loop over a task built with
    ``enhanced=True``, which swaps in the enhanced template.
    """
    domain = domain if domain is not None else template_domain(task)
    opt = ExpoOptimizer(task, agent, domain, FixedArmSelector(arm), batch_size=batch_size, streams=streams)
    return opt.run(T)


def run_neural_ucb(task, agent, domain: PromptDomain, features: DomainFeatures, T: int, beta: float = 1.0,
                   streams: RunStreams | None = None, network=None, batch_size: int | None = None):
    sel = NeuralUCBSelector(features, network, beta)
    opt = ExpoOptimizer(task, agent, domain, sel, batch_size=batch_size, streams=streams)
    return opt.run(T)


def save_best_arm(path, domain: PromptDomain, arm_index: int) -> None:
    arm = domain.arm(arm_index)
    payload = {
        "schema": RUN_DIR_SCHEMA,
        "index": arm.index,
        "description": domain.descriptions[arm.desc_id].text,
        "instruction": domain.instructions[arm.instr_id].text,
    }
    Path(path).write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def load_best_arm(run_dir) -> tuple[str, str]:
    """(description, instruction) saved by a previous run."""
    path = Path(run_dir) / "best_arm.txt"
    if not path.exists():
        raise FileNotFoundError(f"no saved arm at {path}")
    payload = json.loads(path.read_text(encoding="utf-8"))
    if payload.get("schema") != RUN_DIR_SCHEMA:
        raise SchemaError(f"run directory schema {payload.get('schema')!r}, expected {RUN_DIR_SCHEMA}")
    return payload["description"], payload["instruction"]


def run_fixed_replay(task, agent, saved, T: int, streams: RunStreams | None = None,
                     batch_size: int | None = None):
    """OPRO with the description and instruction replaced by a saved pair.

    ``saved`` is either a run directory or a ``(description, instruction)`` tuple.
    """
    if isinstance(saved, (str, Path)):
        saved = load_best_arm(saved)
    desc, instr = saved
    return run_opro(task, agent, T, streams, domain_from_texts([desc], [instr]), batch_size=batch_size)
