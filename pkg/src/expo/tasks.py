"""Task adapters: how each environment is prompted, parsed, scored and summarised.

A task owns the environment instance plus the per-run mutable state that the
optimization loop needs (for bandits, the pull history). One task object is
used by exactly one run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agent.parsers import parse_mab_dist, parse_trace, parse_wb
from .agent.prompts import (
    join_exemplars,
    load_template,
    lr_exemplar_text,
    mab_context,
    render_mab_summary,
    tsp_exemplar_text,
    tsp_points_text,
)
from .core import ActionRecord, Exemplar, ExemplarSequence, PromptTemplate
from .environments import (
    BernoulliMabEnv,
    LinearRegressionEnv,
    MabHistory,
    PromptScoreConfig,
    TspEnv,
    as_distribution,
    canonical_tour,
    greedy_tour,
    lr_evaluate,
    lr_initial_pairs,
    mab_prompt_score,
    mab_step,
    normalize_prompt_score,
    optimality_gap,
    tour_length,
    tsp_evaluate,
    tsp_initial_routes,
)

MAX_HEURISTIC_EXEMPLARS = 20


@dataclass
class Observation:
    """What one iteration produced, from the task's point of view."""

    raw_eval: float
    prompt_score: float
    metric: float
    new_exemplars: list


class Task:
    name = "task"
    lower_is_better = True
    default_batch = 8

    template: PromptTemplate

    def context(self) -> dict[str, str]:
        return {}

    def warm_start(self, rng) -> list[Exemplar]:
        return []

    def parse(self, text: str):
        raise NotImplementedError

    def heuristic(self, exemplars) -> ExemplarSequence:
        raise NotImplementedError

    def render_sequence(self, items) -> ExemplarSequence:
        raise NotImplementedError

    def observe(self, scoring: ActionRecord, batch: list[ActionRecord], rng) -> Observation:
        raise NotImplementedError

    def update_best(self, best: float | None, obs: Observation) -> float:
        raise NotImplementedError

    def progress(self, best_so_far: float) -> float:
        """Per-iteration value plotted and aggregated across repetitions."""
        return best_so_far

    def to_dict(self) -> dict:
        return {}


class OproTask(Task):
    """Shared machinery for minimisation tasks driven by OPRO-style prompts."""

    lower_is_better = True

    def __init__(self, template: PromptTemplate, b: float, n_warm_start: int = 5,
                 exemplar_cap: int = MAX_HEURISTIC_EXEMPLARS):
        self.template = template
        self.score_cfg = PromptScoreConfig(b)
        self.n_warm_start = n_warm_start
        self.exemplar_cap = exemplar_cap

    def evaluate(self, payload) -> float:
        raise NotImplementedError

    def exemplar_text(self, ex: Exemplar) -> str:
        raise NotImplementedError

    def key(self, payload):
        return payload

    def render_sequence(self, items) -> ExemplarSequence:
        items = tuple(items)
        return ExemplarSequence(items, join_exemplars(self.exemplar_text(e) for e in items))

    def heuristic(self, exemplars) -> ExemplarSequence:
        """The best ``min(cap, n)`` exemplars, worst first so the best sits next to the instruction."""
        top = sorted(exemplars, key=lambda e: e.score)[:self.exemplar_cap]
        return self.render_sequence(sorted(top, key=lambda e: -e.score))

    def observe(self, scoring, batch, rng) -> Observation:
        new = []
        evals = []
        for rec in batch:
            if rec.ok:
                value = self.evaluate(rec.parsed)
                evals.append(value)
                new.append(Exemplar(rec, value))
        if scoring.ok:
            raw = self.evaluate(scoring.parsed)
            score = normalize_prompt_score(raw, self.score_cfg)
        else:
            raw, score = math.nan, 0.0
        return Observation(raw, score, raw, new)

    def update_best(self, best, obs):
        values = [e.score for e in obs.new_exemplars]
        if best is not None:
            values.append(best)
        return min(values) if values else math.inf


class LinearRegressionTask(OproTask):
    name = "lr"

    def __init__(self, env: LinearRegressionEnv, b: float = 10000.0, enhanced: bool = False,
                 n_warm_start: int = 5, exemplar_cap: int = MAX_HEURISTIC_EXEMPLARS):
        super().__init__(load_template("opro_lr_enhanced" if enhanced else "opro_lr"), b, n_warm_start,
                         exemplar_cap)
        self.env = env

    def warm_start(self, rng):
        seed = int(rng.integers(2**31))
        return [Exemplar(ActionRecord(f"[{w}, {b}]", (w, b)), lr_evaluate(self.env, w, b))
                for w, b in lr_initial_pairs(self.n_warm_start, seed)]

    def parse(self, text):
        return parse_wb(text)

    def evaluate(self, payload):
        return lr_evaluate(self.env, *payload)

    def exemplar_text(self, ex):
        w, b = ex.action.parsed
        return lr_exemplar_text(w, b, ex.score)

    def to_dict(self):
        return {"env": self.env.to_dict(), "b": self.score_cfg.b, "template": self.template.name}


class TspTask(OproTask):
    name = "tsp"

    def __init__(self, env: TspEnv, b: float | None = None, enhanced: bool = False, n_warm_start: int = 5,
                 exemplar_cap: int = MAX_HEURISTIC_EXEMPLARS):
        if b is None:
            b = 10.0 * tour_length(env.nodes, greedy_tour(env.nodes))
        super().__init__(load_template("opro_tsp_enhanced" if enhanced else "opro_tsp"), b, n_warm_start,
                         exemplar_cap)
        self.env = env

    def context(self):
        return {"POINTS": tsp_points_text(self.env.nodes)}

    def warm_start(self, rng):
        seed = int(rng.integers(2**31))
        out = []
        for route in tsp_initial_routes(self.env.n_nodes, self.n_warm_start, seed):
            out.append(Exemplar(ActionRecord(f"<trace>{route}</trace>", tuple(route)), tsp_evaluate(self.env, route)))
        return out

    def parse(self, text):
        return tuple(parse_trace(text, self.env.n_nodes))

    def key(self, payload):
        return tuple(canonical_tour(payload))

    def evaluate(self, payload):
        return tsp_evaluate(self.env, payload)

    def exemplar_text(self, ex):
        return tsp_exemplar_text(ex.action.parsed, ex.score)

    def progress(self, best_so_far):
        return optimality_gap(best_so_far, self.env.optimal_length)

    def to_dict(self):
        return {"env": self.env.to_dict(), "b": self.score_cfg.b, "template": self.template.name}


class BanditTask(Task):
    """LLM-as-bandit-policy: the reply is a distribution over buttons, one pull per iteration."""

    name = "mab"
    lower_is_better = True  # cumulative regret
    default_batch = 1

    def __init__(self, env: BernoulliMabEnv, design: str = "bsscd", horizon: int = 100):
        if design not in ("bssnd", "bsscd"):
            raise ValueError(f"unknown bandit prompt design {design!r}")
        self.env = env
        self.design = design
        self.template = load_template(design)
        self.horizon = horizon
        self.history = MabHistory(env.K)
        self.regrets: list[float] = []

    @property
    def arm_names(self):
        return self.env.arm_names

    def context(self):
        return mab_context(self.arm_names, self.horizon, len(self.history.pulls))

    def parse(self, text):
        return tuple(parse_mab_dist(text, self.env.K, self.arm_names))

    def summary(self, order) -> ExemplarSequence:
        names = list(order)
        return ExemplarSequence(tuple(names), render_mab_summary(self.history, names, self.arm_names))

    def render_sequence(self, items) -> ExemplarSequence:
        return self.summary(items)

    def heuristic(self, exemplars) -> ExemplarSequence:
        return self.summary(self.arm_names)

    def rotations(self) -> list[list[str]]:
        """Every cyclic shift of the button order; rotation ``i`` starts with button ``i``."""
        names = self.arm_names
        K = len(names)
        return [[names[(i + p) % K] for p in range(K)] for i in range(K)]

    def observe(self, scoring, batch, rng) -> Observation:
        p = as_distribution(scoring.parsed, self.env.K) if scoring.ok else np.full(self.env.K, 1.0 / self.env.K)
        score = mab_prompt_score(p, self.history)
        arm, reward, regret = mab_step(self.env, p, rng)
        self.history.record(arm, reward)
        self.regrets.append(regret)
        ex = Exemplar(ActionRecord(scoring.raw_text, (arm, reward)), float(reward))
        return Observation(float(reward), score, regret, [ex])

    def update_best(self, best, obs):
        """Cumulative regret so far, summed exactly rather than incrementally."""
        return math.fsum(self.regrets)

    def to_dict(self):
        return {"env": self.env.to_dict(), "design": self.design, "horizon": self.horizon}
