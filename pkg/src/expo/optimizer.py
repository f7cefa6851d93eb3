"""The EXPO loop: prompt the agent, score the meta-prompt, retrain, reweight, resample.

The loop itself (:class:`ExpoOptimizer`) is policy-agnostic. Which arm is
played next comes from an *arm selector*; which exemplars are shown comes from
a *sequence selector*. EXPO pairs :class:`Exp3ArmSelector` with the task's
fixed heuristic; baselines and EXPO-ES swap one or the other.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import ActionRecord, Exemplar, ExemplarSequence, PromptDomain, RunTrace, render_meta_prompt
from .embedding import EmbeddingCache
from .estimator import MlpParams, ScoreNetwork
from .sampler import CumulativeScores, accumulate, distribution, sample

logger = logging.getLogger(__name__)

PARSE_RETRIES = 3


@dataclass
class RunStreams:
    """Independent generators for each consumer of randomness in one repetition."""

    env: np.random.Generator
    warm_start: np.random.Generator
    sampler: np.random.Generator
    exemplar: np.random.Generator
    init: np.random.Generator
    agent_seed: int

    @classmethod
    def from_seed(cls, seed, repeat: int = 0, instance_seed: int | None = None) -> "RunStreams":
        """Spawn the sub-streams of repetition ``(seed, repeat)``.

        With ``instance_seed`` the warm-start stream is shared by every
        repetition of a setting instead of varying with the seed.
        """
        root = np.random.SeedSequence([int(seed), int(repeat)])
        env, warm, samp, ex, init, agent = root.spawn(6)
        if instance_seed is not None:
            warm = np.random.SeedSequence([int(instance_seed), 1])
        return cls(
            np.random.default_rng(env), np.random.default_rng(warm), np.random.default_rng(samp),
            np.random.default_rng(ex), np.random.default_rng(init), int(agent.generate_state(1)[0]),
        )


class ScoreLedger:
    """(embedding, prompt score) rows used as the score network's training set."""

    def __init__(self):
        self._x: list[np.ndarray] = []
        self._y: list[float] = []

    def __len__(self) -> int:
        return len(self._y)

    def add(self, x, score: float) -> None:
        x = np.asarray(x, dtype=np.float64)
        if self._x and x.shape != self._x[0].shape:
            raise ValueError(f"embedding dim {x.shape} differs from ledger dim {self._x[0].shape}")
        if not np.isfinite(score):
            raise ValueError("prompt score must be finite")
        self._x.append(x)
        self._y.append(float(score))

    @property
    def X(self) -> np.ndarray:
        return np.stack(self._x)

    @property
    def y(self) -> np.ndarray:
        return np.asarray(self._y)


class DomainFeatures:
    """Per-arm inputs ``g(D) ⊕ g(I)`` without materialising the ``k x 2d`` matrix.

    Predictions for every arm reuse the split of the first layer into its
    description and instruction halves, which is what makes 101 x 101 domains
    with 3072-dim embeddings tractable.
    """

    def __init__(self, desc_emb: np.ndarray, instr_emb: np.ndarray):
        self.desc = np.asarray(desc_emb, dtype=np.float64)
        self.instr = np.asarray(instr_emb, dtype=np.float64)

    @classmethod
    def from_domain(cls, domain: PromptDomain, cache: EmbeddingCache) -> "DomainFeatures":
        return cls(cache.embed_many(d.text for d in domain.descriptions),
                   cache.embed_many(i.text for i in domain.instructions))

    @classmethod
    def from_matrix(cls, X) -> "DomainFeatures":
        """Wrap explicit per-arm rows (a k x 1 layout with no instruction half)."""
        X = np.asarray(X, dtype=np.float64)
        return cls(X, np.zeros((1, 0)))

    @property
    def k(self) -> int:
        return self.desc.shape[0] * self.instr.shape[0]

    @property
    def dim(self) -> int:
        return self.desc.shape[1] + self.instr.shape[1]

    def row(self, index: int) -> np.ndarray:
        d, i = divmod(index, self.instr.shape[0])
        return np.concatenate([self.desc[d], self.instr[i]])

    def predict_all(self, params: MlpParams) -> np.ndarray:
        dd = self.desc.shape[1]
        a = self.desc @ params.w1[:, :dd].T + params.b1          # (k1, H)
        b = self.instr @ params.w1[:, dd:].T                      # (k2, H)
        out = np.empty(self.k)
        k2 = self.instr.shape[0]
        for r in range(a.shape[0]):
            hidden = np.maximum(a[r][None, :] + b, 0.0)
            out[r * k2:(r + 1) * k2] = hidden @ params.w2 + params.b2
        return out


def default_network(hidden_width=1536, epochs=500, learning_rate=1e-3, warm_start=True, seed=0) -> ScoreNetwork:
    return ScoreNetwork(hidden_width=hidden_width, epochs=epochs, learning_rate=learning_rate,
                        warm_start=warm_start, random_state=seed)


class Exp3ArmSelector:
    """EXP3 over neural score estimates.

    Each observation appends ``(g(D) ⊕ g(I), score)`` to the ledger, refits the
    network on the whole ledger, adds its prediction for every arm to the
    cumulative estimates and resamples from the exponential weights.
    """

    def __init__(self, features: DomainFeatures, network: ScoreNetwork | None = None, eta: float = 100.0,
                 rng: np.random.Generator | None = None, initial_arm: int = 0):
        self.features = features
        self.network = network if network is not None else default_network()
        self.eta = eta
        self.rng = rng if rng is not None else np.random.default_rng()
        self.initial = initial_arm
        self.ledger = ScoreLedger()
        self.scores = CumulativeScores.zeros(features.k)
        self.last_probs = np.full(features.k, 1.0 / features.k)

    def initial_arm(self) -> int:
        return self.initial

    def observe(self, arm: int, score: float) -> None:
        self.ledger.add(self.features.row(arm), score)
        self.network.fit(self.ledger.X, self.ledger.y)
        self.scores = accumulate(self.scores, self.features.predict_all(self.network.params_))

    def select(self) -> int:
        self.last_probs = distribution(self.scores.s_hat, self.eta)
        return sample(self.last_probs, self.rng)

    def best_arm(self) -> int:
        return int(np.argmax(self.scores.s_hat))

    def params(self) -> MlpParams | None:
        return getattr(self.network, "params_", None)


class HeuristicSequenceSelector:
    """The task's fixed exemplar heuristic (top-20, worst first, or the canonical summary)."""

    def initial(self, task, exemplars):
        return task.heuristic(exemplars), None

    def update(self, task, used: ExemplarSequence, score: float, exemplars):
        return task.heuristic(exemplars), None


def heuristic_exemplars(task, exemplars) -> ExemplarSequence:
    return task.heuristic(exemplars)


def batch_select(agent, prompt: str, B: int, parse, retries: int = PARSE_RETRIES
                 ) -> tuple[list[ActionRecord], ActionRecord]:
    """``B - 1`` exploratory calls at temperature 1, then one scoring call at temperature 0.

    The scoring call is retried up to ``retries`` extra times while its reply
    does not parse.
    """
    if B < 1:
        raise ValueError("batch size must be >= 1")
    actions = []
    for _ in range(B - 1):
        actions.append(_attempt(agent, prompt, 1.0, parse))
    scoring = _attempt(agent, prompt, 0.0, parse)
    for _ in range(retries):
        if scoring.ok:
            break
        scoring = _attempt(agent, prompt, 0.0, parse)
    actions.append(scoring)
    return actions, scoring


def _attempt(agent, prompt, temperature, parse) -> ActionRecord:
    text = agent.complete(prompt, temperature)
    try:
        return ActionRecord(text, parse(text))
    except ValueError as exc:
        logger.debug("unparseable reply at temperature %s: %s", temperature, exc)
        return ActionRecord(text, None)


@dataclass
class ExpoState:
    iteration: int = 0
    arm: int = 0
    exemplars: list = field(default_factory=list)
    sequence: ExemplarSequence = field(default_factory=ExemplarSequence)
    sequence_id: int | None = None
    best_so_far: float | None = None
    traces: list = field(default_factory=list)
    last_prompt: str = ""


class ExpoOptimizer:
    """Runs the meta-prompt optimization loop for one repetition."""

    def __init__(self, task, agent, domain: PromptDomain, arm_selector, sequence_selector=None,
                 batch_size: int | None = None, streams: RunStreams | None = None,
                 parse_retries: int = PARSE_RETRIES):
        self.task = task
        self.agent = agent
        self.domain = domain
        self.arm_selector = arm_selector
        self.sequence_selector = sequence_selector or HeuristicSequenceSelector()
        self.batch_size = batch_size if batch_size is not None else task.default_batch
        self.streams = streams or RunStreams.from_seed(0)
        self.parse_retries = parse_retries
        exemplars = task.warm_start(self.streams.warm_start)
        seq, seq_id = self.sequence_selector.initial(task, exemplars)
        self.state = ExpoState(arm=arm_selector.initial_arm(), exemplars=exemplars, sequence=seq,
                               sequence_id=seq_id)

    @property
    def traces(self) -> list[RunTrace]:
        return self.state.traces

    def step(self) -> RunTrace:
        st = self.state
        arm = self.domain.arm(st.arm)
        prompt = render_meta_prompt(self.domain, arm, st.sequence, self.task.template, self.task.context())
        st.last_prompt = prompt.text
        batch, scoring = batch_select(self.agent, prompt.text, self.batch_size, self.task.parse,
                                      self.parse_retries)
        obs = self.task.observe(scoring, batch, self.streams.env)
        st.exemplars = merge_exemplars(self.task, st.exemplars, obs.new_exemplars)
        st.best_so_far = self.task.update_best(st.best_so_far, obs)
        trace = RunTrace(st.iteration, arm.index, obs.raw_eval, obs.prompt_score, obs.metric,
                         st.best_so_far, exemplar_seq_id=st.sequence_id)
        st.traces.append(trace)

        self.arm_selector.observe(arm.index, obs.prompt_score)
        st.arm = self.arm_selector.select()
        st.sequence, st.sequence_id = self.sequence_selector.update(
            self.task, st.sequence, obs.prompt_score, st.exemplars)
        st.iteration += 1
        return trace

    def run(self, T: int) -> list[RunTrace]:
        for _ in range(T):
            self.step()
        return self.traces

    def best_arm(self) -> int:
        """Arm to replay: the one the sampler would play next."""
        return self.state.arm


def merge_exemplars(task, exemplars: list[Exemplar], new: list[Exemplar]) -> list[Exemplar]:
    """Set union for solution tasks (keyed on the parsed action); append-only for pull logs."""
    key = getattr(task, "key", None)
    if key is None:
        return exemplars + list(new)
    seen = {key(e.action.parsed) for e in exemplars}
    out = list(exemplars)
    for e in new:
        k = key(e.action.parsed)
        if k not in seen:
            seen.add(k)
            out.append(e)
    return out
