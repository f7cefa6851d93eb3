"""Experiment orchestration: build the pieces a config names, run every repetition, write the run directory.

Run directory layout::

    config.resolved          resolved YAML config
    domain.json              the arm domain used by every repetition
    traces/rep_<tag>.csv     one per repetition (tag = seed, or seed-repeat)
    aggregate.csv            per-iteration mean and standard error of the progress metric
    plot.svg
    best_arm.txt             saved (description, instruction) of the best repetition
    snapshots/rep_<tag>/     score-network parameters (and EXPO-ES history)
    transcript/rep_<tag>.jsonl
    manifest.json            per-repetition status
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agent.domain_gen import generate_domain
from .agent.prompts import load_template
from .agent.providers import (
    BanditSolver,
    LinearRegressionSolver,
    RemoteProvider,
    ScriptedRephraser,
    TranscriptProvider,
    TspSolver,
    keyword_quality,
)
from .baselines import (
    RUN_DIR_SCHEMA,
    FixedArmSelector,
    NeuralUCBSelector,
    UniformArmSelector,
    load_best_arm,
    save_best_arm,
)
from .config import ExperimentConfig
from .core import PromptDomain, domain_from_texts, write_traces
from .embedding import EmbeddingCache, RemoteEmbedder, SyntheticEmbedder
from .environments import BernoulliMabEnv, LinearRegressionEnv, TspEnv
from .estimator import ScoreNetwork
from .expo_es import CyclicSequenceSelector, RandomSequenceSelector
from .optimizer import DomainFeatures, Exp3ArmSelector, ExpoOptimizer, RunStreams
from .tasks import BanditTask, LinearRegressionTask, TspTask

logger = logging.getLogger(__name__)

METRIC_LABELS = {"lr": "best MSE so far", "tsp": "optimality gap (%)", "mab": "cumulative regret"}


# --------------------------------------------------------------------------- builders


def build_task(cfg: ExperimentConfig):
    tp = cfg.task_params
    enhanced = cfg.method == "opro_enhanced"
    if cfg.task == "lr":
        env = LinearRegressionEnv(tp.w_true, tp.b_true, tp.n_points, tp.noise_sd, seed=tp.instance_seed)
        return LinearRegressionTask(env, b=tp.score_b or 10000.0, enhanced=enhanced,
                                    n_warm_start=tp.n_warm_start, exemplar_cap=cfg.exemplar_cap)
    if cfg.task == "tsp":
        env = TspEnv(tp.n_nodes, seed=tp.instance_seed)
        return TspTask(env, b=tp.score_b, enhanced=enhanced, n_warm_start=tp.n_warm_start,
                       exemplar_cap=cfg.exemplar_cap)
    env = BernoulliMabEnv(tp.K, tp.gap, seed=tp.instance_seed)
    return BanditTask(env, design=tp.prompt_design, horizon=tp.horizon or cfg.T)


def build_agent(cfg: ExperimentConfig, task, seed: int):
    pc = cfg.provider
    if pc.kind == "remote":
        return RemoteProvider(pc.endpoint, pc.model, pc.api_key_env, attempts=pc.attempts, timeout=pc.timeout)
    kw = dict(rate=pc.rate, seed=seed, noise=pc.noise,
              quality=keyword_quality(pc.quality_keywords) if pc.quality_keywords else None)
    if cfg.task == "lr":
        w, b, _ = task.env.optimum()
        return LinearRegressionSolver((w, b), **kw)
    if cfg.task == "tsp":
        return TspSolver(task.env.nodes, task.env.optimal_tour, **kw)
    return BanditSolver(task.arm_names, **kw)


def build_rephraser(cfg: ExperimentConfig):
    pc = cfg.provider
    if pc.kind == "remote":
        return RemoteProvider(pc.endpoint, pc.model, pc.api_key_env, attempts=pc.attempts, timeout=pc.timeout)
    return ScriptedRephraser(seed=cfg.task_params.instance_seed)


def build_embedder(cfg: ExperimentConfig):
    ec = cfg.embedding
    if ec.kind == "remote":
        return RemoteEmbedder(ec.endpoint, ec.model, ec.dim, ec.api_key_env)
    return SyntheticEmbedder(dim=ec.dim, seed=0)


def build_domain(cfg: ExperimentConfig) -> PromptDomain:
    """The arm domain shared by all repetitions."""
    if cfg.method == "fixed_prompt_replay":
        return domain_from_texts(*[[t] for t in load_best_arm(cfg.replay_from)])
    template = load_template(cfg.template_name)
    if cfg.method in ("opro", "opro_enhanced") or cfg.domain.source == "template":
        return domain_from_texts([template.description], [template.instruction])
    if cfg.domain.source == "file":
        return PromptDomain.load(cfg.domain.path)
    return generate_domain(build_rephraser(cfg), template.description, template.instruction,
                           cfg.domain.n_rephrase, cfg.domain.temperature)


def _network(width: int, cfg: ExperimentConfig, rng: np.random.Generator) -> ScoreNetwork:
    est = cfg.estimator
    return ScoreNetwork(hidden_width=width, epochs=est.epochs, learning_rate=est.learning_rate,
                        random_state=int(rng.integers(2**31)))


def build_optimizer(cfg: ExperimentConfig, task, agent, domain: PromptDomain, cache: EmbeddingCache,
                    streams: RunStreams) -> ExpoOptimizer:
    method = cfg.method
    seq_sel = None
    if method in ("opro", "opro_enhanced", "fixed_prompt_replay"):
        arm_sel = FixedArmSelector(0)
    elif method == "uniform_random":
        arm_sel = UniformArmSelector(domain.k, streams.sampler)
    else:
        features = DomainFeatures.from_domain(domain, cache)
        net = _network(cfg.estimator.hidden_width, cfg, streams.init)
        if method == "neural_ucb":
            arm_sel = NeuralUCBSelector(features, net, cfg.beta)
        else:
            arm_sel = Exp3ArmSelector(features, net, cfg.eta_desc, streams.sampler)
        if method == "expo_es":
            es_net = _network(cfg.estimator.hidden_width_es, cfg, streams.init)
            if cfg.task == "mab":
                seq_sel = CyclicSequenceSelector(cache, es_net, cfg.eta_exemplar, streams.exemplar)
            else:
                seq_sel = RandomSequenceSelector(cache, es_net, cfg.L, cfg.kES, cfg.eta_exemplar,
                                                 streams.exemplar, cfg.pool_cap, cfg.max_history)
    return ExpoOptimizer(task, agent, domain, arm_sel, seq_sel, batch_size=cfg.B, streams=streams,
                         parse_retries=cfg.parse_retries)


# --------------------------------------------------------------------------- aggregation and plotting


@dataclass
class AggregateCurve:
    mean: np.ndarray
    se: np.ndarray
    n: int

    def __len__(self) -> int:
        return self.mean.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "mean", "se", "n"])
        for i, (m, s) in enumerate(zip(self.mean, self.se)):
            w.writerow([i, repr(float(m)), repr(float(s)), self.n])
        return buf.getvalue()


def aggregate(curves) -> AggregateCurve:
    """Mean and standard error ``sd / sqrt(n)`` (sample sd, ``ddof=1``) per iteration.

    A single curve has zero standard error. Rows are sorted per iteration
    before reduction, so the result does not depend on curve order.
    """
    curves = [np.asarray(c, dtype=np.float64) for c in curves]
    if not curves:
        raise ValueError("nothing to aggregate")
    if len({c.shape for c in curves}) != 1:
        raise ValueError(f"curve lengths differ: {sorted({c.shape[0] for c in curves})}")
    A = np.sort(np.stack(curves), axis=0)
    n = A.shape[0]
    mean = A.mean(axis=0)
    se = A.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(A.shape[1])
    return AggregateCurve(mean, se, n)


def emit_plot(curves, path, ylabel: str = "", title: str = "") -> Path:
    """Line plus shaded ±SE band per curve, written as byte-stable SVG.

    ``curves`` is an :class:`AggregateCurve` or a ``{label: AggregateCurve}``
    mapping for overlays.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if isinstance(curves, AggregateCurve):
        curves = {"": curves}
    if not curves or any(len(c) == 0 for c in curves.values()):
        raise ValueError("cannot plot an empty curve")
    with matplotlib.rc_context({"svg.hashsalt": "expo", "svg.fonttype": "none", "path.simplify": False}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, c in curves.items():
            x = np.arange(len(c))
            (line,) = ax.plot(x, c.mean, label=label or None, linewidth=1.5)
            ax.fill_between(x, c.mean - c.se, c.mean + c.se, color=line.get_color(), alpha=0.25, linewidth=0)
        ax.set_xlabel("iteration")
        if ylabel:
            ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if any(curves.keys()):
            ax.legend()
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


# --------------------------------------------------------------------------- repetitions


def rep_tag(cfg: ExperimentConfig, seed: int, repeat: int) -> str:
    return str(seed) if cfg.repeats == 1 else f"{seed}-{repeat}"


def progress_curve(task, traces) -> list[float]:
    return [task.progress(t.best_so_far) for t in traces]


def run_repetition(cfg: ExperimentConfig, domain: PromptDomain, seed: int, repeat: int, run_dir) -> dict:
    """One isolated repetition; writes its trace and snapshots and returns a summary."""
    run_dir = Path(run_dir)
    tag = rep_tag(cfg, seed, repeat)
    streams = RunStreams.from_seed(seed, repeat, instance_seed=cfg.task_params.instance_seed)
    task = build_task(cfg)
    agent = TranscriptProvider(build_agent(cfg, task, streams.agent_seed), run_dir / "transcript" / f"rep_{tag}.jsonl")
    cache = EmbeddingCache(build_embedder(cfg))
    opt = build_optimizer(cfg, task, agent, domain, cache, streams)
    traces = opt.run(cfg.T)
    write_traces(run_dir / "traces" / f"rep_{tag}.csv", traces)

    snap = run_dir / "snapshots" / f"rep_{tag}"
    snap.mkdir(parents=True, exist_ok=True)
    params = opt.arm_selector.params()
    if params is not None:
        params.save(snap / "theta.npz")
    history = getattr(opt.sequence_selector, "history", None)
    if history is not None and len(history):
        history.save(snap / "es")
    curve = progress_curve(task, traces)
    return {"seed": seed, "repeat": repeat, "tag": tag, "status": "ok", "best_arm": opt.best_arm(),
            "final": curve[-1], "curve": curve}


def _safe_repetition(args) -> dict:
    cfg, domain, seed, repeat, run_dir = args
    try:
        return run_repetition(cfg, domain, seed, repeat, run_dir)
    except Exception as exc:  # reported in the manifest; the run continues
        logger.exception("repetition seed=%s repeat=%s failed", seed, repeat)
        return {"seed": seed, "repeat": repeat, "tag": rep_tag(cfg, seed, repeat), "status": "failed",
                "error": f"{type(exc).__name__}: {exc}"}


@dataclass
class RunResult:
    run_dir: Path
    results: list
    curve: AggregateCurve | None

    @property
    def ok(self) -> bool:
        return all(r["status"] == "ok" for r in self.results)

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 1


def plan(cfg: ExperimentConfig) -> str:
    """Human-readable resolved plan, printed by ``--dry-run``."""
    runs = ", ".join(rep_tag(cfg, s, r) for s, r in cfg.runs())
    return (f"task={cfg.task} method={cfg.method} T={cfg.T} B={cfg.B} repetitions={cfg.repetitions} "
            f"[{runs}] parallelism={cfg.parallelism}\noutput_dir={cfg.output_dir}\n---\n{cfg.dump()}")


def run_experiment(cfg: ExperimentConfig, run_dir=None) -> RunResult:
    cfg.validate()
    run_dir = Path(run_dir or cfg.output_dir)
    for sub in ("traces", "snapshots", "transcript"):
        (run_dir / sub).mkdir(parents=True, exist_ok=True)
    (run_dir / "config.resolved").write_text(cfg.dump(), encoding="utf-8")
    domain = build_domain(cfg)
    domain.save(run_dir / "domain.json")

    jobs = [(cfg, domain, s, r, run_dir) for s, r in cfg.runs()]
    if cfg.parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
            results = list(pool.map(_safe_repetition, jobs))
    else:
        results = [_safe_repetition(j) for j in jobs]

    done = [r for r in results if r["status"] == "ok"]
    curve = None
    if done:
        curve = aggregate([r["curve"] for r in done])
        (run_dir / "aggregate.csv").write_text(curve.to_csv(), encoding="utf-8")
        emit_plot({cfg.method: curve}, run_dir / "plot.svg", ylabel=METRIC_LABELS[cfg.task],
                  title=f"{cfg.task}: {cfg.method}")
        best = min(done, key=lambda r: r["final"])
        save_best_arm(run_dir / "best_arm.txt", domain, best["best_arm"])
    manifest = {
        "schema": RUN_DIR_SCHEMA,
        "ok": len(done) == len(results),
        "runs": [{k: v for k, v in r.items() if k != "curve"} for r in results],
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return RunResult(run_dir, results, curve)
