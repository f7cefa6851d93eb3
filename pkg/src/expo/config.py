"""Experiment configuration: YAML in, validated and fully resolved dataclasses out."""
from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .agent.prompts import TEMPLATE_NAMES
from .baselines import BASELINE_KINDS

TASKS = ("lr", "tsp", "mab")
METHODS = ("expo", "expo_es") + BASELINE_KINDS


class ConfigError(ValueError):
    pass


@dataclass
class TaskConfig:
    """Environment parameters. Only the fields of the chosen task are used."""

    w_true: float = 2.0
    b_true: float = 30.0
    n_points: int = 50
    noise_sd: float = 1.0
    n_nodes: int = 10
    K: int = 5
    gap: float = 0.2
    prompt_design: str = "bsscd"
    horizon: int | None = None
    instance_seed: int = 0
    n_warm_start: int = 5
    score_b: float | None = None


@dataclass
class ProviderConfig:
    kind: str = "scripted"          # scripted | remote
    rate: float = 0.3
    noise: float = 1.0
    quality_keywords: list = field(default_factory=list)
    endpoint: str = ""
    model: str = "gpt-3.5-turbo"
    api_key_env: str = "OPENAI_API_KEY"
    attempts: int = 3
    timeout: float = 60.0


@dataclass
class EmbeddingConfig:
    kind: str = "synthetic"         # synthetic | remote
    dim: int = 64
    endpoint: str = ""
    model: str = "text-embedding-3-large"
    api_key_env: str = "OPENAI_API_KEY"


@dataclass
class EstimatorConfig:
    hidden_width: int = 1536
    hidden_width_es: int = 512
    epochs: int = 500
    learning_rate: float = 1e-3


@dataclass
class DomainConfig:
    """Where the arms come from.

    ``template`` is the single arm of the task template; ``file`` loads a saved
    domain; ``generate`` rephrases the template texts ``n_rephrase`` times with
    the configured provider.
    """

    source: str = "template"        # template | file | generate
    path: str = ""
    n_rephrase: int = 100
    temperature: float = 1.3


@dataclass
class ExperimentConfig:
    task: str = "lr"
    method: str = "expo"
    T: int = 50
    seeds: list = field(default_factory=lambda: [0])
    repeats: int = 1
    B: int = 8
    eta_desc: float = 100.0
    eta_exemplar: float = 10.0
    L: int = 20
    kES: int = 257
    pool_cap: int = 30
    exemplar_cap: int = 20
    max_history: int | None = None
    beta: float = 1.0
    parse_retries: int = 3
    replay_from: str = ""
    parallelism: int = 1
    output_dir: str = "runs/default"
    task_params: TaskConfig = field(default_factory=TaskConfig)
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    domain: DomainConfig = field(default_factory=DomainConfig)

    @property
    def repetitions(self) -> int:
        return len(self.seeds) * self.repeats

    @property
    def template_name(self) -> str:
        if self.task == "mab":
            return self.task_params.prompt_design
        enhanced = "_enhanced" if self.method == "opro_enhanced" else ""
        return f"opro_{self.task}{enhanced}"

    def runs(self) -> list[tuple[int, int]]:
        return [(int(s), r) for s in self.seeds for r in range(self.repeats)]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, allow_unicode=True)

    def validate(self) -> "ExperimentConfig":
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.T < 1 or self.B < 1 or self.repeats < 1 or self.parallelism < 1:
            raise ConfigError("T, B, repeats and parallelism must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.eta_desc <= 0 or self.eta_exemplar <= 0:
            raise ConfigError("learning rates eta_desc and eta_exemplar must be > 0")
        if self.L < 1 or self.kES < 1 or self.pool_cap < 1:
            raise ConfigError("L, kES and pool_cap must be >= 1")
        if self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if self.template_name not in TEMPLATE_NAMES:
            raise ConfigError(f"no template {self.template_name!r}")
        if self.method == "fixed_prompt_replay" and not self.replay_from:
            raise ConfigError("fixed_prompt_replay needs replay_from (a previous run directory)")
        if self.provider.kind not in ("scripted", "remote"):
            raise ConfigError(f"unknown provider kind {self.provider.kind!r}")
        if self.provider.kind == "remote" and not self.provider.endpoint:
            raise ConfigError("remote provider needs an endpoint")
        if self.embedding.kind not in ("synthetic", "remote"):
            raise ConfigError(f"unknown embedding kind {self.embedding.kind!r}")
        if self.domain.source not in ("template", "file", "generate"):
            raise ConfigError(f"unknown domain source {self.domain.source!r}")
        if self.domain.source == "file" and not self.domain.path:
            raise ConfigError("domain source 'file' needs a path")
        tp = self.task_params
        if self.task == "tsp" and not 3 <= tp.n_nodes <= 20:
            raise ConfigError("n_nodes must lie in [3, 20] for the exact oracle")
        if self.task == "mab" and tp.prompt_design not in ("bssnd", "bsscd"):
            raise ConfigError("prompt_design must be bssnd or bsscd")
        return self


_SECTIONS = {"task_params": TaskConfig, "provider": ProviderConfig, "embedding": EmbeddingConfig,
             "estimator": EstimatorConfig, "domain": DomainConfig}


def from_dict(data: dict) -> ExperimentConfig:
    data = copy.deepcopy(data or {})
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            fields = {f.name for f in dataclasses.fields(cls)}
            bad = set(value or {}) - fields
            if bad:
                raise ConfigError(f"unknown keys in {key}: {sorted(bad)}")
            kwargs[key] = cls(**(value or {}))
        else:
            kwargs[key] = value
    return ExperimentConfig(**kwargs)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return from_dict(data).validate()


# --------------------------------------------------------------------------- published settings

PUBLISHED_SETTINGS = (
    "lr_2_30", "lr_36_-1", "tsp_10", "tsp_15", "tsp_20",
    "mab_easy_bssnd", "mab_easy_bsscd", "mab_hard_bssnd", "mab_hard_bsscd",
)


def published_config(setting: str, method: str = "expo") -> ExperimentConfig:
    """Resolved configuration of one of the published experiment settings."""
    if setting not in PUBLISHED_SETTINGS:
        raise ConfigError(f"unknown published setting {setting!r}; choose from {PUBLISHED_SETTINGS}")
    est = EstimatorConfig(hidden_width=1536, hidden_width_es=512, epochs=500, learning_rate=1e-3)
    emb = EmbeddingConfig(kind="remote", dim=3072)
    common = dict(method=method, eta_exemplar=10.0, L=20, kES=257, pool_cap=30, exemplar_cap=20,
                  estimator=est, embedding=emb, domain=DomainConfig(source="generate", n_rephrase=100))
    if setting.startswith("lr_"):
        w, b = (float(v) for v in setting[3:].split("_"))
        cfg = ExperimentConfig(task="lr", T=50, seeds=[0, 1, 2, 3, 4], B=8, eta_desc=100.0,
                               task_params=TaskConfig(w_true=w, b_true=b), **common)
    elif setting.startswith("tsp_"):
        n = int(setting[4:])
        cfg = ExperimentConfig(task="tsp", T={10: 100, 15: 200, 20: 300}[n], seeds=[0, 1, 2], B=8,
                               eta_desc=100.0, task_params=TaskConfig(n_nodes=n), **common)
    else:
        _, level, design = setting.split("_")
        K, gap = (4, 0.5) if level == "easy" else (5, 0.2)
        cfg = ExperimentConfig(task="mab", T=100, seeds=[0, 1], repeats=3, B=1, eta_desc=10.0,
                               task_params=TaskConfig(K=K, gap=gap, prompt_design=design, horizon=100),
                               **common)
    return cfg.validate()
