"""LLM providers.

Scripted providers are pure functions of ``(prompt, temperature, call index,
seed)``: at temperature 0 the reply depends on the prompt alone, at higher
temperatures a generator keyed on all four inputs adds seeded noise. The
remote provider speaks a chat-completions style HTTP contract.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from ..environments import canonical_tour, distance_matrix, tour_length
from .parsers import NUMBER, format_mab_dist, format_trace, format_wb

logger = logging.getLogger(__name__)


class ProviderError(RuntimeError):
    pass


class Provider(Protocol):
    model: str

    def complete(self, prompt: str, temperature: float) -> str: ...


def complete(provider: Provider, prompt: str, temperature: float) -> str:
    return provider.complete(prompt, temperature)


class ScriptedProvider:
    """Base class: subclasses implement ``reply(prompt, temperature, rng)``.

    ``rng`` is ``None`` at temperature 0.
    """

    model = "scripted"

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self.calls = 0
        self._lock = threading.Lock()

    def _rng(self, prompt: str, temperature: float, call_index: int) -> np.random.Generator:
        digest = hashlib.sha256(f"{self.seed}|{call_index}|{temperature!r}|{prompt}".encode()).digest()
        return np.random.default_rng(int.from_bytes(digest[:16], "little"))

    def complete(self, prompt: str, temperature: float) -> str:
        with self._lock:
            call_index = self.calls
            self.calls += 1
        rng = None if temperature == 0 else self._rng(prompt, temperature, call_index)
        self.last_call_index = call_index
        return self.reply(prompt, temperature, rng)

    def reply(self, prompt: str, temperature: float, rng) -> str:
        raise NotImplementedError


class EchoProvider(ScriptedProvider):
    """Returns the prompt; at temperature > 0 appends a seeded random token."""

    def reply(self, prompt, temperature, rng):
        if rng is None:
            return prompt
        return f"{prompt}\n#{int(rng.integers(0, 2**31))}"


class TableProvider(ScriptedProvider):
    """First ``(regex, reply)`` rule whose pattern is found in the prompt wins.

    A reply may be a string, a list of strings (indexed by call index, cycling), or a
    callable ``(prompt, temperature, rng) -> str``.
    """

    def __init__(self, rules: Sequence[tuple[str, object]], default: object = "", seed: int = 0):
        super().__init__(seed)
        self.rules = [(re.compile(p, re.DOTALL), r) for p, r in rules]
        self.default = default

    def _resolve(self, reply, prompt, temperature, rng):
        if callable(reply):
            return reply(prompt, temperature, rng)
        if isinstance(reply, (list, tuple)):
            return reply[self.last_call_index % len(reply)]
        return reply

    def reply(self, prompt, temperature, rng):
        for pattern, reply in self.rules:
            if pattern.search(prompt):
                return self._resolve(reply, prompt, temperature, rng)
        return self._resolve(self.default, prompt, temperature, rng)


# --------------------------------------------------------------------------- improving solvers

_LR_EXEMPLAR = re.compile(rf"w=({NUMBER}),\s*b=({NUMBER})\s*\nvalue:\s*\n({NUMBER})")
_TSP_EXEMPLAR = re.compile(rf"<trace>([\d,\s]+)</trace>\s*\nlength:\s*\n({NUMBER})")


class ImprovingSolver(ScriptedProvider):
    """Reads the best exemplar in the prompt and proposes something better.

    ``rate`` in (0, 1] is how far each temperature-0 reply moves from the best
    exemplar toward the optimum. ``quality`` optionally maps the prompt to a
    multiplier in (0, 1] on that rate, letting some meta-prompts work better
    than others.
    """

    def __init__(self, rate: float = 0.3, seed: int = 0, quality: Callable[[str], float] | None = None,
                 noise: float = 1.0):
        super().__init__(seed)
        if not 0 < rate <= 1:
            raise ValueError("rate must lie in (0, 1]")
        self.rate = rate
        self.quality = quality
        self.noise = noise

    def effective_rate(self, prompt: str) -> float:
        q = 1.0 if self.quality is None else float(self.quality(prompt))
        return self.rate * min(max(q, 0.0), 1.0)


class LinearRegressionSolver(ImprovingSolver):
    """Moves the best (w, b) in the prompt toward ``target`` and ends with ``[w, b]``."""

    def __init__(self, target: tuple[float, float], start: tuple[float, float] = (15.0, 15.0), **kw):
        super().__init__(**kw)
        self.target = np.asarray(target, dtype=np.float64)
        self.start = np.asarray(start, dtype=np.float64)

    def reply(self, prompt, temperature, rng):
        found = [(float(v), float(w), float(b)) for w, b, v in _LR_EXEMPLAR.findall(prompt)]
        best = np.array(min(found)[1:]) if found else self.start
        step = best + self.effective_rate(prompt) * (self.target - best)
        if rng is not None:
            spread = self.noise * max(float(np.linalg.norm(self.target - best)), 1e-3)
            step = step + rng.normal(0.0, spread * temperature, 2)
        w, b = (round(float(v), 4) for v in step)
        return f"Based on the pairs above, a better guess is {format_wb(w, b)}"


class TspSolver(ImprovingSolver):
    """Improves the shortest trace in the prompt by 2-opt moves.

    Each temperature-0 reply applies up to ``max(1, round(rate * n))``
    improving 2-opt moves; at a 2-opt local optimum that is not globally
    optimal it jumps to ``optimal_tour`` when one is given. Higher
    temperatures apply random segment reversals instead.
    """

    def __init__(self, nodes, optimal_tour=None, **kw):
        super().__init__(**kw)
        self.nodes = np.asarray(nodes, dtype=np.float64)
        self.D = distance_matrix(self.nodes)
        self.optimal_tour = None if optimal_tour is None else list(optimal_tour)

    def _two_opt_step(self, tour):
        n = len(tour)
        best_delta, best_move = -1e-12, None
        for i in range(n - 1):
            for j in range(i + 2, n if i > 0 else n - 1):
                a, b = tour[i], tour[i + 1]
                c, d = tour[j], tour[(j + 1) % n]
                delta = self.D[a, c] + self.D[b, d] - self.D[a, b] - self.D[c, d]
                if delta < best_delta:
                    best_delta, best_move = delta, (i, j)
        if best_move is None:
            return None
        i, j = best_move
        return tour[: i + 1] + tour[i + 1: j + 1][::-1] + tour[j + 1:]

    def reply(self, prompt, temperature, rng):
        n = len(self.nodes)
        found = []
        for body, length in _TSP_EXEMPLAR.findall(prompt):
            ids = [int(t) for t in re.split(r"[\s,]+", body.strip()) if t]
            if sorted(ids) == list(range(n)):
                found.append((float(length), ids))
        tour = min(found)[1] if found else list(range(n))
        if rng is None:
            moves = max(1, round(self.effective_rate(prompt) * n))
            for _ in range(moves):
                nxt = self._two_opt_step(tour)
                if nxt is None:
                    if self.optimal_tour is not None and \
                            tour_length(self.nodes, tour) > tour_length(self.nodes, self.optimal_tour):
                        tour = list(self.optimal_tour)
                    break
                tour = nxt
        else:
            tour = list(tour)
            for _ in range(max(1, int(round(self.noise * temperature * 2)))):
                i, j = sorted(rng.choice(n, 2, replace=False))
                tour[i:j + 1] = tour[i:j + 1][::-1]
        return f"Here is a shorter trace: {format_trace(canonical_tour(tour))}"


_SUMMARY = re.compile(rf"(\w+) button: pressed (\d+) times(?: with average reward ({NUMBER}))?")


class BanditSolver(ImprovingSolver):
    """Explores unpulled buttons, then concentrates on the best empirical average.

    Exploitation weight after ``n`` total plays is ``1 - (1 - rate) ** n``.
    """

    def __init__(self, arm_names, **kw):
        super().__init__(**kw)
        self.arm_names = list(arm_names)

    def reply(self, prompt, temperature, rng):
        K = len(self.arm_names)
        counts = np.zeros(K)
        avgs = np.zeros(K)
        for name, n, r in _SUMMARY.findall(prompt):
            if name in self.arm_names:
                i = self.arm_names.index(name)
                counts[i] = int(n)
                avgs[i] = float(r) if r else 0.0
        if (counts == 0).any():
            p = (counts == 0).astype(float)
        else:
            lam = 1.0 - (1.0 - self.effective_rate(prompt)) ** counts.sum()
            p = np.full(K, (1.0 - lam) / K)
            p[int(np.argmax(avgs))] += lam
        if rng is not None:
            p = p + rng.uniform(0, 0.1 * temperature, K)
        p = p / p.sum()
        return f"Let me think.\n{format_mab_dist(p, self.arm_names)}"


_QUOTED = re.compile(r'"(.*)"\s*\nPlease return', re.DOTALL)

_OPENERS = ("", "Carefully: ", "In short, ", "Step by step, ", "Note that ", "Precisely: ", "Concisely, ",
            "To be clear, ", "Importantly, ", "Think it through. ", "Briefly, ", "As an expert, ")
_CLOSERS = ("", " Be precise.", " Think step by step.", " Keep it short.", " Double-check the result.",
            " Focus on the goal.", " Be careful.", " Stay concise.", " Explain nothing else.",
            " Aim for the best answer.", " Use the examples.", " Avoid repetition.")


class ScriptedRephraser(ScriptedProvider):
    """Offline stand-in for the rephrasing step: wraps the quoted text in a seeded opener and closer."""

    def reply(self, prompt, temperature, rng):
        m = _QUOTED.search(prompt)
        text = m.group(1) if m else prompt
        if rng is None:
            return text
        return f"{_OPENERS[rng.integers(len(_OPENERS))]}{text}{_CLOSERS[rng.integers(len(_CLOSERS))]}"


def keyword_quality(keywords: Sequence[str], floor: float = 0.3) -> Callable[[str], float]:
    """Quality that grows with the number of ``keywords`` present in the prompt."""
    kws = [k.lower() for k in keywords]

    def quality(prompt: str) -> float:
        text = prompt.lower()
        hits = sum(k in text for k in kws)
        return floor + (1.0 - floor) * hits / max(len(kws), 1)

    return quality


# --------------------------------------------------------------------------- remote


class RemoteProvider:
    """Chat-completions over HTTP: ``POST {endpoint}`` with model, temperature and one user message."""

    def __init__(self, endpoint: str, model: str = "gpt-3.5-turbo", api_key_env: str = "OPENAI_API_KEY",
                 attempts: int = 3, backoff: float = 1.0, timeout: float = 120.0, transport=None):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.attempts = attempts
        self.backoff = backoff
        self.timeout = timeout
        self._transport = transport

    def request_body(self, prompt: str, temperature: float) -> dict:
        return {"model": self.model, "temperature": temperature,
                "messages": [{"role": "user", "content": prompt}]}

    def complete(self, prompt: str, temperature: float) -> str:
        import httpx

        key = os.environ.get(self.api_key_env)
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        last = None
        for attempt in range(1, self.attempts + 1):
            try:
                with httpx.Client(timeout=self.timeout, transport=self._transport) as client:
                    resp = client.post(self.endpoint, json=self.request_body(prompt, temperature), headers=headers)
                if resp.status_code in (401, 403):
                    raise ProviderError(f"authentication failed ({resp.status_code}); check ${self.api_key_env}")
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except ProviderError:
                raise
            except Exception as exc:
                last = exc
                logger.warning("completion attempt %d/%d failed: %s", attempt, self.attempts, exc)
                if attempt < self.attempts:
                    time.sleep(self.backoff * 2 ** (attempt - 1))
        raise ProviderError(f"completion failed after {self.attempts} attempts: {last}")


class TranscriptProvider:
    """Wraps a provider and appends every request/response to a JSONL transcript."""

    def __init__(self, inner: Provider, path):
        self.inner = inner
        self.model = getattr(inner, "model", "unknown")
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._n = 0

    def complete(self, prompt: str, temperature: float) -> str:
        reply = self.inner.complete(prompt, temperature)
        with self._lock:
            record = {"call": self._n, "model": self.model, "temperature": temperature,
                      "prompt": prompt, "response": reply}
            self._n += 1
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        return reply
