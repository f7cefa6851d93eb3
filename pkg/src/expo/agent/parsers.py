"""Extract actions from free-form LLM replies."""
from __future__ import annotations

import math
import re

import numpy as np

NUMBER = r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?"
_WB = re.compile(rf"\[\s*({NUMBER})\s*,\s*({NUMBER})\s*\]")
_TRACE = re.compile(r"<trace>(.*?)</trace>", re.DOTALL | re.IGNORECASE)
_ANSWER = re.compile(r"<answer>(.*?)<\s*[/\\]\s*answer>", re.DOTALL | re.IGNORECASE)


class ParseError(ValueError):
    pass


def parse_wb(text: str) -> tuple[float, float]:
    """The last bracketed numeric pair ``[w, b]`` in ``text``."""
    matches = _WB.findall(text or "")
    if not matches:
        raise ParseError("no [w, b] pair found")
    w, b = (float(v) for v in matches[-1])
    if not (math.isfinite(w) and math.isfinite(b)):
        raise ParseError(f"non-finite pair [{w}, {b}]")
    return w, b


def parse_trace(text: str, n: int) -> list[int]:
    """Node ids between the last ``<trace>``/``</trace>`` tags; must be a permutation of ``0..n-1``."""
    if n < 2:
        raise ValueError("n must be >= 2")
    bodies = _TRACE.findall(text or "")
    if not bodies:
        raise ParseError("no <trace>...</trace> block found")
    tokens = [t for t in re.split(r"[\s,]+", bodies[-1].strip()) if t]
    if not tokens or not all(re.fullmatch(r"\d+", t) for t in tokens):
        raise ParseError(f"trace must contain only node ids, got {bodies[-1]!r}")
    tour = [int(t) for t in tokens]
    if len(tour) != n:
        raise ParseError(f"trace has {len(tour)} nodes, expected {n}")
    if sorted(tour) != list(range(n)):
        raise ParseError(f"trace is not a permutation of 0..{n - 1}: {tour}")
    return tour


def _last_run(region: str, pattern: re.Pattern) -> list[re.Match]:
    """Last group of ``name:value`` matches separated only by commas/whitespace."""
    runs: list[list[re.Match]] = []
    prev_end = None
    for m in pattern.finditer(region):
        gap = region[prev_end:m.start()] if prev_end is not None else None
        if gap is not None and re.fullmatch(r"[\s,;]*", gap):
            runs[-1].append(m)
        else:
            runs.append([m])
        prev_end = m.end()
    return runs[-1] if runs else []


def parse_mab_dist(text: str, K: int, arm_names) -> np.ndarray:
    """Distribution over arms written as ``blue:0.2,green:0.3,...``.

    Reads inside the last ``<Answer>...</Answer>`` when present, otherwise the
    last run of ``name:value`` entries anywhere in ``text``. Unnamed arms get 0,
    negatives are clamped to 0, the vector is renormalized, and an all-zero
    result becomes uniform.
    """
    names = list(arm_names)
    if len(names) != K:
        raise ValueError("arm_names must have length K")
    pattern = re.compile(
        r"\b(" + "|".join(re.escape(n) for n in names) + rf")\b\s*:\s*({NUMBER})", re.IGNORECASE)
    text = text or ""
    run = []
    answers = _ANSWER.findall(text)
    if answers:
        run = _last_run(answers[-1], pattern)
    if not run:
        run = _last_run(text, pattern)
    if not run:
        raise ParseError("no distribution found")
    lowered = [n.lower() for n in names]
    p = np.zeros(K)
    for m in run:
        value = float(m.group(2))
        if not math.isfinite(value):
            raise ParseError(f"non-finite probability {m.group(0)!r}")
        p[lowered.index(m.group(1).lower())] = value
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if total <= 0:
        return np.full(K, 1.0 / K)
    return p / total


def format_wb(w: float, b: float) -> str:
    return f"[{w}, {b}]"


def format_trace(tour) -> str:
    return "<trace>" + ",".join(str(int(i)) for i in tour) + "</trace>"


def format_mab_dist(p, arm_names) -> str:
    return "<Answer>" + ",".join(f"{n}:{float(v):.4g}" for n, v in zip(arm_names, p)) + "</Answer>"
