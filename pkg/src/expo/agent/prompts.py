"""Prompt template assets and the text renderers for exemplars and bandit summaries."""
from __future__ import annotations

from functools import lru_cache
from importlib import resources

import numpy as np

from ..core import PromptTemplate, format_number
from ..environments import MabHistory

TEMPLATE_NAMES = ("opro_lr", "opro_lr_enhanced", "opro_tsp", "opro_tsp_enhanced", "bssnd", "bsscd")


def _parse_template_file(name: str, text: str) -> PromptTemplate:
    sections: dict[str, list[str]] = {}
    current = None
    reconstruction = False
    for line in text.splitlines():
        if current is None and line.startswith("#"):
            reconstruction = reconstruction or line.lstrip("# ").startswith("reconstruction")
            continue
        stripped = line.strip()
        if stripped in ("[description]", "[instruction]", "[layout]"):
            current = stripped[1:-1]
            sections[current] = []
            continue
        if current is not None:
            sections[current].append(line)
    missing = {"description", "instruction", "layout"} - sections.keys()
    if missing:
        raise ValueError(f"template file {name!r} lacks sections {sorted(missing)}")
    template = PromptTemplate(
        name=name,
        body="\n".join(sections["layout"]).rstrip("\n"),
        description="\n".join(sections["description"]).strip("\n"),
        instruction="\n".join(sections["instruction"]).strip("\n"),
        reconstruction=reconstruction,
    )
    template.check()
    return template


@lru_cache(maxsize=None)
def load_template(name: str) -> PromptTemplate:
    if name not in TEMPLATE_NAMES:
        raise KeyError(f"unknown template {name!r}; known: {', '.join(TEMPLATE_NAMES)}")
    text = resources.files(__package__).joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")
    return _parse_template_file(name, text)


@lru_cache(maxsize=None)
def rephrase_query() -> str:
    return resources.files(__package__).joinpath("templates", "rephrase_query.txt").read_text(encoding="utf-8")


# ---------------------------------------------------------------- exemplar text


def lr_exemplar_text(w: float, b: float, value: float) -> str:
    return f"input:\nw={format_number(w)}, b={format_number(b)}\nvalue:\n{format_number(value)}"


def tsp_exemplar_text(tour, length: float) -> str:
    return f"<trace> {','.join(str(int(i)) for i in tour)} </trace>\nlength:\n{format_number(length)}"


def tsp_points_text(nodes) -> str:
    return ", ".join(f"({i}): ({format_number(x)}, {format_number(y)})" for i, (x, y) in enumerate(np.asarray(nodes)))


def join_exemplars(blocks) -> str:
    """One blank line between exemplars."""
    return "\n\n".join(blocks)


def render_mab_summary(history: MabHistory, arm_order, arm_names) -> str:
    """One line per arm, in ``arm_order`` (a permutation of ``arm_names``)."""
    if sorted(arm_order) != sorted(arm_names):
        raise ValueError("arm_order must be a permutation of arm_names")
    means = history.empirical_means()
    lines = []
    for name in arm_order:
        i = list(arm_names).index(name)
        n = int(history.counts[i])
        if n == 0:
            lines.append(f"{name} button: pressed 0 times")
        else:
            lines.append(f"{name} button: pressed {n} times with average reward {means[i]:.1f}")
    return "\n".join(lines)


def mab_summary_lines(history: MabHistory, arm_names) -> list[str]:
    return render_mab_summary(history, arm_names, arm_names).split("\n")


def mab_context(arm_names, horizon: int, plays: int) -> dict[str, str]:
    names = list(arm_names)
    return {
        "K": str(len(names)),
        "BUTTONS": ", ".join(names),
        "HORIZON": str(horizon),
        "PLAYS": str(plays),
        "DIST_FORMAT": ",".join(f"{n}:{chr(ord('a') + i)}" for i, n in enumerate(names)),
    }
