"""Shared domain types: prompt domains, arms, exemplars, meta-prompts and run traces."""
from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

DOMAIN_FORMAT_VERSION = 1
TRACE_HEADER = ("iteration", "arm", "exemplar_seq", "raw_eval", "prompt_score", "metric", "best_so_far")

DESCRIPTION_SLOT = "{DESCRIPTION}"
EXEMPLARS_SLOT = "{EXEMPLARS}"
INSTRUCTION_SLOT = "{INSTRUCTION}"


class ValidationError(ValueError):
    """Raised when a domain object violates its construction invariants."""


class TemplateError(ValueError):
    """Raised when a prompt template is missing a required placeholder."""


@dataclass(frozen=True)
class TaskDescription:
    id: int
    text: str

    def __post_init__(self):
        if not self.text:
            raise ValidationError(f"task description {self.id} has empty text")


@dataclass(frozen=True)
class MetaInstruction:
    id: int
    text: str

    def __post_init__(self):
        if not self.text:
            raise ValidationError(f"meta-instruction {self.id} has empty text")


@dataclass(frozen=True)
class Arm:
    """One (task description, meta-instruction) pair; ``index = desc_id * k2 + instr_id``."""

    index: int
    desc_id: int
    instr_id: int


@dataclass(frozen=True)
class PromptDomain:
    descriptions: tuple[TaskDescription, ...]
    instructions: tuple[MetaInstruction, ...]

    @property
    def k1(self) -> int:
        return len(self.descriptions)

    @property
    def k2(self) -> int:
        return len(self.instructions)

    @property
    def k(self) -> int:
        return self.k1 * self.k2

    def __len__(self) -> int:
        return self.k

    def arm(self, index: int) -> Arm:
        if not 0 <= index < self.k:
            raise IndexError(f"arm index {index} outside [0, {self.k})")
        desc_id, instr_id = divmod(index, self.k2)
        return Arm(index, desc_id, instr_id)

    def arm_for(self, desc_id: int, instr_id: int) -> Arm:
        if not (0 <= desc_id < self.k1 and 0 <= instr_id < self.k2):
            raise IndexError(f"no arm for ({desc_id}, {instr_id})")
        return Arm(desc_id * self.k2 + instr_id, desc_id, instr_id)

    def arms(self) -> list[Arm]:
        return [self.arm(i) for i in range(self.k)]

    def texts(self, arm: Arm) -> tuple[str, str]:
        return self.descriptions[arm.desc_id].text, self.instructions[arm.instr_id].text

    def to_dict(self) -> dict:
        return {
            "version": DOMAIN_FORMAT_VERSION,
            "descriptions": [{"id": d.id, "text": d.text} for d in self.descriptions],
            "instructions": [{"id": i.id, "text": i.text} for i in self.instructions],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PromptDomain":
        if data.get("version") != DOMAIN_FORMAT_VERSION:
            raise ValidationError(f"unsupported domain file version {data.get('version')!r}")
        descs = [TaskDescription(int(r["id"]), r["text"]) for r in data["descriptions"]]
        instrs = [MetaInstruction(int(r["id"]), r["text"]) for r in data["instructions"]]
        return build_domain(descs, instrs)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "PromptDomain":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _check_ids(items: Sequence, kind: str) -> None:
    if not items:
        raise ValidationError(f"at least one {kind} is required")
    ids = [item.id for item in items]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"duplicate {kind} ids: {sorted(ids)}")
    if sorted(ids) != list(range(len(ids))):
        raise ValidationError(f"{kind} ids must be consecutive from 0, got {sorted(ids)}")


def build_domain(descs: Sequence[TaskDescription], instrs: Sequence[MetaInstruction]) -> PromptDomain:
    """Combine descriptions and instructions into a row-major domain of ``k1 * k2`` arms."""
    _check_ids(descs, "task description")
    _check_ids(instrs, "meta-instruction")
    return PromptDomain(
        tuple(sorted(descs, key=lambda d: d.id)),
        tuple(sorted(instrs, key=lambda i: i.id)),
    )


def domain_from_texts(descs: Iterable[str], instrs: Iterable[str]) -> PromptDomain:
    return build_domain(
        [TaskDescription(i, t) for i, t in enumerate(descs)],
        [MetaInstruction(i, t) for i, t in enumerate(instrs)],
    )


@dataclass(frozen=True)
class ActionRecord:
    """Verbatim LLM output plus the parsed payload (``None`` when parsing failed)."""

    raw_text: str
    parsed: Any = None

    @property
    def ok(self) -> bool:
        return self.parsed is not None


@dataclass(frozen=True)
class Exemplar:
    action: ActionRecord
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValidationError(f"exemplar score must be finite, got {self.score}")


@dataclass(frozen=True)
class ExemplarSequence:
    items: tuple = ()
    rendered_text: str = ""

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class PromptTemplate:
    """A layout with ``{DESCRIPTION}``, ``{EXEMPLARS}`` and ``{INSTRUCTION}`` slots.

    ``description`` and ``instruction`` hold the initial texts the domain is grown from.
    """

    name: str
    body: str
    description: str = ""
    instruction: str = ""
    reconstruction: bool = False

    def check(self) -> None:
        for slot in (DESCRIPTION_SLOT, EXEMPLARS_SLOT, INSTRUCTION_SLOT):
            if self.body.count(slot) != 1:
                raise TemplateError(f"template {self.name!r} must contain placeholder {slot} exactly once")


@dataclass(frozen=True)
class MetaPrompt:
    desc: TaskDescription
    instr: MetaInstruction
    exemplars: ExemplarSequence
    text: str


_SLOT_RE = re.compile("(" + "|".join(re.escape(x) for x in (DESCRIPTION_SLOT, EXEMPLARS_SLOT, INSTRUCTION_SLOT)) + ")")


def render_meta_prompt(
    domain: PromptDomain,
    arm: Arm,
    exemplars: ExemplarSequence,
    template: PromptTemplate,
    context: dict[str, str] | None = None,
) -> MetaPrompt:
    """Fill the template's three slots, then substitute task context variables (``{POINTS}`` etc.)."""
    template.check()
    desc = domain.descriptions[arm.desc_id]
    instr = domain.instructions[arm.instr_id]
    fills = {DESCRIPTION_SLOT: _fill_context(desc.text, context), EXEMPLARS_SLOT: exemplars.rendered_text,
             INSTRUCTION_SLOT: _fill_context(instr.text, context)}
    # split on the slots first so braces inside filled texts are never re-expanded
    parts = _SLOT_RE.split(template.body)
    text = "".join(fills[p] if i % 2 else _fill_context(p, context) for i, p in enumerate(parts))
    return MetaPrompt(desc, instr, exemplars, text)


def _fill_context(text: str, context: dict[str, str] | None) -> str:
    if not context:
        return text
    for key, value in context.items():
        text = text.replace("{" + key + "}", value)
    return text


def format_number(x: float) -> str:
    """Render with at most 4 decimals, trailing zeros stripped."""
    if isinstance(x, (int,)) or float(x).is_integer():
        return str(int(round(x)))
    s = f"{x:.4f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


@dataclass
class RunTrace:
    iteration: int
    arm_index: int
    raw_eval: float
    prompt_score: float
    metric: float
    best_so_far: float
    exemplar_seq_id: int | None = None
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    def row(self) -> list[str]:
        return [
            str(self.iteration),
            str(self.arm_index),
            "" if self.exemplar_seq_id is None else str(self.exemplar_seq_id),
            repr(float(self.raw_eval)),
            repr(float(self.prompt_score)),
            repr(float(self.metric)),
            repr(float(self.best_so_far)),
        ]


def write_traces(path, traces: Sequence[RunTrace]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for tr in traces:
            writer.writerow(tr.row())


def read_traces(path) -> list[RunTrace]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_HEADER:
            raise ValidationError(f"unexpected trace header {reader.fieldnames}")
        return [
            RunTrace(
                iteration=int(r["iteration"]),
                arm_index=int(r["arm"]),
                exemplar_seq_id=int(r["exemplar_seq"]) if r["exemplar_seq"] else None,
                raw_eval=float(r["raw_eval"]),
                prompt_score=float(r["prompt_score"]),
                metric=float(r["metric"]),
                best_so_far=float(r["best_so_far"]),
            )
            for r in reader
        ]


def traces_to_csv_text(traces: Sequence[RunTrace]) -> str:
    lines = [",".join(TRACE_HEADER)]
    lines.extend(",".join(tr.row()) for tr in traces)
    return "\n".join(lines) + "\n"
