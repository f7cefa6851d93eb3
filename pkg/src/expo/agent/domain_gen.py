"""Grow a prompt domain by asking an LLM to rephrase the initial description and instruction."""
from __future__ import annotations

import logging

from ..core import PromptDomain, domain_from_texts
from .prompts import rephrase_query

logger = logging.getLogger(__name__)


class DomainGenerationError(RuntimeError):
    """Carries whatever was generated before the failure."""

    def __init__(self, message, descriptions, instructions):
        super().__init__(message)
        self.descriptions = list(descriptions)
        self.instructions = list(instructions)


def rephrase_prompt(text: str) -> str:
    return rephrase_query().replace("{INITIAL_META-PROMPT}", text)


def _clean(reply: str) -> str:
    text = (reply or "").strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1].strip()
    return text


def _rephrase_all(provider, initial, n, temperature, max_retries, done_other, is_desc):
    items = [initial]
    seen = {initial}
    retries = 0
    while len(items) < n + 1:
        try:
            text = _clean(provider.complete(rephrase_prompt(initial), temperature))
        except Exception as exc:
            descs, instrs = (items, done_other) if is_desc else (done_other, items)
            raise DomainGenerationError(f"provider failed after {len(items) - 1} rephrasings: {exc}",
                                        descs, instrs) from exc
        if text and text not in seen:
            items.append(text)
            seen.add(text)
            retries = 0
            continue
        retries += 1
        logger.debug("rejected %s rephrasing (retry %d)", "empty" if not text else "duplicate", retries)
        if retries > max_retries:
            descs, instrs = (items, done_other) if is_desc else (done_other, items)
            raise DomainGenerationError(
                f"gave up after {max_retries} consecutive empty/duplicate rephrasings", descs, instrs)
    return items


def generate_domain(provider, initial_desc: str, initial_instr: str, n_rephrase: int = 100,
                    temperature: float = 1.3, max_retries: int = 10) -> PromptDomain:
    """``(n_rephrase + 1) x (n_rephrase + 1)`` domain; index 0 on each axis is the initial text."""
    if n_rephrase < 0:
        raise ValueError("n_rephrase must be >= 0")
    descs = _rephrase_all(provider, initial_desc, n_rephrase, temperature, max_retries, [], True)
    instrs = _rephrase_all(provider, initial_instr, n_rephrase, temperature, max_retries, descs, False)
    domain = domain_from_texts(descs, instrs)
    if domain.k != (n_rephrase + 1) ** 2:
        raise DomainGenerationError("domain size mismatch", descs, instrs)
    return domain
