"""Answering ranked questions from the reports and distilling one summary."""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .contrastive import ContrastiveQuestion
from .gateway import LlmGateway, ModelRequest
from .prompts import PromptLibrary, prompt_sha, render_qa_blocks

_BLANK_LINES = re.compile(r"\n\s*\n+")


class SummaryUnavailable(RuntimeError):
    """No successful question/answer pair exists to summarise."""


@dataclass
class ReasoningConfig:
    model: str
    max_tokens: int = 512
    context_char_budget: int = 30000
    workers: int = 4


@dataclass
class QAPair:
    """One answered question; failed answers carry an error marker instead."""

    question_text: str
    rank: int
    answer: str | None
    question: ContrastiveQuestion | None = None
    prompt_sha: str = ""
    raw: str = ""
    retries: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and bool(self.answer)

    def to_dict(self) -> dict:
        return {
            "question_text": self.question_text,
            "rank": self.rank,
            "answer": self.answer,
            "question": self.question.to_dict() if self.question else None,
            "prompt_sha": self.prompt_sha,
            "raw": self.raw,
            "retries": self.retries,
            "error": self.error,
        }


def build_context(reports: Sequence[str], budget: int) -> str:
    """Reports in dataset order with separators, tail-truncated to the budget."""
    blocks = [
        f"--- Report {i} ---\n{text}" for i, text in enumerate(reports, start=1)
    ]
    joined = "\n\n".join(blocks)
    if len(joined) > budget:
        return joined[:budget]
    return joined


def answer_questions(
    questions: Sequence[ContrastiveQuestion | str],
    reports: Sequence[str],
    claim: str,
    gateway: LlmGateway,
    config: ReasoningConfig,
    prompts: PromptLibrary | None = None,
) -> list[QAPair]:
    """One independent call per question; per-question failures are non-fatal.

    Answers pair with questions by rank regardless of completion order, and
    each prompt contains only its own question.
    """
    prompts = prompts or PromptLibrary()
    context = build_context(reports, config.context_char_budget)

    def one(item: tuple[int, ContrastiveQuestion | str]) -> QAPair:
        rank, question = item
        text = question.text if isinstance(question, ContrastiveQuestion) else question
        structured = question if isinstance(question, ContrastiveQuestion) else None
        prompt = prompts.render(
            "answer",
            **{"context": context, "claim": claim, "contrastive question": text},
        )
        pair = QAPair(
            question_text=text,
            rank=rank,
            answer=None,
            question=structured,
            prompt_sha=prompt_sha(prompt),
        )
        try:
            record = gateway.complete_record(
                ModelRequest(model=config.model, prompt=prompt, max_tokens=config.max_tokens)
            )
        except Exception as exc:
            pair.error = str(exc)
            return pair
        pair.raw = record.response
        pair.retries = record.retries
        answer = record.response.strip()
        if not answer:
            pair.error = "empty answer"
        else:
            pair.answer = answer
        return pair

    items = list(enumerate(questions))
    if config.workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(one, items))
    return [one(item) for item in items]


@dataclass(frozen=True)
class ContrastiveSummary:
    """Single-paragraph distillation of all question/answer pairs."""

    text: str
    word_count: int

    def __post_init__(self) -> None:
        if _BLANK_LINES.search(self.text):
            raise ValueError("summary must be a single paragraph")

    @classmethod
    def from_text(cls, raw: str) -> "ContrastiveSummary":
        text = _BLANK_LINES.sub("\n", raw.strip())
        return cls(text=text, word_count=len(text.split()))


def summarise(
    claim: str,
    pairs: Sequence[QAPair],
    gateway: LlmGateway,
    config: ReasoningConfig,
    prompts: PromptLibrary | None = None,
) -> ContrastiveSummary:
    """One call over all successful pairs, enumerated in rank order."""
    prompts = prompts or PromptLibrary()
    usable = [pair for pair in sorted(pairs, key=lambda p: p.rank) if pair.ok]
    if not usable:
        raise SummaryUnavailable("no successful question/answer pair to summarise")
    blocks = render_qa_blocks([(pair.question_text, pair.answer or "") for pair in usable])
    prompt = prompts.render("summarise", **{"qa blocks": blocks, "claim": claim})
    raw = gateway.complete(
        ModelRequest(model=config.model, prompt=prompt, max_tokens=config.max_tokens)
    )
    return ContrastiveSummary.from_text(raw)
