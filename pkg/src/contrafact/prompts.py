"""Prompt template loading and rendering.

Templates are plain text files with ``{name}`` placeholders. The packaged set
can be overridden by pointing a PromptLibrary at a directory containing files
with the same names.
"""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path

TEMPLATE_NAMES = (
    "extract_entities",
    "extract_classes",
    "extract_relations",
    "answer",
    "summarise",
    "verify",
    "llm_questions",
)


class PromptError(ValueError):
    """A template is missing or was rendered with missing placeholders."""


class _Strict(dict):
    def __missing__(self, key: str) -> str:
        raise PromptError(f"missing placeholder value: {key!r}")


def render(template: str, values: dict[str, str]) -> str:
    """Pure rendering: identical inputs produce identical prompt bytes."""
    return template.format_map(_Strict(values))


def prompt_sha(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class PromptLibrary:
    def __init__(self, template_dir: Path | str | None = None) -> None:
        self._dir = Path(template_dir) if template_dir else None
        self._cache: dict[str, str] = {}

    def template(self, name: str) -> str:
        if name not in self._cache:
            if self._dir is not None:
                path = self._dir / f"{name}.txt"
                if not path.exists():
                    raise PromptError(f"template not found: {path}")
                text = path.read_text(encoding="utf-8")
            else:
                ref = resources.files("contrafact") / "templates" / f"{name}.txt"
                try:
                    text = ref.read_text(encoding="utf-8")
                except FileNotFoundError as exc:
                    raise PromptError(f"unknown template: {name!r}") from exc
            self._cache[name] = text
        return self._cache[name]

    def render(self, name: str, **values: str) -> str:
        return render(self.template(name), values)


def render_qa_blocks(pairs: list[tuple[str, str]]) -> str:
    """Numbered question/answer slots for the summarisation prompt."""
    lines = []
    for i, (question, answer) in enumerate(pairs, start=1):
        lines.append(f"* Question {i}: {question}")
        lines.append(f"* Answer {i}: {answer}")
    return "\n".join(lines)


def render_examples(examples: list[dict[str, str]]) -> str:
    """Few-shot block for the extraction phases; empty list renders nothing."""
    blocks = []
    for example in examples:
        lines = ["Example:"]
        if "entities" in example:
            lines.append(f"Entities: {example['entities']}")
        lines.append(f"Text: {example['text']}")
        lines.append(f"Output: {example['output']}")
        blocks.append("\n".join(lines))
    if not blocks:
        return ""
    return "\n\n".join(blocks) + "\n\n"


def load_fewshot(path: Path | str | None = None) -> dict:
    """Few-shot example sets; defaults to the packaged file."""
    if path is not None:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    ref = resources.files("contrafact") / "fewshot.json"
    return json.loads(ref.read_text(encoding="utf-8"))
