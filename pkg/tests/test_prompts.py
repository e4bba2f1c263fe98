from __future__ import annotations

import pytest

from contrafact.prompts import (
    TEMPLATE_NAMES,
    PromptError,
    PromptLibrary,
    load_fewshot,
    prompt_sha,
    render,
    render_examples,
    render_qa_blocks,
)


def test_all_packaged_templates_load() -> None:
    library = PromptLibrary()
    for name in TEMPLATE_NAMES:
        assert library.template(name)


def test_unknown_template_raises() -> None:
    with pytest.raises(PromptError):
        PromptLibrary().template("no-such-template")


def test_missing_placeholder_is_an_error() -> None:
    with pytest.raises(PromptError) as excinfo:
        render("Hello {name}, meet {other}", {"name": "A"})
    assert "other" in str(excinfo.value)


def test_extra_values_are_ignored() -> None:
    assert render("Hi {name}", {"name": "A", "unused": "B"}) == "Hi A"


def test_rendering_is_pure() -> None:
    library = PromptLibrary()
    values = {
        "context": "ctx",
        "claim": "clm",
        "contrastive question": "why?",
    }
    assert library.render("answer", **values) == library.render("answer", **values)


def test_directory_override_wins(tmp_path) -> None:
    (tmp_path / "verify.txt").write_text("custom {claim} {context} {veracity labels}")
    library = PromptLibrary(tmp_path)
    out = library.render(
        "verify", **{"claim": "c", "context": "x", "veracity labels": "- l"}
    )
    assert out == "custom c x - l"
    with pytest.raises(PromptError):
        library.template("answer")  # override dir must carry every used template


def test_qa_blocks_are_numbered_from_one() -> None:
    blocks = render_qa_blocks([("q1", "a1"), ("q2", "a2")])
    assert blocks.splitlines() == [
        "* Question 1: q1",
        "* Answer 1: a1",
        "* Question 2: q2",
        "* Answer 2: a2",
    ]


def test_examples_block_renders_entities_line_when_present() -> None:
    block = render_examples(
        [{"text": "T", "output": "O"}, {"text": "T2", "entities": "[...]", "output": "O2"}]
    )
    assert "Example:\nText: T\nOutput: O" in block
    assert "Entities: [...]" in block
    assert block.endswith("\n\n")
    assert render_examples([]) == ""


def test_default_fewshot_has_every_phase() -> None:
    fewshot = load_fewshot()
    assert set(fewshot) >= {"entities", "classes", "relations", "llm_questions"}
    assert fewshot["entities"][0]["text"]


def test_prompt_sha_is_stable_and_content_sensitive() -> None:
    assert prompt_sha("abc") == prompt_sha("abc")
    assert prompt_sha("abc") != prompt_sha("abd")
    assert len(prompt_sha("abc")) == 64
