from __future__ import annotations

import pytest

from contrafact.contrastive import generate_candidates
from contrafact.gateway import LlmGateway, MockBackend, RetryPolicy
from contrafact.kg import (
    Entity,
    EntityClass,
    KnowledgeGraph,
    Provenance,
    Relation,
    Triple,
)
from contrafact.reasoning import (
    ContrastiveSummary,
    QAPair,
    ReasoningConfig,
    SummaryUnavailable,
    answer_questions,
    build_context,
    summarise,
)

CONFIG = ReasoningConfig(model="reasoner", workers=1)
REPORTS = ["First report text.", "Second report text."]


def gateway_with(queue) -> LlmGateway:
    return LlmGateway(MockBackend(queue=queue), sleep=lambda _: None)


def sample_questions(n: int = 2):
    place = EntityClass("Place")
    entities = [Entity("a1", "A1", EntityClass("Person")), Entity("p0", "P0", place)]
    entities += [Entity(f"p{i}", f"P{i}", place) for i in range(1, n + 1)]
    graph = KnowledgeGraph(
        entities=tuple(entities),
        triples=(Triple("a1", Relation("visited"), "p0", Provenance.claim()),),
    )
    return generate_candidates(graph)[:n]


# -- context assembly -------------------------------------------------------------


def test_context_has_numbered_separators_in_order() -> None:
    context = build_context(REPORTS, budget=10_000)
    assert context.index("--- Report 1 ---") < context.index("--- Report 2 ---")
    assert "First report text." in context
    assert "Second report text." in context


def test_context_truncates_from_the_tail() -> None:
    context = build_context(REPORTS, budget=30)
    assert len(context) == 30
    assert context.startswith("--- Report 1 ---")


# -- answering ---------------------------------------------------------------------


def test_no_questions_no_pairs() -> None:
    assert answer_questions([], REPORTS, "claim", gateway_with([]), CONFIG) == []


def test_empty_report_set_is_allowed() -> None:
    questions = sample_questions(1)
    pairs = answer_questions(questions, [], "claim", gateway_with(["ans"]), CONFIG)
    assert pairs[0].ok


def test_two_questions_answered_in_rank_order() -> None:
    questions = sample_questions(2)
    gateway = gateway_with(["answer one", "answer two"])
    pairs = answer_questions(questions, REPORTS, "the claim", gateway, CONFIG)
    assert [p.rank for p in pairs] == [0, 1]
    assert [p.answer for p in pairs] == ["answer one", "answer two"]
    assert [p.question_text for p in pairs] == [q.text for q in questions]
    assert all(p.ok for p in pairs)
    assert all(p.prompt_sha for p in pairs)


def test_retry_count_lands_in_pair() -> None:
    questions = sample_questions(1)
    gateway = LlmGateway(
        MockBackend(queue=[TimeoutError("t1"), TimeoutError("t2"), "recovered"]),
        sleep=lambda _: None,
        retry=RetryPolicy(max_retries=2),
    )
    pairs = answer_questions(questions, REPORTS, "claim", gateway, CONFIG)
    assert pairs[0].ok
    assert pairs[0].retries == 2


def test_per_question_failure_is_non_fatal() -> None:
    questions = sample_questions(2)
    gateway = LlmGateway(
        MockBackend(queue=[TimeoutError("down")] * 1 + ["fine"]),
        sleep=lambda _: None,
        retry=RetryPolicy(max_retries=0),
    )
    pairs = answer_questions(questions, REPORTS, "claim", gateway, CONFIG)
    assert not pairs[0].ok
    assert pairs[0].error
    assert pairs[1].ok


def test_empty_answer_is_marked_failed() -> None:
    questions = sample_questions(1)
    pairs = answer_questions(questions, REPORTS, "claim", gateway_with(["   "]), CONFIG)
    assert not pairs[0].ok
    assert pairs[0].error == "empty answer"


def test_prompt_is_pure_function_of_inputs() -> None:
    questions = sample_questions(1)
    backend_a = MockBackend(queue=["x"])
    backend_b = MockBackend(queue=["x"])
    answer_questions(questions, REPORTS, "claim", LlmGateway(backend_a), CONFIG)
    answer_questions(questions, REPORTS, "claim", LlmGateway(backend_b), CONFIG)
    assert backend_a.requests[0].prompt == backend_b.requests[0].prompt


def test_prompts_are_independent_across_questions() -> None:
    questions = sample_questions(3)
    backend = MockBackend(queue=["a", "b", "c"])
    answer_questions(questions, REPORTS, "claim", LlmGateway(backend), CONFIG)
    for i, request in enumerate(backend.requests):
        assert questions[i].text in request.prompt
        for j, other in enumerate(questions):
            if j != i:
                assert other.text not in request.prompt


def test_concurrent_answering_preserves_order() -> None:
    questions = sample_questions(4)

    def responder(request):
        for i, question in enumerate(questions):
            if question.text in request.prompt:
                return f"answer {i}"
        raise AssertionError("unknown question")

    gateway = LlmGateway(MockBackend(responder=responder))
    config = ReasoningConfig(model="reasoner", workers=4)
    pairs = answer_questions(questions, REPORTS, "claim", gateway, config)
    assert [p.answer for p in pairs] == [f"answer {i}" for i in range(4)]


def test_answer_accepts_plain_text_questions() -> None:
    pairs = answer_questions(
        ["Why x rather than y?"], REPORTS, "claim", gateway_with(["because"]), CONFIG
    )
    assert pairs[0].question is None
    assert pairs[0].question_text == "Why x rather than y?"
    assert pairs[0].ok


# -- summarising -------------------------------------------------------------------


def ok_pair(i: int) -> QAPair:
    return QAPair(question_text=f"Question {i}?", rank=i, answer=f"Answer body {i}.")


def test_single_pair_scripted_summary() -> None:
    gateway = gateway_with(["This is the distilled paragraph."])
    summary = summarise("claim", [ok_pair(0)], gateway, CONFIG)
    assert summary.text == "This is the distilled paragraph."
    assert summary.word_count == 5


def test_all_pairs_errored_raises_summary_unavailable() -> None:
    failed = QAPair(question_text="q", rank=0, answer=None, error="down")
    with pytest.raises(SummaryUnavailable):
        summarise("claim", [failed], gateway_with(["never"]), CONFIG)


def test_prompt_contains_numbered_blocks_in_rank_order() -> None:
    backend = MockBackend(queue=["summary"])
    pairs = [ok_pair(i) for i in range(5)]
    summarise("claim", pairs, LlmGateway(backend), CONFIG)
    prompt = backend.requests[0].prompt
    for i in range(5):
        assert f"* Question {i + 1}: Question {i}?" in prompt
        assert f"* Answer {i + 1}: Answer body {i}." in prompt
    assert "* Question 6:" not in prompt
    positions = [prompt.index(f"* Question {i + 1}:") for i in range(5)]
    assert positions == sorted(positions)


def test_failed_pairs_are_skipped_and_numbering_is_sequential() -> None:
    backend = MockBackend(queue=["summary"])
    pairs = [
        ok_pair(0),
        QAPair(question_text="broken", rank=1, answer=None, error="x"),
        ok_pair(2),
    ]
    summarise("claim", pairs, LlmGateway(backend), CONFIG)
    prompt = backend.requests[0].prompt
    assert "* Question 1: Question 0?" in prompt
    assert "* Question 2: Question 2?" in prompt
    assert "broken" not in prompt


def test_summary_collapses_blank_lines_to_single_paragraph() -> None:
    gateway = gateway_with(["para one.\n\n\npara two."])
    summary = summarise("claim", [ok_pair(0)], gateway, CONFIG)
    assert "\n\n" not in summary.text
    assert summary.text == "para one.\npara two."


def test_summary_type_rejects_blank_line_breaks() -> None:
    with pytest.raises(ValueError):
        ContrastiveSummary(text="a\n\nb", word_count=2)
