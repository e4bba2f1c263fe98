"""Phased graph extraction from claim and report texts.

Three model calls per text: entity identification, class labeling, relation
extraction. Each phase's verbatim output is retained for audit. Triples that
reference unidentified entities (or collapse into self-loops) are dropped and
counted rather than repaired, so the resulting graph is always well-formed.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Sequence

from .gateway import LlmGateway, ModelRequest
from .kg import Entity, EntityClass, KnowledgeGraph, Provenance, Relation, Triple, merge, normalize_surface
from .prompts import PromptLibrary, render_examples

if TYPE_CHECKING:
    from .corpus import ClaimCase

log = logging.getLogger(__name__)

PHASE_ENTITIES = "entities"
PHASE_CLASSES = "classes"
PHASE_RELATIONS = "relations"

_FENCE = re.compile(r"```(?:json)?\s*(.*?)\s*```", re.IGNORECASE | re.DOTALL)


class ExtractionError(RuntimeError):
    """Unusable model output after the retry budget, or a failed transport."""

    def __init__(self, message: str, phase: str, raw: str, source: str | None = None):
        super().__init__(message)
        self.phase = phase
        self.raw = raw
        self.source = source


class _ParseFailure(ValueError):
    pass


@dataclass
class ExtractionPhaseOutput:
    phase: str
    raw: str  # verbatim model output, kept even when parsing succeeds
    parsed: Any


@dataclass
class ExtractionConfig:
    model: str
    max_retries: int = 2
    max_tokens: int = 1024
    fewshot: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def examples_for(self, phase: str) -> list[dict[str, str]]:
        return list(self.fewshot.get(phase, []))


@dataclass
class GraphExtraction:
    graph: KnowledgeGraph
    phases: list[ExtractionPhaseOutput]
    dropped_entities: int = 0
    dropped_triples: int = 0


def _strip_to_json(raw: str, opener: str) -> Any:
    """Pull the first JSON value opening with `opener` out of noisy output."""
    candidates = []
    fence = _FENCE.search(raw)
    if fence:
        candidates.append(fence.group(1))
    candidates.append(raw.strip())
    decoder = json.JSONDecoder()
    for candidate in candidates:
        start = candidate.find(opener)
        while start != -1:
            try:
                value, _ = decoder.raw_decode(candidate[start:])
                return value
            except json.JSONDecodeError:
                start = candidate.find(opener, start + 1)
    raise _ParseFailure(f"no JSON value starting with {opener!r} found")


def parse_entities(raw: str) -> list[str]:
    value = _strip_to_json(raw, "[")
    if not isinstance(value, list):
        raise _ParseFailure("entity phase must yield a JSON array")
    return [item.strip() for item in value if isinstance(item, str) and item.strip()]


def parse_classes(raw: str) -> dict[str, str]:
    value = _strip_to_json(raw, "{")
    if not isinstance(value, dict):
        raise _ParseFailure("class phase must yield a JSON object")
    out: dict[str, str] = {}
    for key, cls in value.items():
        if isinstance(key, str) and isinstance(cls, str) and key.strip() and cls.strip():
            out[key.strip()] = cls.strip()
    return out


def parse_relations(raw: str) -> list[tuple[str, str, str]]:
    value = _strip_to_json(raw, "[")
    if not isinstance(value, list):
        raise _ParseFailure("relation phase must yield a JSON array")
    out: list[tuple[str, str, str]] = []
    for item in value:
        if isinstance(item, (list, tuple)) and len(item) == 3:
            head, relation, tail = item
        elif isinstance(item, dict):
            head = item.get("head", item.get("subject"))
            relation = item.get("relation", item.get("predicate"))
            tail = item.get("tail", item.get("object"))
        else:
            continue
        if all(isinstance(part, str) and part.strip() for part in (head, relation, tail)):
            out.append((head.strip(), relation.strip(), tail.strip()))
    return out


_PARSERS = {
    PHASE_ENTITIES: parse_entities,
    PHASE_CLASSES: parse_classes,
    PHASE_RELATIONS: parse_relations,
}


def _run_phase(
    phase: str,
    prompt: str,
    config: ExtractionConfig,
    gateway: LlmGateway,
) -> ExtractionPhaseOutput:
    parser = _PARSERS[phase]
    request = ModelRequest(
        model=config.model, prompt=prompt, max_tokens=config.max_tokens
    )
    raw = ""
    last_error = "no attempt made"
    for _ in range(config.max_retries + 1):
        try:
            raw = gateway.complete(request)
        except Exception as exc:
            raise ExtractionError(
                f"gateway failed during {phase} phase: {exc}", phase=phase, raw=""
            ) from exc
        try:
            return ExtractionPhaseOutput(phase=phase, raw=raw, parsed=parser(raw))
        except _ParseFailure as exc:
            last_error = str(exc)
    raise ExtractionError(
        f"unparseable {phase} output after {config.max_retries + 1} attempt(s): "
        f"{last_error}",
        phase=phase,
        raw=raw,
    )


def _build_graph(
    entity_names: Sequence[str],
    class_map: dict[str, str],
    triple_rows: Sequence[tuple[str, str, str]],
    provenance: Provenance,
) -> tuple[KnowledgeGraph, int, int]:
    normalized_classes = {normalize_surface(k): v for k, v in class_map.items()}
    by_norm: dict[str, Entity] = {}
    entities: list[Entity] = []
    dropped_entities = 0
    for name in entity_names:
        norm = normalize_surface(name)
        if norm in by_norm:
            continue
        cls = normalized_classes.get(norm)
        if cls is None:
            dropped_entities += 1
            log.debug("dropping unlabeled entity %r", name)
            continue
        entity = Entity(f"e{len(by_norm) + 1}", name, EntityClass(cls))
        by_norm[norm] = entity
        entities.append(entity)

    triples: list[Triple] = []
    seen: set[tuple[str, str, str]] = set()
    dropped_triples = 0
    for head, relation, tail in triple_rows:
        head_entity = by_norm.get(normalize_surface(head))
        tail_entity = by_norm.get(normalize_surface(tail))
        if head_entity is None or tail_entity is None:
            dropped_triples += 1
            log.debug("dropping dangling triple (%r, %r, %r)", head, relation, tail)
            continue
        if head_entity.id == tail_entity.id:
            dropped_triples += 1
            log.debug("dropping self-loop triple on %r", head)
            continue
        key = (head_entity.id, normalize_surface(relation), tail_entity.id)
        if key in seen:
            continue
        seen.add(key)
        triples.append(Triple(head_entity.id, Relation(relation), tail_entity.id, provenance))
    return KnowledgeGraph(tuple(entities), tuple(triples)), dropped_entities, dropped_triples


def extract_graph_audited(
    text: str,
    provenance: Provenance,
    config: ExtractionConfig,
    gateway: LlmGateway,
    prompts: PromptLibrary | None = None,
) -> GraphExtraction:
    """Full phase-by-phase extraction with drop counts and raw outputs."""
    if not text or not text.strip():
        raise ValueError("cannot extract a graph from empty text")
    prompts = prompts or PromptLibrary()

    phase1 = _run_phase(
        PHASE_ENTITIES,
        prompts.render(
            "extract_entities",
            examples=render_examples(config.examples_for(PHASE_ENTITIES)),
            text=text,
        ),
        config,
        gateway,
    )
    entity_names: list[str] = phase1.parsed
    if not entity_names:
        return GraphExtraction(graph=KnowledgeGraph(), phases=[phase1])

    phase2 = _run_phase(
        PHASE_CLASSES,
        prompts.render(
            "extract_classes",
            examples=render_examples(config.examples_for(PHASE_CLASSES)),
            entities=json.dumps(entity_names),
            text=text,
        ),
        config,
        gateway,
    )
    phase3 = _run_phase(
        PHASE_RELATIONS,
        prompts.render(
            "extract_relations",
            examples=render_examples(config.examples_for(PHASE_RELATIONS)),
            entities=json.dumps(phase2.parsed),
            text=text,
        ),
        config,
        gateway,
    )
    graph, dropped_entities, dropped_triples = _build_graph(
        entity_names, phase2.parsed, phase3.parsed, provenance
    )
    return GraphExtraction(
        graph=graph,
        phases=[phase1, phase2, phase3],
        dropped_entities=dropped_entities,
        dropped_triples=dropped_triples,
    )


def extract_graph(
    text: str,
    provenance: Provenance,
    config: ExtractionConfig,
    gateway: LlmGateway,
    prompts: PromptLibrary | None = None,
) -> KnowledgeGraph:
    return extract_graph_audited(text, provenance, config, gateway, prompts).graph


@dataclass
class CaseExtraction:
    graph: KnowledgeGraph
    dropped_entities: int
    dropped_triples: int


def extract_case_audited(
    case: "ClaimCase",
    config: ExtractionConfig,
    gateway: LlmGateway,
    prompts: PromptLibrary | None = None,
    workers: int = 1,
) -> CaseExtraction:
    """One merged graph per case: the claim graph plus one graph per report.

    Report extractions may run concurrently; the merge itself is a
    single-threaded reduction in (claim, report 0, report 1, ...) order.
    """
    prompts = prompts or PromptLibrary()
    sources: list[tuple[str, str, Provenance]] = [
        ("claim", case.claim, Provenance.claim())
    ]
    for report in case.reports:
        sources.append(
            (f"report:{report.index}", report.text, Provenance.report(report.index))
        )

    def one(source: tuple[str, str, Provenance]) -> GraphExtraction:
        name, text, provenance = source
        try:
            return extract_graph_audited(text, provenance, config, gateway, prompts)
        except ExtractionError as exc:
            exc.source = name
            raise

    if workers > 1 and len(sources) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            extractions = list(pool.map(one, sources))
    else:
        extractions = [one(source) for source in sources]
    return CaseExtraction(
        graph=merge([e.graph for e in extractions]),
        dropped_entities=sum(e.dropped_entities for e in extractions),
        dropped_triples=sum(e.dropped_triples for e in extractions),
    )


def extract_case(
    case: "ClaimCase",
    config: ExtractionConfig,
    gateway: LlmGateway,
    prompts: PromptLibrary | None = None,
    workers: int = 1,
) -> KnowledgeGraph:
    return extract_case_audited(case, config, gateway, prompts, workers).graph
