"""Knowledge-graph domain types with claim/report provenance.

Graphs are immutable after construction and safe to share across pipeline
workers. Entity identity is the pair (case-folded whitespace-normalized
surface, class), which makes merging deterministic.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

_WS = re.compile(r"\s+")


class GraphError(ValueError):
    """Raised when a graph invariant is violated at construction time."""


def normalize_surface(text: str) -> str:
    """Case-fold and collapse whitespace; the normalized form drives identity."""
    return _WS.sub(" ", text.strip()).casefold()


@dataclass(frozen=True)
class EntityClass:
    """Conceptual category of an entity (open vocabulary, e.g. "Person")."""

    name: str

    def __post_init__(self) -> None:
        if not self.name.strip():
            raise GraphError("entity class name must be non-empty")

    @property
    def key(self) -> str:
        return normalize_surface(self.name)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EntityClass):
            return NotImplemented
        return self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)


@dataclass(frozen=True)
class Relation:
    """Labeled edge type connecting two entities."""

    label: str

    def __post_init__(self) -> None:
        if not self.label.strip():
            raise GraphError("relation label must be non-empty")

    @property
    def key(self) -> str:
        return normalize_surface(self.label)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Relation):
            return NotImplemented
        return self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)


@dataclass(frozen=True)
class Entity:
    id: str
    surface: str
    entity_class: EntityClass

    def __post_init__(self) -> None:
        if not self.id.strip():
            raise GraphError("entity id must be non-empty")
        if not self.surface.strip():
            raise GraphError("entity surface must be non-empty")

    @property
    def identity(self) -> tuple[str, str]:
        """Dedup key: (normalized surface, normalized class)."""
        return (normalize_surface(self.surface), self.entity_class.key)


@dataclass(frozen=True)
class Provenance:
    """Where a triple was extracted from: the claim or the i-th report."""

    kind: str  # "claim" | "report"
    report_index: int | None = None

    CLAIM_KIND = "claim"
    REPORT_KIND = "report"

    def __post_init__(self) -> None:
        if self.kind == self.CLAIM_KIND:
            if self.report_index is not None:
                raise GraphError("claim provenance carries no report index")
        elif self.kind == self.REPORT_KIND:
            if self.report_index is None or self.report_index < 0:
                raise GraphError("report provenance needs a non-negative index")
        else:
            raise GraphError(f"unknown provenance kind: {self.kind!r}")

    @classmethod
    def claim(cls) -> "Provenance":
        return cls(cls.CLAIM_KIND)

    @classmethod
    def report(cls, index: int) -> "Provenance":
        return cls(cls.REPORT_KIND, index)

    @property
    def is_claim(self) -> bool:
        return self.kind == self.CLAIM_KIND

    def as_str(self) -> str:
        if self.is_claim:
            return "claim"
        return f"report:{self.report_index}"

    @classmethod
    def from_str(cls, text: str) -> "Provenance":
        if text == "claim":
            return cls.claim()
        if text.startswith("report:"):
            return cls.report(int(text.split(":", 1)[1]))
        raise GraphError(f"unparseable provenance: {text!r}")


@dataclass(frozen=True)
class Triple:
    """Directed labeled edge; head/tail are entity ids in the owning graph."""

    head: str
    relation: Relation
    tail: str
    provenance: Provenance

    def __post_init__(self) -> None:
        if self.head == self.tail:
            raise GraphError(f"self-loop triple rejected: {self.head!r}")

    @property
    def key(self) -> tuple[str, str, str, str]:
        return (self.head, self.relation.key, self.tail, self.provenance.as_str())


@dataclass(frozen=True)
class KnowledgeGraph:
    """Immutable set of entities and provenance-tagged triples.

    Entities and triples keep insertion order so every downstream ordering
    (candidate generation, ranking tie-breaks) is reproducible.
    """

    entities: tuple[Entity, ...] = ()
    triples: tuple[Triple, ...] = ()
    _by_id: dict[str, Entity] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        by_id: dict[str, Entity] = {}
        for entity in self.entities:
            if entity.id in by_id:
                raise GraphError(f"duplicate entity id: {entity.id!r}")
            by_id[entity.id] = entity
        seen: set[tuple[str, str, str, str]] = set()
        for triple in self.triples:
            if triple.head not in by_id:
                raise GraphError(f"triple head does not resolve: {triple.head!r}")
            if triple.tail not in by_id:
                raise GraphError(f"triple tail does not resolve: {triple.tail!r}")
            if triple.key in seen:
                raise GraphError(f"duplicate triple: {triple.key}")
            seen.add(triple.key)
        object.__setattr__(self, "_by_id", by_id)

    def entity(self, entity_id: str) -> Entity:
        return self._by_id[entity_id]

    def has_entity(self, entity_id: str) -> bool:
        return entity_id in self._by_id

    @property
    def classes(self) -> tuple[EntityClass, ...]:
        out: list[EntityClass] = []
        seen: set[str] = set()
        for entity in self.entities:
            if entity.entity_class.key not in seen:
                seen.add(entity.entity_class.key)
                out.append(entity.entity_class)
        return tuple(out)

    @property
    def claim_triples(self) -> tuple[Triple, ...]:
        return tuple(t for t in self.triples if t.provenance.is_claim)

    def entities_of_class(
        self, entity_class: EntityClass, exclude: str | None = None
    ) -> list[Entity]:
        """All entities of the given class except `exclude`, in insertion order.

        An unknown class yields an empty list rather than an error.
        """
        return [
            e
            for e in self.entities
            if e.entity_class == entity_class and e.id != exclude
        ]

    def to_dict(self) -> dict:
        return {
            "entities": [
                {"id": e.id, "surface": e.surface, "class": e.entity_class.name}
                for e in self.entities
            ],
            "triples": [
                {
                    "head": t.head,
                    "relation": t.relation.label,
                    "tail": t.tail,
                    "provenance": t.provenance.as_str(),
                }
                for t in self.triples
            ],
        }

    def canonical_json(self) -> str:
        """Stable serialization (sorted keys, compact separators)."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, payload: dict) -> "KnowledgeGraph":
        entities = tuple(
            Entity(item["id"], item["surface"], EntityClass(item["class"]))
            for item in payload.get("entities", [])
        )
        triples = tuple(
            Triple(
                item["head"],
                Relation(item["relation"]),
                item["tail"],
                Provenance.from_str(item["provenance"]),
            )
            for item in payload.get("triples", [])
        )
        return cls(entities, triples)


def merge(graphs: Sequence[KnowledgeGraph] | Iterable[KnowledgeGraph]) -> KnowledgeGraph:
    """Union a list of graphs into one.

    Entities are unified by (normalized surface, class); the same surface under
    two classes stays as two entities so class disambiguation survives. Ids are
    reassigned deterministically (e1, e2, ... in first-seen order) and triples
    are remapped, unioned, and deduplicated with provenance preserved.
    """
    id_of: dict[tuple[str, str], str] = {}
    entities: list[Entity] = []
    triples: list[Triple] = []
    seen_triples: set[tuple[str, str, str, str]] = set()

    for graph in graphs:
        local_to_merged: dict[str, str] = {}
        for entity in graph.entities:
            key = entity.identity
            if key not in id_of:
                new_id = f"e{len(id_of) + 1}"
                id_of[key] = new_id
                entities.append(Entity(new_id, entity.surface, entity.entity_class))
            local_to_merged[entity.id] = id_of[key]
        for triple in graph.triples:
            head = local_to_merged[triple.head]
            tail = local_to_merged[triple.tail]
            if head == tail:
                # distinct local entities can collapse into one merged entity
                continue
            merged = Triple(head, triple.relation, tail, triple.provenance)
            if merged.key in seen_triples:
                continue
            seen_triples.add(merged.key)
            triples.append(merged)

    return KnowledgeGraph(tuple(entities), tuple(triples))
