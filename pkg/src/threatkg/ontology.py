"""Typed relation schema over threat entities, and ontology-guided correction.

A schema is an ordered list of directed relations, each with a domain and
a range of entity types.  It answers three questions: which relations are
admissible between two entity types, how to annotate candidate entity
pairs in a sentence, and how to repair (or reject) a classifier's relation
prediction that violates the schema.

The built-in default schema covers 15 relations over 19 entity types and
is shipped as ``data/default_schema.cfg``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Literal, Mapping, Sequence

from .errors import ContractError, ParseError, SchemaError, UnknownLabelError
from .tagger import EntitySpan


@dataclass(frozen=True)
class RelationSchema:
    """One directed relation: name, admissible head types, tail types."""

    name: str
    domain: frozenset[str]
    range: frozenset[str]
    priority: int

    def __post_init__(self):
        if not self.name or not self.name.strip():
            raise SchemaError("relation name must be non-empty")
        if not self.domain or not self.range:
            raise SchemaError(f"relation {self.name!r} needs non-empty domain and range")
        if self.priority < 1:
            raise SchemaError(f"relation {self.name!r} has priority {self.priority} < 1")

    def admits(self, head_type: str, tail_type: str) -> bool:
        return head_type in self.domain and tail_type in self.range


@dataclass(frozen=True)
class OntologySchema:
    """Priority-ordered relation collection with a closed type universe."""

    relations: tuple[RelationSchema, ...]
    types: frozenset[str]

    def __post_init__(self):
        seen: set[str] = set()
        last_priority = 0
        for rel in self.relations:
            if rel.name in seen:
                raise SchemaError(f"duplicate relation name {rel.name!r}")
            seen.add(rel.name)
            if rel.priority <= last_priority:
                raise SchemaError(
                    f"relation priorities must strictly increase "
                    f"({rel.name!r} has {rel.priority} after {last_priority})"
                )
            last_priority = rel.priority
            unknown = (rel.domain | rel.range) - self.types
            if unknown:
                raise SchemaError(
                    f"relation {rel.name!r} references unknown entity types "
                    f"{sorted(unknown)}"
                )

    @property
    def relation_names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.relations)

    def __contains__(self, relation_name: str) -> bool:
        return relation_name in self.relation_names


def valid_relations(schema: OntologySchema, head_type: str, tail_type: str) -> list[str]:
    """All relations admitting (head_type, tail_type), in priority order.

    Unknown types simply admit nothing; they are not an error.
    """
    return [r.name for r in schema.relations if r.admits(head_type, tail_type)]


def validity_matrix(schema: OntologySchema) -> dict[tuple[str, str], tuple[str, ...]]:
    """The full type-pair -> admissible-relations table."""
    types = sorted(schema.types)
    return {
        (h, t): tuple(valid_relations(schema, h, t)) for h in types for t in types
    }


@dataclass(frozen=True)
class RelationCandidate:
    """An ordered entity pair with its schema-admissible labels."""

    head: EntitySpan
    tail: EntitySpan
    valid_labels: tuple[str, ...]
    chosen_label: str | None
    ambiguous: bool

    def __post_init__(self):
        if self.chosen_label is not None and self.chosen_label not in self.valid_labels:
            raise ContractError(
                f"chosen label {self.chosen_label!r} not among {self.valid_labels}"
            )
        if self.ambiguous != (len(self.valid_labels) > 1):
            raise ContractError("ambiguous flag must mirror |valid_labels| > 1")


def _check_disjoint(spans: Sequence[EntitySpan]) -> None:
    ordered = sorted(spans, key=lambda s: s.start)
    for a, b in zip(ordered, ordered[1:]):
        if b.start <= a.end:
            raise ContractError(
                f"overlapping spans ({a.start},{a.end}) and ({b.start},{b.end})"
            )


def annotate_pairs(
    schema: OntologySchema, spans: Sequence[EntitySpan]
) -> list[RelationCandidate]:
    """Schema-admissible ordered pairs among one sentence's spans.

    Pairs with no admissible relation are discarded; a pair with exactly
    one is pre-labeled; a pair with several is emitted as ambiguous for a
    downstream classifier (or priority fallback) to resolve.
    """
    _check_disjoint(spans)
    ordered = sorted(spans, key=lambda s: s.start)
    out: list[RelationCandidate] = []
    for i, first in enumerate(ordered):
        for second in ordered[i + 1 :]:
            for head, tail in ((first, second), (second, first)):
                valid = valid_relations(schema, head.entity_type, tail.entity_type)
                if not valid:
                    continue
                out.append(
                    RelationCandidate(
                        head=head,
                        tail=tail,
                        valid_labels=tuple(valid),
                        chosen_label=valid[0] if len(valid) == 1 else None,
                        ambiguous=len(valid) > 1,
                    )
                )
    return out


Action = Literal["keep", "corrected", "rejected"]


@dataclass(frozen=True)
class Correction:
    """Outcome of schema correction: the action taken and the final label."""

    action: Action
    label: str | None

    def __post_init__(self):
        if (self.label is None) != (self.action == "rejected"):
            raise ContractError("label must be present exactly when not rejected")


def correct(
    schema: OntologySchema,
    head_type: str,
    tail_type: str,
    predicted_label: str,
    probabilities: Mapping[str, float],
) -> Correction:
    """Repair a classifier prediction against the schema.

    Schema-valid predictions are kept; invalid ones are replaced by the
    most probable admissible relation (priority order breaks ties, and
    decides outright when no admissible label has probability mass);
    pairs admitting nothing are rejected.
    """
    if predicted_label not in schema:
        raise UnknownLabelError(f"predicted label {predicted_label!r} not in schema")
    total = sum(probabilities.values())
    if abs(total - 1.0) > 1e-6:
        raise ContractError(f"probabilities sum to {total}, expected 1")
    valid = valid_relations(schema, head_type, tail_type)
    if not valid:
        return Correction("rejected", None)
    if predicted_label in valid:
        return Correction("keep", predicted_label)
    best = valid[0]
    best_p = probabilities.get(best, 0.0)
    for name in valid[1:]:
        p = probabilities.get(name, 0.0)
        if p > best_p:
            best, best_p = name, p
    return Correction("corrected", best)


def _parse_schema_lines(lines: Sequence[str]) -> OntologySchema:
    declared_types: frozenset[str] | None = None
    blocks: list[dict] = []
    current: dict | None = None

    def finish(line_no: int) -> None:
        nonlocal current
        if current is None:
            return
        missing = [k for k in ("domain", "range") if k not in current]
        if missing:
            raise ParseError(
                f"relation {current['name']!r} is missing {missing}", line_no
            )
        blocks.append(current)
        current = None

    for line_no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise ParseError(f"expected 'key: value', got {line!r}", line_no)
        key, value = key.strip(), value.strip()
        if key == "types":
            declared_types = frozenset(value.split())
        elif key == "relation":
            finish(line_no)
            current = {"name": value, "line": line_no}
        elif key in ("domain", "range"):
            if current is None:
                raise ParseError(f"{key!r} outside a relation block", line_no)
            current[key] = frozenset(value.split())
        else:
            raise ParseError(f"unknown key {key!r}", line_no)
    finish(len(lines))

    if not blocks:
        raise SchemaError("schema defines no relations")
    relations = tuple(
        RelationSchema(b["name"], b["domain"], b["range"], priority)
        for priority, b in enumerate(blocks, 1)
    )
    if declared_types is None:
        declared_types = frozenset().union(*((r.domain | r.range) for r in relations))
    return OntologySchema(relations, declared_types)


def load_schema(path: str | Path | None = None) -> OntologySchema:
    """Parse a schema file; with no path, return the built-in default."""
    if path is None:
        return default_schema()
    return _parse_schema_lines(Path(path).read_text(encoding="utf-8").splitlines())


@lru_cache(maxsize=1)
def default_schema() -> OntologySchema:
    path = Path(__file__).parent / "data" / "default_schema.cfg"
    schema = _parse_schema_lines(path.read_text(encoding="utf-8").splitlines())
    if len(schema.relations) != 15 or len(schema.types) != 19:
        raise SchemaError(
            f"packaged default schema is corrupt: {len(schema.relations)} relations "
            f"over {len(schema.types)} types"
        )
    return schema
