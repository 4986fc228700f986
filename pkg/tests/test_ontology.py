"""Relation schema: validity queries, pair annotation, hybrid correction.

``RELATION_ARROWS`` below is an independent transcription of the shipped
schema, typed by hand as name -> (domain, range) tuples.  The exhaustive
matrix test compares the packaged schema file against it cell by cell, so
a typo in either representation shows up as a mismatch.
"""

from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from threatkg.errors import ContractError, DataError, ParseError, SchemaError, UnknownLabelError
from threatkg.ontology import (
    Correction,
    OntologySchema,
    RelationCandidate,
    RelationSchema,
    annotate_pairs,
    correct,
    default_schema,
    load_schema,
    valid_relations,
    validity_matrix,
)
from threatkg.tagger import EntitySpan

ENTITY_TYPES = (
    "ACT", "APT", "DOM", "EMAIL", "ENCR", "FILE", "HASH", "IDTY", "IP", "LOC",
    "MAL", "OS", "PROT", "SECTEAM", "TIME", "TOOL", "URL", "VULID", "VULNAME",
)

RELATION_ARROWS: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "affiliatedWith": (("APT",), ("APT",)),
    "associatedWith": (
        ("HASH", "VULNAME", "VULID"),
        ("EMAIL", "ACT", "ENCR", "DOM", "URL", "TOOL", "OS", "PROT"),
    ),
    "contains": (("FILE", "EMAIL"), ("MAL", "IP", "URL")),
    "hasAttackLocation": (("APT", "MAL", "ACT"), ("LOC",)),
    "hasAttackTime": (("APT", "MAL", "ACT"), ("TIME",)),
    "hasLocation": (("IDTY", "SECTEAM"), ("LOC",)),
    "hasVulnerability": (
        ("IDTY", "OS", "URL", "DOM", "PROT", "FILE"),
        ("VULID", "VULNAME"),
    ),
    "identifies": (("SECTEAM",), ("APT", "MAL", "VULNAME", "VULID", "ACT")),
    "identifiedBy": (("APT", "MAL", "VULNAME", "VULID", "ACT"), ("SECTEAM",)),
    "monitors": (("SECTEAM",), ("IDTY", "DOM", "FILE")),
    "monitoredBy": (("IDTY", "LOC", "FILE"), ("SECTEAM",)),
    "targets": (("APT", "MAL", "ACT"), ("IDTY", "DOM", "VULNAME", "VULID", "OS")),
    "targetedBy": (
        ("IDTY", "DOM", "VULNAME", "VULID", "OS", "LOC"),
        ("APT", "MAL", "ACT"),
    ),
    "uses": (
        ("APT", "MAL", "ACT"),
        ("EMAIL", "IP", "URL", "FILE", "TOOL", "HASH", "ENCR", "MAL", "ACT"),
    ),
    "usedBy": (
        ("EMAIL", "IP", "URL", "FILE", "TOOL", "HASH", "ENCR", "MAL", "ACT"),
        ("APT", "MAL", "ACT"),
    ),
}


def expected_relations(head: str, tail: str) -> list[str]:
    """Oracle lookup straight from the hand-typed arrow table."""
    return [
        name
        for name, (domain, rng) in RELATION_ARROWS.items()
        if head in domain and tail in rng
    ]


def span(start, end, etype, surface="x", doc="d", sid=0) -> EntitySpan:
    return EntitySpan(doc, sid, start, end, etype, surface)


# --------------------------------------------------------------------------
# Default schema shape
# --------------------------------------------------------------------------


def test_default_schema_size_and_priorities():
    schema = default_schema()
    assert len(schema.relations) == 15
    assert [r.priority for r in schema.relations] == list(range(1, 16))
    assert schema.relation_names == tuple(RELATION_ARROWS)
    assert schema.types == frozenset(ENTITY_TYPES)
    assert "uses" in schema
    assert "flies" not in schema


def test_default_schema_domains_and_ranges_exactly():
    schema = default_schema()
    by_name = {r.name: r for r in schema.relations}
    for name, (domain, rng) in RELATION_ARROWS.items():
        assert by_name[name].domain == frozenset(domain), name
        assert by_name[name].range == frozenset(rng), name


def test_full_validity_matrix_matches_hand_transcription():
    schema = default_schema()
    matrix = validity_matrix(schema)
    assert len(matrix) == 19 * 19
    mismatches = [
        (head, tail)
        for head, tail in itertools.product(ENTITY_TYPES, repeat=2)
        if list(matrix[(head, tail)]) != expected_relations(head, tail)
    ]
    assert mismatches == []


# --------------------------------------------------------------------------
# valid_relations
# --------------------------------------------------------------------------


def test_valid_relations_examples():
    schema = default_schema()
    assert valid_relations(schema, "APT", "APT") == ["affiliatedWith"]
    assert valid_relations(schema, "MAL", "ACT") == ["uses", "usedBy"]
    assert valid_relations(schema, "TIME", "IP") == []


def test_valid_relations_priority_order():
    schema = default_schema()
    # (FILE, URL): contains (3rd) before uses? FILE not in uses.domain;
    # hasVulnerability's range excludes URL -> exactly [contains]
    assert valid_relations(schema, "FILE", "URL") == ["contains"]
    # (APT, MAL): targets excludes MAL in range; uses includes it
    assert valid_relations(schema, "APT", "MAL") == ["uses"]
    # (SECTEAM, APT): identifies only
    assert valid_relations(schema, "SECTEAM", "APT") == ["identifies"]


def test_valid_relations_unknown_types_yield_empty():
    schema = default_schema()
    assert valid_relations(schema, "DRAGON", "APT") == []
    assert valid_relations(schema, "APT", "DRAGON") == []


@settings(max_examples=100)
@given(st.sampled_from(ENTITY_TYPES), st.sampled_from(ENTITY_TYPES))
def test_valid_relations_property_matches_oracle(head, tail):
    assert valid_relations(default_schema(), head, tail) == expected_relations(head, tail)


# --------------------------------------------------------------------------
# annotate_pairs
# --------------------------------------------------------------------------


def test_annotate_apt_loc_yields_both_directions():
    spans = [span(0, 0, "APT", "APT28"), span(3, 3, "LOC", "France")]
    candidates = annotate_pairs(default_schema(), spans)
    assert len(candidates) == 2
    forward, backward = candidates
    assert forward.head.entity_type == "APT"
    assert forward.chosen_label == "hasAttackLocation"
    assert not forward.ambiguous
    assert backward.head.entity_type == "LOC"
    assert backward.chosen_label == "targetedBy"


def test_annotate_file_mal_is_ambiguous():
    # both contains and usedBy admit (FILE, MAL), so the pair needs a
    # classifier (or priority fallback) to resolve
    spans = [span(0, 0, "FILE", "a.exe"), span(2, 2, "MAL", "Emotet")]
    candidates = annotate_pairs(default_schema(), spans)
    by_head = {c.head.entity_type: c for c in candidates}
    file_mal = by_head["FILE"]
    assert file_mal.valid_labels == ("contains", "usedBy")
    assert file_mal.ambiguous and file_mal.chosen_label is None
    # reverse direction (MAL, FILE): only uses
    assert by_head["MAL"].chosen_label == "uses"


def test_annotate_mal_mal_ambiguous():
    spans = [span(0, 0, "MAL", "Emotet"), span(2, 2, "MAL", "Dridex")]
    candidates = annotate_pairs(default_schema(), spans)
    assert len(candidates) == 2
    for cand in candidates:
        assert cand.valid_labels == ("uses", "usedBy")
        assert cand.ambiguous


def test_annotate_discards_invalid_pairs():
    spans = [span(0, 0, "TIME", "today"), span(2, 2, "IP", "1.2.3.4")]
    candidates = annotate_pairs(default_schema(), spans)
    # (TIME, IP) has no relation; (IP, TIME) neither
    assert candidates == []


def test_annotate_pair_count_bound():
    spans = [
        span(0, 0, "APT"), span(2, 2, "MAL"), span(4, 4, "ACT"), span(6, 6, "LOC"),
    ]
    candidates = annotate_pairs(default_schema(), spans)
    n = len(spans)
    assert len(candidates) <= n * (n - 1)


def test_annotate_rejects_overlapping_spans():
    with pytest.raises(ContractError):
        annotate_pairs(default_schema(), [span(0, 2, "APT"), span(2, 3, "MAL")])


def test_annotate_orders_pairs_by_sentence_position():
    spans = [span(5, 5, "LOC", "France"), span(0, 0, "APT", "APT28")]
    candidates = annotate_pairs(default_schema(), spans)
    # first emitted pair has the left-most span as head
    assert candidates[0].head.entity_type == "APT"


# --------------------------------------------------------------------------
# correct
# --------------------------------------------------------------------------


def uniform_probs() -> dict[str, float]:
    names = list(RELATION_ARROWS)
    return {name: 1.0 / len(names) for name in names}


def test_correct_replaces_invalid_prediction():
    # (APT, TOOL): targets does not admit TOOL, uses is the sole valid label
    decision = correct(default_schema(), "APT", "TOOL", "targets", uniform_probs())
    assert decision.action == "corrected"
    assert decision.label == "uses"


def test_correct_keeps_valid_prediction():
    decision = correct(default_schema(), "APT", "APT", "affiliatedWith", uniform_probs())
    assert decision == Correction("keep", "affiliatedWith")


def test_correct_rejects_empty_valid_set():
    decision = correct(default_schema(), "TIME", "IP", "uses", uniform_probs())
    assert decision == Correction("rejected", None)


def test_correct_picks_probability_argmax_over_valid():
    # (FILE, MAL) admits [contains, usedBy]; prediction 'targets' is invalid
    probs = {name: 0.0 for name in RELATION_ARROWS}
    probs.update({"targets": 0.4, "usedBy": 0.35, "contains": 0.25})
    decision = correct(default_schema(), "FILE", "MAL", "targets", probs)
    assert decision == Correction("corrected", "usedBy")


def test_correct_breaks_probability_ties_by_priority():
    probs = {name: 0.0 for name in RELATION_ARROWS}
    probs.update({"targets": 0.5, "usedBy": 0.25, "contains": 0.25})
    decision = correct(default_schema(), "FILE", "MAL", "targets", probs)
    assert decision.label == "contains"  # listed before usedBy


def test_correct_treats_missing_probabilities_as_zero():
    decision = correct(default_schema(), "FILE", "MAL", "targets", {"targets": 1.0})
    assert decision == Correction("corrected", "contains")


def test_correct_rejects_unknown_predicted_label():
    with pytest.raises(UnknownLabelError):
        correct(default_schema(), "APT", "APT", "owns", uniform_probs())


def test_correct_validates_probability_sum():
    with pytest.raises(ContractError):
        correct(default_schema(), "APT", "APT", "uses", {"uses": 0.7})


def test_correction_invariant():
    with pytest.raises(ContractError):
        Correction("rejected", "uses")
    with pytest.raises(ContractError):
        Correction("keep", None)


@settings(max_examples=300)
@given(
    st.sampled_from(ENTITY_TYPES),
    st.sampled_from(ENTITY_TYPES),
    st.sampled_from(sorted(RELATION_ARROWS)),
    st.lists(
        st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
        min_size=15,
        max_size=15,
    ),
)
def test_correct_never_emits_invalid_label(head, tail, predicted, weights):
    total = sum(weights) or 1.0
    probs = {
        name: (w / total if sum(weights) else 1.0 / 15)
        for name, w in zip(sorted(RELATION_ARROWS), weights)
    }
    decision = correct(default_schema(), head, tail, predicted, probs)
    valid = expected_relations(head, tail)
    if not valid:
        assert decision.action == "rejected" and decision.label is None
    else:
        assert decision.label in valid
        if predicted in valid:
            assert decision == Correction("keep", predicted)


# --------------------------------------------------------------------------
# Inverse-pair consistency of the shipped schema
# --------------------------------------------------------------------------


@pytest.mark.parametrize(
    "forward,backward,heads",
    [
        ("uses", "usedBy", ("APT", "MAL", "ACT")),
        ("identifies", "identifiedBy", ("SECTEAM",)),
    ],
)
def test_inverse_pairs_mirror(forward, backward, heads):
    schema = default_schema()
    for head in heads:
        for tail in ENTITY_TYPES:
            if forward in valid_relations(schema, head, tail):
                assert backward in valid_relations(schema, tail, head), (head, tail)


def test_targets_targeted_by_asymmetry():
    # LOC appears in targetedBy's domain but not in targets' range: a
    # location can be attributed to an attacker without being a "target"
    schema = default_schema()
    assert "targetedBy" in valid_relations(schema, "LOC", "APT")
    assert "targets" not in valid_relations(schema, "APT", "LOC")


# --------------------------------------------------------------------------
# Schema loading
# --------------------------------------------------------------------------


def test_load_schema_default_and_from_file(tmp_path):
    assert load_schema() is default_schema() or len(load_schema().relations) == 15

    path = tmp_path / "mini.cfg"
    path.write_text(
        "# a one-relation schema\n"
        "types: A B\n"
        "relation: knows\n"
        "domain: A\n"
        "range: B\n",
        encoding="utf-8",
    )
    schema = load_schema(path)
    assert schema.relation_names == ("knows",)
    assert schema.relations[0].priority == 1
    assert valid_relations(schema, "A", "B") == ["knows"]
    assert valid_relations(schema, "B", "A") == []


def test_load_schema_duplicate_name(tmp_path):
    path = tmp_path / "dup.cfg"
    path.write_text(
        "relation: r\ndomain: A\nrange: B\nrelation: r\ndomain: B\nrange: A\n",
        encoding="utf-8",
    )
    with pytest.raises(SchemaError):
        load_schema(path)


def test_load_schema_unknown_type_against_declared_universe(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text(
        "types: A B\nrelation: r\ndomain: A\nrange: C\n", encoding="utf-8"
    )
    with pytest.raises((SchemaError, ParseError)):
        load_schema(path)


def test_load_schema_missing_range(tmp_path):
    path = tmp_path / "incomplete.cfg"
    path.write_text("relation: r\ndomain: A\n", encoding="utf-8")
    with pytest.raises(ParseError):
        load_schema(path)


def test_load_schema_bad_line_reports_number(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("relation: r\ndomain: A\nrange: B\ngibberish\n", encoding="utf-8")
    with pytest.raises(ParseError) as err:
        load_schema(path)
    assert err.value.line_no == 4


# --------------------------------------------------------------------------
# Type invariants
# --------------------------------------------------------------------------


def test_relation_schema_invariants():
    with pytest.raises(SchemaError):
        RelationSchema("r", frozenset(), frozenset({"A"}), 1)
    with pytest.raises(SchemaError):
        RelationSchema("", frozenset({"A"}), frozenset({"A"}), 1)


def test_ontology_schema_invariants():
    r1 = RelationSchema("a", frozenset({"X"}), frozenset({"X"}), 1)
    r2 = RelationSchema("b", frozenset({"X"}), frozenset({"X"}), 1)  # same priority
    with pytest.raises(SchemaError):
        OntologySchema((r1, r2), frozenset({"X"}))
    r3 = RelationSchema("a", frozenset({"X"}), frozenset({"X"}), 2)
    with pytest.raises(SchemaError):
        OntologySchema((r1, r3), frozenset({"X"}))  # duplicate name
    with pytest.raises(SchemaError):
        OntologySchema((r1,), frozenset())  # X not in universe


def test_relation_candidate_invariants():
    head, tail = span(0, 0, "APT"), span(2, 2, "LOC")
    with pytest.raises(ContractError):
        RelationCandidate(head, tail, ("a", "b"), chosen_label="c", ambiguous=True)
    with pytest.raises(ContractError):
        RelationCandidate(head, tail, ("a", "b"), chosen_label=None, ambiguous=False)
