"""Embedded knowledge graph over extracted relation triples.

Nodes are (normalized surface, entity type) pairs -- the same string as a
TOOL and as a MAL stays two distinct nodes.  Duplicate triples reinforce
the existing edge (weight + provenance) instead of multiplying edges, and
identical-key self-loops are dropped.  The graph exports to JSON lines,
GraphML and Cypher, and persists in a single append-only log file with
snapshot compaction.
"""

from __future__ import annotations

import json
import re
import string
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Literal, Sequence

from .errors import ContractError, DataError, NotFoundError, StorageError
from .ontology import OntologySchema, default_schema
from .relation import RelationTriple
from .serialize import atomic_write_text

NodeKey = tuple[str, str]  # (normalized surface, entity type)

_WS = re.compile(r"\s+")


def normalize_surface(surface: str) -> str:
    """Node-identity form: casefold, collapse whitespace, strip surrounding
    punctuation (kept verbatim if that would erase the whole string)."""
    collapsed = _WS.sub(" ", surface.casefold()).strip()
    stripped = collapsed.strip(string.punctuation + " ")
    return stripped or collapsed


@dataclass
class KgNode:
    key: NodeKey
    surfaces: set[str] = field(default_factory=set)
    mention_count: int = 0

    @property
    def entity_type(self) -> str:
        return self.key[1]

    def as_dict(self) -> dict:
        return {
            "surface": self.key[0],
            "type": self.key[1],
            "surfaces": sorted(self.surfaces),
            "mentions": self.mention_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KgNode":
        return cls((d["surface"], d["type"]), set(d["surfaces"]), d["mentions"])


@dataclass
class KgEdge:
    src: NodeKey
    relation: str
    dst: NodeKey
    weight: int
    provenance: list[tuple[str, int]]

    @property
    def key(self) -> tuple[NodeKey, str, NodeKey]:
        return (self.src, self.relation, self.dst)

    def as_dict(self) -> dict:
        return {
            "src_surface": self.src[0],
            "src_type": self.src[1],
            "relation": self.relation,
            "dst_surface": self.dst[0],
            "dst_type": self.dst[1],
            "weight": self.weight,
            "provenance": [list(p) for p in self.provenance],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KgEdge":
        return cls(
            (d["src_surface"], d["src_type"]),
            d["relation"],
            (d["dst_surface"], d["dst_type"]),
            d["weight"],
            [(doc, sid) for doc, sid in d["provenance"]],
        )


@dataclass(frozen=True)
class IngestReport:
    nodes_added: int
    edges_added: int
    edges_reinforced: int
    self_loops_dropped: int
    rejected: tuple[str, ...]

    def as_dict(self) -> dict:
        return {
            "nodes_added": self.nodes_added,
            "edges_added": self.edges_added,
            "edges_reinforced": self.edges_reinforced,
            "self_loops_dropped": self.self_loops_dropped,
            "rejected": list(self.rejected),
        }


class KnowledgeGraph:
    def __init__(self, schema: OntologySchema | None = None):
        self.schema = schema if schema is not None else default_schema()
        self.nodes: dict[NodeKey, KgNode] = {}
        self.edges: dict[tuple[NodeKey, str, NodeKey], KgEdge] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    @classmethod
    def from_records(
        cls,
        nodes: Iterable[dict],
        edges: Iterable[dict],
        schema: OntologySchema | None = None,
    ) -> "KnowledgeGraph":
        graph = cls(schema)
        for d in nodes:
            node = KgNode.from_dict(d)
            graph.nodes[node.key] = node
        for d in edges:
            edge = KgEdge.from_dict(d)
            if edge.src not in graph.nodes or edge.dst not in graph.nodes:
                raise DataError(f"edge {edge.key} references a missing node")
            if edge.relation not in graph.schema:
                raise DataError(f"edge relation {edge.relation!r} not in schema")
            graph.edges[edge.key] = edge
        return graph


def upsert_triples(graph: KnowledgeGraph, triples: Sequence[RelationTriple]) -> IngestReport:
    """Merge triples into the graph; see the report for what changed."""
    nodes_added = edges_added = reinforced = loops = 0
    rejected: list[str] = []
    for triple in triples:
        if triple.relation not in graph.schema:
            rejected.append(
                f"relation {triple.relation!r} not in schema "
                f"({triple.head_surface!r} -> {triple.tail_surface!r})"
            )
            continue
        src = (normalize_surface(triple.head_surface), triple.head_type)
        dst = (normalize_surface(triple.tail_surface), triple.tail_type)
        if src == dst:
            loops += 1
            continue
        for key, surface in ((src, triple.head_surface), (dst, triple.tail_surface)):
            node = graph.nodes.get(key)
            if node is None:
                node = KgNode(key)
                graph.nodes[key] = node
                nodes_added += 1
            node.surfaces.add(surface)
            node.mention_count += 1
        edge = graph.edges.get((src, triple.relation, dst))
        if edge is None:
            graph.edges[(src, triple.relation, dst)] = KgEdge(
                src, triple.relation, dst, 1, [(triple.doc_id, triple.sentence_id)]
            )
            edges_added += 1
        else:
            edge.weight += 1
            edge.provenance.append((triple.doc_id, triple.sentence_id))
            reinforced += 1
    return IngestReport(nodes_added, edges_added, reinforced, loops, tuple(rejected))


Direction = Literal["out", "in", "both"]


def neighbors(
    graph: KnowledgeGraph,
    key: NodeKey,
    direction: Direction = "out",
    relation: str | None = None,
) -> list[tuple[KgEdge, KgNode]]:
    """Adjacent (edge, node) pairs, heaviest edges first."""
    if key not in graph.nodes:
        raise NotFoundError(f"node {key} not in graph")
    if direction not in ("out", "in", "both"):
        raise ContractError(f"unknown direction {direction!r}")
    out: list[tuple[KgEdge, KgNode]] = []
    for edge in graph.edges.values():
        if relation is not None and edge.relation != relation:
            continue
        if direction in ("out", "both") and edge.src == key:
            out.append((edge, graph.nodes[edge.dst]))
        if direction in ("in", "both") and edge.dst == key:
            out.append((edge, graph.nodes[edge.src]))
    out.sort(key=lambda pair: (-pair[0].weight, pair[1].key, pair[0].relation))
    return out


def find_paths(
    graph: KnowledgeGraph,
    src: NodeKey,
    dst: NodeKey,
    max_len: int,
    limit: int = 1000,
) -> list[list[KgEdge]]:
    """All simple directed src->dst paths of at most max_len edges.

    Paths come out in lexicographic order of their (dst key, relation)
    edge sequences; enumeration stops once ``limit`` paths are collected.
    """
    if not 1 <= max_len <= 6:
        raise ContractError(f"max_len must lie in [1, 6], got {max_len}")
    for key in (src, dst):
        if key not in graph.nodes:
            raise NotFoundError(f"node {key} not in graph")

    adjacency: dict[NodeKey, list[KgEdge]] = {}
    for edge in graph.edges.values():
        adjacency.setdefault(edge.src, []).append(edge)
    for edges in adjacency.values():
        edges.sort(key=lambda e: (e.dst, e.relation))

    paths: list[list[KgEdge]] = []
    stack: list[KgEdge] = []
    visited = {src}

    def walk(node: NodeKey) -> None:
        if len(stack) == max_len:
            return
        for edge in adjacency.get(node, ()):
            if len(paths) >= limit:
                return
            if edge.dst == dst:  # record; going through dst would revisit it
                paths.append([*stack, edge])
            elif edge.dst not in visited:
                visited.add(edge.dst)
                stack.append(edge)
                walk(edge.dst)
                stack.pop()
                visited.discard(edge.dst)

    walk(src)
    return paths[:limit]


def export_jsonl(graph: KnowledgeGraph) -> str:
    """Self-describing node and edge records, one JSON object per line."""
    lines = []
    for key in sorted(graph.nodes):
        lines.append(json.dumps({"kind": "node", **graph.nodes[key].as_dict()}))
    for key in sorted(graph.edges):
        lines.append(json.dumps({"kind": "edge", **graph.edges[key].as_dict()}))
    return "".join(line + "\n" for line in lines)


def import_jsonl(text: str, schema: OntologySchema | None = None) -> KnowledgeGraph:
    nodes: list[dict] = []
    edges: list[dict] = []
    for line_no, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        record = json.loads(line)
        kind = record.pop("kind", None)
        if kind == "node":
            nodes.append(record)
        elif kind == "edge":
            edges.append(record)
        else:
            raise DataError(f"line {line_no}: unknown record kind {kind!r}")
    return KnowledgeGraph.from_records(nodes, edges, schema)


def export_graphml(graph: KnowledgeGraph) -> str:
    """GraphML with typed node/edge attribute keys."""
    root = ET.Element("graphml", xmlns="http://graphml.graphdrawing.org/xmlns")
    keys = [
        ("surface", "node", "string"),
        ("type", "node", "string"),
        ("surfaces", "node", "string"),
        ("mentions", "node", "int"),
        ("relation", "edge", "string"),
        ("weight", "edge", "int"),
        ("provenance", "edge", "string"),
    ]
    for name, domain, attr_type in keys:
        ET.SubElement(
            root, "key", id=name, attrib={"for": domain},
            **{"attr.name": name, "attr.type": attr_type},
        )
    g = ET.SubElement(root, "graph", id="G", edgedefault="directed")
    node_ids = {key: f"n{i}" for i, key in enumerate(sorted(graph.nodes))}
    for key, node_id in node_ids.items():
        node = graph.nodes[key]
        el = ET.SubElement(g, "node", id=node_id)
        values = {
            "surface": key[0],
            "type": key[1],
            "surfaces": json.dumps(sorted(node.surfaces)),
            "mentions": str(node.mention_count),
        }
        for name, value in values.items():
            data = ET.SubElement(el, "data", key=name)
            data.text = value
    for i, key in enumerate(sorted(graph.edges)):
        edge = graph.edges[key]
        el = ET.SubElement(
            g, "edge", id=f"e{i}", source=node_ids[edge.src], target=node_ids[edge.dst]
        )
        values = {
            "relation": edge.relation,
            "weight": str(edge.weight),
            "provenance": json.dumps([list(p) for p in edge.provenance]),
        }
        for name, value in values.items():
            data = ET.SubElement(el, "data", key=name)
            data.text = value
    ET.indent(root)
    return ET.tostring(root, encoding="unicode", xml_declaration=True) + "\n"


def _cypher_str(value: str) -> str:
    return "'" + value.replace("\\", "\\\\").replace("'", "\\'") + "'"


def export_cypher(graph: KnowledgeGraph) -> str:
    """Idempotent MERGE statements: one per node, then one per edge."""
    lines = []
    for key in sorted(graph.nodes):
        node = graph.nodes[key]
        lines.append(
            f"MERGE (n:Entity {{surface: {_cypher_str(key[0])}, "
            f"type: {_cypher_str(key[1])}}}) "
            f"SET n.mentions = {node.mention_count}, "
            f"n.surfaces = {json.dumps(sorted(node.surfaces))};"
        )
    for key in sorted(graph.edges):
        edge = graph.edges[key]
        lines.append(
            f"MATCH (a:Entity {{surface: {_cypher_str(edge.src[0])}, "
            f"type: {_cypher_str(edge.src[1])}}}), "
            f"(b:Entity {{surface: {_cypher_str(edge.dst[0])}, "
            f"type: {_cypher_str(edge.dst[1])}}}) "
            f"MERGE (a)-[r:`{edge.relation}`]->(b) "
            f"SET r.weight = {edge.weight};"
        )
    return "".join(line + "\n" for line in lines)


def export(graph: KnowledgeGraph, fmt: str, sink: str | Path | IO[str]) -> int:
    """Serialize to ``sink`` (path or text stream); returns bytes written."""
    renderers = {"jsonl": export_jsonl, "graphml": export_graphml, "cypher": export_cypher}
    if fmt not in renderers:
        raise ContractError(f"unknown export format {fmt!r}")
    text = renderers[fmt](graph)
    payload = text.encode("utf-8")
    if isinstance(sink, (str, Path)):
        atomic_write_text(sink, text)
    else:
        try:
            sink.write(text)
        except OSError as exc:
            raise StorageError(f"export write failed: {exc}") from exc
    return len(payload)


class GraphStore:
    """Single-file persistence: an append-only log of triple batches with
    an optional leading snapshot line written by :meth:`compact`."""

    def __init__(self, path: str | Path, schema: OntologySchema | None = None):
        self.path = Path(path)
        self.schema = schema if schema is not None else default_schema()

    def load(self) -> KnowledgeGraph:
        graph = KnowledgeGraph(self.schema)
        if not self.path.exists():
            return graph
        try:
            lines = self.path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise StorageError(f"could not read graph store {self.path}: {exc}") from exc
        for line_no, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StorageError(f"{self.path}:{line_no}: corrupt record: {exc}") from exc
            if "snapshot" in record:
                snap = record["snapshot"]
                graph = KnowledgeGraph.from_records(
                    snap["nodes"], snap["edges"], self.schema
                )
            elif "batch" in record:
                triples = [RelationTriple.from_dict(d) for d in record["batch"]]
                upsert_triples(graph, triples)
            else:
                raise StorageError(f"{self.path}:{line_no}: unknown record type")
        return graph

    def append(self, triples: Sequence[RelationTriple]) -> None:
        record = {"batch": [t.as_dict() for t in triples]}
        try:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")
        except OSError as exc:
            raise StorageError(f"could not append to {self.path}: {exc}") from exc

    def compact(self, graph: KnowledgeGraph | None = None) -> None:
        """Collapse the log into one snapshot line."""
        if graph is None:
            graph = self.load()
        snapshot = {
            "snapshot": {
                "nodes": [graph.nodes[k].as_dict() for k in sorted(graph.nodes)],
                "edges": [graph.edges[k].as_dict() for k in sorted(graph.edges)],
            }
        }
        atomic_write_text(self.path, json.dumps(snapshot) + "\n")
