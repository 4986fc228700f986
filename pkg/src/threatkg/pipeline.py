"""End-to-end extraction: raw reports -> spans -> triples -> graph.

Stages run sequentially (tokenize, tag, relations, graph); counts and
wall time are collected per stage, and any failure is wrapped in a
:class:`~threatkg.errors.PipelineStageError` naming the failing stage.
Given fixed checkpoints, seeds and inputs, the triples file is
byte-identical across runs.
"""

from __future__ import annotations

import dataclasses
import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import TaggedSentence, tokenize_report
from .embeddings import EmbeddingSource, PrecomputedEmbedding
from .errors import DataError, PipelineStageError, StorageError, ThreatKgError
from .graph import GraphStore, IngestReport, KnowledgeGraph, upsert_triples
from .ontology import OntologySchema, load_schema
from .relation import ReModel, RelationTriple, load_re, predict_relations
from .serialize import atomic_write_text
from .tagger import EntitySpan, NerModel, extract_spans, load_ner, predict_tags


@dataclass(frozen=True)
class PipelineConfig:
    """Paths and switches for one end-to-end run."""

    ner_checkpoint: Path
    re_checkpoint: Path | None = None
    schema_path: Path | None = None
    embeddings_path: Path | None = None
    graph_store: Path | None = None
    correction_mode: str = "hybrid"  # or "ontology-only"
    refang: bool = False
    ambiguous_fallback: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.correction_mode not in ("hybrid", "ontology-only"):
            raise DataError(f"unknown correction mode {self.correction_mode!r}")
        if self.correction_mode == "hybrid" and self.re_checkpoint is None:
            raise DataError("hybrid mode needs a relation checkpoint")

    def validate_paths(self) -> None:
        """Fail fast on missing inputs, before any model loads."""
        required = [("ner checkpoint", self.ner_checkpoint)]
        if self.re_checkpoint is not None:
            required.append(("relation checkpoint", self.re_checkpoint))
        if self.schema_path is not None:
            required.append(("schema", self.schema_path))
        if self.embeddings_path is not None:
            required.append(("embeddings", self.embeddings_path))
        for what, path in required:
            if not Path(path).is_file():
                raise StorageError(f"{what} not found: {path}")

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise DataError(f"unknown pipeline config keys: {sorted(unknown)}")
        paths = {"ner_checkpoint", "re_checkpoint", "schema_path",
                 "embeddings_path", "graph_store"}
        kwargs = {
            k: (Path(v) if k in paths and v is not None else v) for k, v in raw.items()
        }
        return cls(**kwargs)


@dataclass
class PipelineReport:
    documents: int = 0
    sentences: int = 0
    tokens: int = 0
    spans: int = 0
    triples: int = 0
    ingest: IngestReport | None = None
    timings: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "documents": self.documents,
            "sentences": self.sentences,
            "tokens": self.tokens,
            "spans": self.spans,
            "triples": self.triples,
            "ingest": self.ingest.as_dict() if self.ingest else None,
            "timings": {k: round(v, 6) for k, v in self.timings.items()},
        }


@contextmanager
def _stage(name: str, timings: dict[str, float]):
    started = time.perf_counter()
    try:
        yield
    except ThreatKgError as exc:
        raise PipelineStageError(name, exc) from exc
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - started


def _read_reports(input_dir: Path) -> list[tuple[str, str]]:
    if not input_dir.is_dir():
        raise StorageError(f"input directory not found: {input_dir}")
    reports = []
    for path in sorted(input_dir.glob("*.txt")):
        try:
            reports.append((path.stem, path.read_text(encoding="utf-8")))
        except (OSError, UnicodeDecodeError) as exc:
            raise StorageError(f"unreadable report {path}: {exc}") from exc
    return reports


def run_pipeline(
    config: PipelineConfig, input_dir: str | Path, triples_path: str | Path
) -> PipelineReport:
    """Extract triples from every ``*.txt`` under ``input_dir``.

    Writes one JSON triple per line to ``triples_path``, updates the graph
    store when configured, and returns the per-stage run report.
    """
    report = PipelineReport()
    timings = report.timings

    with _stage("load-models", timings):
        config.validate_paths()
        schema = load_schema(config.schema_path)
        external: EmbeddingSource | None = None
        if config.embeddings_path is not None:
            external = PrecomputedEmbedding.open(config.embeddings_path)
        ner: NerModel = load_ner(config.ner_checkpoint, external)
        re_model: ReModel | None = None
        if config.correction_mode == "hybrid":
            re_model = load_re(config.re_checkpoint, external)

    with _stage("tokenize", timings):
        reports = _read_reports(Path(input_dir))
        sentences: list[TaggedSentence] = []
        for doc_id, text in reports:
            sentences.extend(
                tokenize_report(text, refang_text=config.refang, doc_id=doc_id)
            )
        report.documents = len(reports)
        report.sentences = len(sentences)
        report.tokens = sum(len(s) for s in sentences)

    with _stage("tag", timings):
        spans_per_sentence: list[list[EntitySpan]] = []
        for sentence in sentences:
            tags = predict_tags(ner, sentence)
            spans_per_sentence.append(extract_spans(tags, sentence))
        report.spans = sum(len(s) for s in spans_per_sentence)

    with _stage("relations", timings):
        triples: list[RelationTriple] = []
        for sentence, spans in zip(sentences, spans_per_sentence):
            triples.extend(
                predict_relations(
                    re_model, schema, sentence, spans,
                    ambiguous_fallback=config.ambiguous_fallback,
                )
            )
        report.triples = len(triples)

    with _stage("write-triples", timings):
        atomic_write_text(
            triples_path, "".join(json.dumps(t.as_dict()) + "\n" for t in triples)
        )

    if config.graph_store is not None:
        with _stage("graph", timings):
            store = GraphStore(config.graph_store, schema)
            graph: KnowledgeGraph = store.load()
            report.ingest = upsert_triples(graph, triples)
            if triples:
                store.append(triples)
    return report
