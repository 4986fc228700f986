"""Threat-intelligence text -> typed entities -> relation triples -> graph.

The pipeline has three stages: a BiGRU-CRF sequence tagger extracts typed
entity mentions from report sentences, a BiGRU relation classifier (with
ontology-based correction) links entity pairs, and the resulting triples
are merged into a queryable, exportable knowledge graph.
"""

from .corpus import (
    Corpus,
    CorpusStats,
    MergeMap,
    TaggedSentence,
    Token,
    consolidate,
    default_merge_map,
    parse_bio,
    parse_bio_file,
    serialize_bio,
    split,
    stats,
    tokenize_report,
)
from .crf import LabelSpace, TransitionMatrix, bio_mask, structural_mask
from .embeddings import (
    EmbeddingSource,
    HashedFeatureEmbedding,
    LookupEmbedding,
    PrecomputedEmbedding,
    read_embedding_file,
    write_embedding_file,
)
from .errors import ThreatKgError
from .graph import (
    GraphStore,
    KgEdge,
    KgNode,
    KnowledgeGraph,
    export,
    find_paths,
    import_jsonl,
    neighbors,
    normalize_surface,
    upsert_triples,
)
from .gru import GruLayer, GruParams, bigru_forward, gru_forward
from .ontology import (
    OntologySchema,
    RelationCandidate,
    RelationSchema,
    annotate_pairs,
    correct,
    default_schema,
    load_schema,
    valid_relations,
)
from .pipeline import PipelineConfig, PipelineReport, run_pipeline
from .relation import (
    ReInstance,
    ReModel,
    ReTrainConfig,
    RelationTriple,
    build_instances,
    evaluate_re,
    load_re,
    predict_relations,
    re_forward,
    save_re,
    train_re,
)
from .tagger import (
    EntitySpan,
    NerMetrics,
    NerModel,
    Prf,
    TrainConfig,
    evaluate_ner,
    extract_spans,
    load_ner,
    predict_tags,
    save_ner,
    spans_to_tags,
    train_ner,
)

__version__ = "0.1.0"

__all__ = [
    "Corpus", "CorpusStats", "MergeMap", "TaggedSentence", "Token",
    "consolidate", "default_merge_map", "parse_bio", "parse_bio_file",
    "serialize_bio", "split", "stats", "tokenize_report",
    "LabelSpace", "TransitionMatrix", "bio_mask", "structural_mask",
    "EmbeddingSource", "HashedFeatureEmbedding", "LookupEmbedding",
    "PrecomputedEmbedding", "read_embedding_file", "write_embedding_file",
    "ThreatKgError",
    "GraphStore", "KgEdge", "KgNode", "KnowledgeGraph", "export",
    "find_paths", "import_jsonl", "neighbors", "normalize_surface",
    "upsert_triples",
    "GruLayer", "GruParams", "bigru_forward", "gru_forward",
    "OntologySchema", "RelationCandidate", "RelationSchema",
    "annotate_pairs", "correct", "default_schema", "load_schema",
    "valid_relations",
    "PipelineConfig", "PipelineReport", "run_pipeline",
    "ReInstance", "ReModel", "ReTrainConfig", "RelationTriple",
    "build_instances", "evaluate_re", "load_re", "predict_relations",
    "re_forward", "save_re", "train_re",
    "EntitySpan", "NerMetrics", "NerModel", "Prf", "TrainConfig",
    "evaluate_ner", "extract_spans", "load_ner", "predict_tags",
    "save_ner", "spans_to_tags", "train_ner",
    "__version__",
]
