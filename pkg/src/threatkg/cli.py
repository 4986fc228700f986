"""Command-line entry point for the whole extraction pipeline.

Subcommands mirror the library modules: ``corpus`` (parse/stats/
consolidate/split), ``ner`` (train/eval/tag), ``re`` (train/eval/
predict), ``ontology`` (validate/annotate), ``graph`` (build/query/
export) and ``pipeline run``.  Every command honours the global
``--json`` flag and exits 0 on success, 2 on usage errors, 3 on data
errors, 4 on model errors and 5 on I/O errors.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import corpus as corpus_mod
from . import graph as graph_mod
from . import ontology as ontology_mod
from . import relation as relation_mod
from . import tagger as tagger_mod
from .embeddings import (
    EmbeddingSource,
    HashedFeatureEmbedding,
    LookupEmbedding,
    PrecomputedEmbedding,
)
from .errors import ThreatKgError
from .pipeline import PipelineConfig, run_pipeline
from .serialize import atomic_write_text


@click.group()
@click.option("--json", "as_json", is_flag=True, help="Emit machine-readable JSON.")
@click.pass_context
def cli(ctx: click.Context, as_json: bool) -> None:
    """Threat-intelligence entity/relation extraction and graph tooling."""
    ctx.obj = {"json": as_json}


def _emit(ctx: click.Context, payload: dict, human: str | None = None) -> None:
    if ctx.obj["json"] or human is None:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    else:
        click.echo(human, nl=human and not human.endswith("\n"))


def _write_or_print(text: str, output: str | None) -> None:
    if output is None or output == "-":
        click.echo(text, nl=False)
    else:
        atomic_write_text(output, text)


def _read_input(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


# --------------------------------------------------------------------------
# corpus


@cli.group("corpus")
def corpus_group() -> None:
    """BIO corpus management."""


@corpus_group.command("parse")
@click.argument("input_path")
@click.option("--refang", is_flag=True, help="Undo defanged indicators (hxxp, [.]) first.")
@click.option("--doc-id", default=None, help="Document id (default: input file stem).")
@click.option("-o", "--output", default=None, help="Output BIO file (default: stdout).")
@click.pass_context
def corpus_parse(ctx, input_path, refang, doc_id, output) -> None:
    """Tokenize a raw text report into O-tagged BIO sentences."""
    if doc_id is None:
        doc_id = "report" if input_path == "-" else Path(input_path).stem
    sentences = corpus_mod.tokenize_report(
        _read_input(input_path), refang_text=refang, doc_id=doc_id
    )
    _write_or_print(corpus_mod.serialize_bio(corpus_mod.Corpus(tuple(sentences))), output)


@corpus_group.command("stats")
@click.argument("corpus_path")
@click.pass_context
def corpus_stats(ctx, corpus_path) -> None:
    """Sentence/token/vocabulary/entity statistics of a BIO corpus."""
    st = corpus_mod.stats(corpus_mod.parse_bio_file(corpus_path))
    lines = [
        f"sentences:    {st.n_sentences}",
        f"tokens:       {st.n_tokens}",
        f"vocab size:   {st.vocab_size}",
        f"entity types: {st.n_entity_types}",
    ]
    for etype, count in sorted(st.per_type_entity_count.items()):
        lines.append(f"  {etype:<10} {count:>6} mentions, {st.per_type_token_count[etype]:>6} tokens")
    _emit(ctx, st.as_dict(), "\n".join(lines))


@corpus_group.command("consolidate")
@click.argument("corpus_path")
@click.option("--merge-file", default=None, help="Merge map file (default: built-in).")
@click.option("-o", "--output", default=None, help="Output BIO file (default: stdout).")
@click.pass_context
def corpus_consolidate(ctx, corpus_path, merge_file, output) -> None:
    """Rewrite entity types through a merge map (rare-class consolidation)."""
    merge = (
        corpus_mod.MergeMap.from_file(merge_file)
        if merge_file
        else corpus_mod.default_merge_map()
    )
    merged = corpus_mod.consolidate(corpus_mod.parse_bio_file(corpus_path), merge)
    _write_or_print(corpus_mod.serialize_bio(merged), output)


@corpus_group.command("split")
@click.argument("corpus_path")
@click.option("--ratios", default="0.7,0.15,0.15", show_default=True,
              help="train,val,test fractions summing to 1.")
@click.option("--seed", type=int, required=True)
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.pass_context
def corpus_split(ctx, corpus_path, ratios, seed, out_dir) -> None:
    """Deterministic train/val/test split of a BIO corpus."""
    try:
        parts = tuple(float(r) for r in ratios.split(","))
    except ValueError:
        raise click.UsageError(f"--ratios must be three comma-separated floats, got {ratios!r}")
    if len(parts) != 3:
        raise click.UsageError("--ratios needs exactly three values")
    full = corpus_mod.parse_bio_file(corpus_path)
    train, val, test = corpus_mod.split(full, parts, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    counts = {}
    for name, part in (("train", train), ("val", val), ("test", test)):
        atomic_write_text(out / f"{name}.bio", corpus_mod.serialize_bio(part))
        counts[name] = len(part)
    _emit(ctx, counts, "\n".join(f"{k}: {v} sentences" for k, v in counts.items()))


# --------------------------------------------------------------------------
# shared encoder options


def _encoder_options(fn):
    fn = click.option(
        "--encoder", type=click.Choice(["hashed", "lookup", "precomputed"]),
        default="hashed", show_default=True,
        help="Embedding source feeding the recurrent encoder.",
    )(fn)
    fn = click.option("--dim", type=int, default=64, show_default=True,
                      help="Embedding width for hashed/random-lookup encoders.")(fn)
    fn = click.option("--embeddings", default=None,
                      help="Precomputed embedding file (encoder=precomputed).")(fn)
    fn = click.option("--vectors", default=None,
                      help="Word-vector text file to seed a lookup encoder.")(fn)
    return fn


def _make_embedding(
    encoder: str, dim: int, embeddings: str | None, vectors: str | None,
    surfaces, seed: int,
) -> EmbeddingSource:
    if encoder == "hashed":
        return HashedFeatureEmbedding(dim)
    if encoder == "lookup":
        if vectors:
            return LookupEmbedding.from_word2vec_text(vectors)
        return LookupEmbedding.random(surfaces, dim, np.random.default_rng(seed + 1))
    if embeddings is None:
        raise click.UsageError("--encoder precomputed needs --embeddings FILE")
    return PrecomputedEmbedding.open(embeddings)


def _maybe_external(embeddings: str | None) -> EmbeddingSource | None:
    return PrecomputedEmbedding.open(embeddings) if embeddings else None


# --------------------------------------------------------------------------
# ner


@cli.group("ner")
def ner_group() -> None:
    """Entity tagger training, evaluation and tagging."""


@ner_group.command("train")
@click.option("--train", "train_path", required=True, help="Training BIO corpus.")
@click.option("--val", "val_path", default=None, help="Validation BIO corpus.")
@_encoder_options
@click.option("--batch-size", type=int, default=8, show_default=True)
@click.option("--dropout", type=float, default=0.2, show_default=True)
@click.option("--learning-rate", type=float, default=5e-5, show_default=True)
@click.option("--epochs", type=int, default=4, show_default=True)
@click.option("--hidden-dim", type=int, default=128, show_default=True)
@click.option("--seed", type=int, required=True, help="Controls all randomness.")
@click.option("-o", "--output", required=True, help="Checkpoint path.")
@click.option("--history", "history_path", default=None, help="Epoch history CSV.")
@click.pass_context
def ner_train(ctx, train_path, val_path, encoder, dim, embeddings, vectors,
              batch_size, dropout, learning_rate, epochs, hidden_dim, seed,
              output, history_path) -> None:
    """Train the entity tagger and write a checkpoint."""
    train = corpus_mod.parse_bio_file(train_path)
    val = corpus_mod.parse_bio_file(val_path) if val_path else corpus_mod.Corpus(())
    source = _make_embedding(encoder, dim, embeddings, vectors, train.vocab, seed)
    config = tagger_mod.TrainConfig(
        batch_size=batch_size, dropout=dropout, learning_rate=learning_rate,
        epochs=epochs, hidden_dim=hidden_dim, seed=seed,
    )
    model, history = tagger_mod.train_ner(train, val, config, source)
    tagger_mod.save_ner(model, output)
    if history_path:
        atomic_write_text(history_path, tagger_mod.history_csv(history))
    payload = {
        "checkpoint": output,
        "epochs": [
            {"epoch": h.epoch, "train_loss": h.train_loss,
             "val_loss": h.val_loss, "val_span_f1": h.val_span_f1}
            for h in history
        ],
    }
    human = "\n".join(
        f"epoch {h.epoch}: train loss {h.train_loss:.4f}, "
        f"val loss {h.val_loss:.4f}, val span-F1 {h.val_span_f1:.4f}"
        for h in history
    ) or "no epochs run"
    _emit(ctx, payload, human + f"\nsaved {output}")


@ner_group.command("eval")
@click.option("--model", "model_path", required=True)
@click.option("--test", "test_path", required=True)
@click.option("--embeddings", default=None,
              help="Precomputed embedding file, if the checkpoint needs one.")
@click.pass_context
def ner_eval(ctx, model_path, test_path, embeddings) -> None:
    """Span-level exact-match evaluation on a gold BIO corpus."""
    model = tagger_mod.load_ner(model_path, _maybe_external(embeddings))
    metrics = tagger_mod.evaluate_ner(model, corpus_mod.parse_bio_file(test_path))
    _emit(ctx, metrics.as_dict(), metrics.table())


@ner_group.command("tag")
@click.argument("input_path")
@click.option("--model", "model_path", required=True)
@click.option("--embeddings", default=None)
@click.option("--refang", is_flag=True)
@click.option("--format", "fmt", type=click.Choice(["bio", "spans"]),
              default="bio", show_default=True)
@click.option("-o", "--output", default=None, help="Output file (default: stdout).")
@click.pass_context
def ner_tag(ctx, input_path, model_path, embeddings, refang, fmt, output) -> None:
    """Tag a raw text report; emit BIO lines or JSON span records."""
    model = tagger_mod.load_ner(model_path, _maybe_external(embeddings))
    doc_id = "report" if input_path == "-" else Path(input_path).stem
    sentences = corpus_mod.tokenize_report(
        _read_input(input_path), refang_text=refang, doc_id=doc_id
    )
    if fmt == "bio":
        tagged = [
            corpus_mod.TaggedSentence(
                s.tokens, tuple(tagger_mod.predict_tags(model, s)), s.doc_id, s.sentence_id
            )
            for s in sentences
        ]
        _write_or_print(corpus_mod.serialize_bio(corpus_mod.Corpus(tuple(tagged))), output)
        return
    lines = []
    for s in sentences:
        tags = tagger_mod.predict_tags(model, s)
        spans = tagger_mod.extract_spans(tags, s)
        lines.append(json.dumps({
            "doc_id": s.doc_id,
            "sentence_id": s.sentence_id,
            "tokens": list(s.surfaces),
            "tags": tags,
            "spans": [
                {"start": sp.start, "end": sp.end, "type": sp.entity_type,
                 "surface": sp.surface}
                for sp in spans
            ],
        }))
    _write_or_print("".join(line + "\n" for line in lines), output)


# --------------------------------------------------------------------------
# re


@cli.group("re")
def re_group() -> None:
    """Relation classifier training, evaluation and prediction."""


@re_group.command("train")
@click.option("--train", "train_path", required=True, help="Instance JSONL file.")
@click.option("--val", "val_path", default=None)
@_encoder_options
@click.option("--batch-size", type=int, default=16, show_default=True)
@click.option("--dropout", type=float, default=0.3, show_default=True)
@click.option("--learning-rate", type=float, default=5e-5, show_default=True)
@click.option("--epochs", type=int, default=4, show_default=True)
@click.option("--hidden-dim", type=int, default=100, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("-o", "--output", required=True, help="Checkpoint path.")
@click.pass_context
def re_train(ctx, train_path, val_path, encoder, dim, embeddings, vectors,
             batch_size, dropout, learning_rate, epochs, hidden_dim, seed,
             output) -> None:
    """Train the relation classifier on labeled instances."""
    train = relation_mod.instances_from_jsonl(Path(train_path).read_text(encoding="utf-8"))
    val = (
        relation_mod.instances_from_jsonl(Path(val_path).read_text(encoding="utf-8"))
        if val_path else []
    )
    surfaces = {t for inst in train for t in inst.tokens}
    source = _make_embedding(encoder, dim, embeddings, vectors, surfaces, seed)
    config = relation_mod.ReTrainConfig(
        batch_size=batch_size, dropout=dropout, learning_rate=learning_rate,
        epochs=epochs, hidden_dim=hidden_dim, seed=seed,
    )
    model, history = relation_mod.train_re(train, val, config, source)
    relation_mod.save_re(model, output)
    payload = {
        "checkpoint": output,
        "labels": list(model.labels),
        "epochs": [
            {"epoch": h.epoch, "train_loss": h.train_loss,
             "val_loss": h.val_loss, "val_micro_f1": h.val_micro_f1}
            for h in history
        ],
    }
    human = "\n".join(
        f"epoch {h.epoch}: train loss {h.train_loss:.4f}, "
        f"val loss {h.val_loss:.4f}, val micro-F1 {h.val_micro_f1:.4f}"
        for h in history
    ) or "no epochs run"
    _emit(ctx, payload, human + f"\nsaved {output}")


@re_group.command("eval")
@click.option("--model", "model_path", required=True)
@click.option("--test", "test_path", required=True, help="Labeled instance JSONL file.")
@click.option("--schema", "schema_path", default=None)
@click.option("--embeddings", default=None)
@click.pass_context
def re_eval(ctx, model_path, test_path, schema_path, embeddings) -> None:
    """Relation P/R/F1 before and after schema correction."""
    model = relation_mod.load_re(model_path, _maybe_external(embeddings))
    schema = ontology_mod.load_schema(schema_path)
    test = relation_mod.instances_from_jsonl(Path(test_path).read_text(encoding="utf-8"))
    metrics = relation_mod.evaluate_re(model, schema, test)
    human = (
        f"pre-correction  micro-F1 {metrics.pre_micro.f1:.4f} "
        f"macro-F1 {metrics.pre_macro.f1:.4f}\n"
        f"post-correction micro-F1 {metrics.post_micro.f1:.4f} "
        f"macro-F1 {metrics.post_macro.f1:.4f}\n"
        f"kept {metrics.kept}, corrected {metrics.corrected}, rejected {metrics.rejected}"
    )
    _emit(ctx, metrics.as_dict(), human)


@re_group.command("predict")
@click.argument("corpus_path")
@click.option("--model", "model_path", default=None,
              help="Relation checkpoint (omit for ontology-only mode).")
@click.option("--schema", "schema_path", default=None)
@click.option("--embeddings", default=None)
@click.option("--ambiguous-fallback", is_flag=True,
              help="In ontology-only mode, resolve ambiguous pairs by priority.")
@click.option("-o", "--output", default=None, help="Triples JSONL (default: stdout).")
@click.pass_context
def re_predict(ctx, corpus_path, model_path, schema_path, embeddings,
               ambiguous_fallback, output) -> None:
    """Extract relation triples from a tagged BIO corpus."""
    model = (
        relation_mod.load_re(model_path, _maybe_external(embeddings))
        if model_path else None
    )
    schema = ontology_mod.load_schema(schema_path)
    corpus = corpus_mod.parse_bio_file(corpus_path)
    lines = []
    for sentence in corpus:
        spans = tagger_mod.extract_spans(sentence.tags, sentence)
        for triple in relation_mod.predict_relations(
            model, schema, sentence, spans, ambiguous_fallback=ambiguous_fallback
        ):
            lines.append(json.dumps(triple.as_dict()))
    _write_or_print("".join(line + "\n" for line in lines), output)


# --------------------------------------------------------------------------
# ontology


@cli.group("ontology")
def ontology_group() -> None:
    """Relation schema queries and pair annotation."""


@ontology_group.command("validate")
@click.option("--schema", "schema_path", default=None)
@click.pass_context
def ontology_validate(ctx, schema_path) -> None:
    """Print the full (head type, tail type) -> relations validity table."""
    schema = ontology_mod.load_schema(schema_path)
    matrix = ontology_mod.validity_matrix(schema)
    populated = {f"{h} {t}": list(rels) for (h, t), rels in matrix.items() if rels}
    payload = {
        "types": sorted(schema.types),
        "relations": list(schema.relation_names),
        "pairs": populated,
        "n_valid_pairs": len(populated),
    }
    human = "\n".join(
        f"{pair}: {', '.join(rels)}" for pair, rels in sorted(populated.items())
    ) + f"\n{len(populated)} valid type pairs of {len(matrix)}"
    _emit(ctx, payload, human)


@ontology_group.command("annotate")
@click.argument("corpus_path")
@click.option("--schema", "schema_path", default=None)
@click.option("-o", "--output", default=None, help="Instance JSONL (default: stdout).")
@click.pass_context
def ontology_annotate(ctx, corpus_path, schema_path, output) -> None:
    """Build relation instances from a gold-tagged BIO corpus."""
    schema = ontology_mod.load_schema(schema_path)
    corpus = corpus_mod.parse_bio_file(corpus_path)
    instances = []
    for sentence in corpus:
        spans = tagger_mod.extract_spans(sentence.tags, sentence)
        instances.extend(relation_mod.build_instances(sentence, spans, schema))
    _write_or_print(relation_mod.instances_to_jsonl(instances), output)


# --------------------------------------------------------------------------
# graph


@cli.group("graph")
def graph_group() -> None:
    """Knowledge-graph construction, queries and export."""


@graph_group.command("build")
@click.option("--store", "store_path", required=True, help="Graph store file.")
@click.option("--triples", "triples_path", required=True, help="Triples JSONL file.")
@click.option("--schema", "schema_path", default=None)
@click.option("--compact", is_flag=True, help="Rewrite the log as one snapshot.")
@click.pass_context
def graph_build(ctx, store_path, triples_path, schema_path, compact) -> None:
    """Ingest a triples file into a persistent graph store."""
    schema = ontology_mod.load_schema(schema_path)
    triples = [
        relation_mod.RelationTriple.from_dict(json.loads(line))
        for line in Path(triples_path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    store = graph_mod.GraphStore(store_path, schema)
    graph = store.load()
    report = graph_mod.upsert_triples(graph, triples)
    if triples:
        store.append(triples)
    if compact:
        store.compact(graph)
    payload = {"store": store_path, "nodes": len(graph.nodes),
               "edges": len(graph.edges), **report.as_dict()}
    human = (
        f"ingested {len(triples)} triples: +{report.nodes_added} nodes, "
        f"+{report.edges_added} edges, {report.edges_reinforced} reinforced, "
        f"{report.self_loops_dropped} self-loops dropped, "
        f"{len(report.rejected)} rejected\n"
        f"store now has {len(graph.nodes)} nodes, {len(graph.edges)} edges"
    )
    _emit(ctx, payload, human)


@graph_group.group("query")
def graph_query() -> None:
    """Neighborhood and path queries."""


@graph_query.command("neighbors")
@click.option("--store", "store_path", required=True)
@click.option("--surface", required=True, help="Node surface (normalized internally).")
@click.option("--type", "entity_type", required=True)
@click.option("--direction", type=click.Choice(["out", "in", "both"]),
              default="out", show_default=True)
@click.option("--relation", default=None)
@click.option("--schema", "schema_path", default=None)
@click.pass_context
def graph_neighbors(ctx, store_path, surface, entity_type, direction, relation,
                    schema_path) -> None:
    """List edges adjacent to a node, heaviest first."""
    graph = graph_mod.GraphStore(store_path, ontology_mod.load_schema(schema_path)).load()
    key = (graph_mod.normalize_surface(surface), entity_type)
    results = graph_mod.neighbors(graph, key, direction, relation)
    payload = {
        "node": list(key),
        "neighbors": [
            {"edge": edge.as_dict(), "node": node.as_dict()} for edge, node in results
        ],
    }
    human = "\n".join(
        f"{edge.src[0]} -[{edge.relation} w={edge.weight}]-> {edge.dst[0]} "
        f"({node.key[0]}:{node.key[1]})"
        for edge, node in results
    ) or "no neighbors"
    _emit(ctx, payload, human)


@graph_query.command("paths")
@click.option("--store", "store_path", required=True)
@click.option("--src-surface", required=True)
@click.option("--src-type", required=True)
@click.option("--dst-surface", required=True)
@click.option("--dst-type", required=True)
@click.option("--max-len", type=int, default=3, show_default=True)
@click.option("--limit", type=int, default=1000, show_default=True)
@click.option("--schema", "schema_path", default=None)
@click.pass_context
def graph_paths(ctx, store_path, src_surface, src_type, dst_surface, dst_type,
                max_len, limit, schema_path) -> None:
    """Enumerate simple directed paths between two nodes."""
    graph = graph_mod.GraphStore(store_path, ontology_mod.load_schema(schema_path)).load()
    src = (graph_mod.normalize_surface(src_surface), src_type)
    dst = (graph_mod.normalize_surface(dst_surface), dst_type)
    paths = graph_mod.find_paths(graph, src, dst, max_len, limit)
    payload = {
        "src": list(src), "dst": list(dst),
        "paths": [[e.as_dict() for e in path] for path in paths],
    }
    human = "\n".join(
        " -> ".join([path[0].src[0], *(e.dst[0] for e in path)])
        + "  (" + ", ".join(e.relation for e in path) + ")"
        for path in paths
    ) or "no paths"
    _emit(ctx, payload, human)


@graph_group.command("export")
@click.option("--store", "store_path", required=True)
@click.option("--format", "fmt", type=click.Choice(["jsonl", "graphml", "cypher"]),
              required=True)
@click.option("-o", "--output", required=True)
@click.option("--schema", "schema_path", default=None)
@click.pass_context
def graph_export(ctx, store_path, fmt, output, schema_path) -> None:
    """Export the graph to an interchange format."""
    graph = graph_mod.GraphStore(store_path, ontology_mod.load_schema(schema_path)).load()
    n_bytes = graph_mod.export(graph, fmt, output)
    _emit(ctx, {"format": fmt, "output": output, "bytes": n_bytes},
          f"wrote {n_bytes} bytes to {output}")


# --------------------------------------------------------------------------
# pipeline


@cli.group("pipeline")
def pipeline_group() -> None:
    """End-to-end extraction runs."""


@pipeline_group.command("run")
@click.argument("input_dir", type=click.Path(file_okay=False))
@click.option("--config", "config_path", default=None, help="Pipeline config JSON.")
@click.option("--ner-model", default=None)
@click.option("--re-model", default=None)
@click.option("--schema", "schema_path", default=None)
@click.option("--embeddings", default=None)
@click.option("--store", "store_path", default=None)
@click.option("--mode", type=click.Choice(["hybrid", "ontology-only"]), default=None)
@click.option("--refang", is_flag=True, default=None)
@click.option("--ambiguous-fallback", is_flag=True, default=None)
@click.option("--seed", type=int, default=None)
@click.option("-o", "--output", required=True, help="Triples JSONL path.")
@click.pass_context
def pipeline_run(ctx, input_dir, config_path, ner_model, re_model, schema_path,
                 embeddings, store_path, mode, refang, ambiguous_fallback, seed,
                 output) -> None:
    """Run tokenize -> tag -> relations -> graph over a report directory."""
    raw = {}
    if config_path:
        raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
    overrides = {
        "ner_checkpoint": ner_model,
        "re_checkpoint": re_model,
        "schema_path": schema_path,
        "embeddings_path": embeddings,
        "graph_store": store_path,
        "correction_mode": mode,
        "refang": refang,
        "ambiguous_fallback": ambiguous_fallback,
        "seed": seed,
    }
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if "ner_checkpoint" not in raw:
        raise click.UsageError("--ner-model (or a config file with ner_checkpoint) is required")
    config = PipelineConfig.from_dict(raw)
    report = run_pipeline(config, input_dir, output)
    human_lines = [
        f"documents: {report.documents}",
        f"sentences: {report.sentences}",
        f"tokens:    {report.tokens}",
        f"spans:     {report.spans}",
        f"triples:   {report.triples} (written to {output})",
    ]
    if report.ingest:
        human_lines.append(
            f"graph: +{report.ingest.nodes_added} nodes, +{report.ingest.edges_added} "
            f"edges, {report.ingest.edges_reinforced} reinforced"
        )
    for stage, seconds in report.timings.items():
        human_lines.append(f"  {stage:<14} {seconds:.3f}s")
    _emit(ctx, report.as_dict(), "\n".join(human_lines))


def main() -> None:
    try:
        cli(standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        sys.exit(2)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.exceptions.Abort:
        sys.exit(130)
    except ThreatKgError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)
    except json.JSONDecodeError as exc:
        click.echo(f"error: malformed JSON input: {exc}", err=True)
        sys.exit(3)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(5)


if __name__ == "__main__":
    main()
