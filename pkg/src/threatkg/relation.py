"""Relation classification between entity pairs, with schema correction.

Each candidate pair becomes a marker-augmented token sequence: the head
span is wrapped by a typed head marker (same token before and after) and
the tail span by a typed tail marker.  The sequence is embedded, run
through a BiGRU, pooled (head-span mean, tail-span mean, sentence-wide
max), and classified by a dense layer + softmax over relation labels.
Predictions are repaired against the ontology schema before becoming
graph triples.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import softmax

from .corpus import TaggedSentence, Token
from .embeddings import EmbeddingSource, PrecomputedEmbedding, embedding_from_meta, embedding_meta
from .errors import ContractError, DataError, ShapeError, TrainingDivergedError
from .gru import GruLayer, bigru_backward, bigru_forward_cached
from .ontology import OntologySchema, annotate_pairs, correct, valid_relations
from .optim import AdamW, AdamWConfig, GradientAccumulator, clip_global_norm
from .serialize import load_checkpoint, save_checkpoint
from .tagger import EntitySpan, Prf, _batches

POOLING = "head-mean|tail-mean|max"


@dataclass(frozen=True)
class ReTrainConfig:
    """Hyper-parameters of the relation-classifier training loop."""

    batch_size: int = 16
    dropout: float = 0.3
    epsilon: float = 1e-8
    learning_rate: float = 5e-5
    epochs: int = 4
    hidden_dim: int = 100  # per direction
    weight_decay: float = 0.01
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.hidden_dim < 1:
            raise ContractError("batch_size and hidden_dim must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError("dropout must lie in [0, 1)")
        if self.learning_rate <= 0 or self.epsilon <= 0 or self.clip_norm <= 0:
            raise ContractError("learning_rate, epsilon and clip_norm must be positive")
        if self.epochs < 0:
            raise ContractError("epochs must be non-negative")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ReTrainConfig":
        return cls(**d)


def head_marker(entity_type: str) -> str:
    return f"[HEAD:{entity_type}]"


def tail_marker(entity_type: str) -> str:
    return f"[TAIL:{entity_type}]"


@dataclass(frozen=True)
class ReInstance:
    """One (head, tail) candidate with its marker-augmented token sequence.

    ``origin[i]`` is the original token index behind augmented position i,
    or None for a marker token.  ``head_range``/``tail_range`` are the
    inclusive augmented positions of the span contents (markers excluded).
    """

    sentence: TaggedSentence
    head: EntitySpan
    tail: EntitySpan
    gold_label: str | None
    tokens: tuple[str, ...]
    origin: tuple[int | None, ...]
    head_range: tuple[int, int]
    tail_range: tuple[int, int]

    def __post_init__(self):
        for marker in (head_marker(self.head.entity_type), tail_marker(self.tail.entity_type)):
            if self.tokens.count(marker) != 2:
                raise ContractError(f"marker {marker!r} must appear exactly twice")

    def augmented_sentence(self) -> TaggedSentence:
        tokens = []
        offset = 0
        for surface in self.tokens:
            tokens.append(Token(surface, offset))
            offset += len(surface) + 1
        return TaggedSentence(
            tokens=tuple(tokens),
            tags=("O",) * len(tokens),
            doc_id=self.sentence.doc_id,
            sentence_id=self.sentence.sentence_id,
        )

    def as_dict(self) -> dict:
        return {
            "doc_id": self.sentence.doc_id,
            "sentence_id": self.sentence.sentence_id,
            "tokens": list(self.sentence.surfaces),
            "head": {"start": self.head.start, "end": self.head.end,
                     "type": self.head.entity_type},
            "tail": {"start": self.tail.start, "end": self.tail.end,
                     "type": self.tail.entity_type},
            "gold_label": self.gold_label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReInstance":
        tokens = []
        offset = 0
        for surface in d["tokens"]:
            tokens.append(Token(surface, offset))
            offset += len(surface) + 1
        sentence = TaggedSentence(
            tokens=tuple(tokens),
            tags=("O",) * len(tokens),
            doc_id=d["doc_id"],
            sentence_id=d["sentence_id"],
        )
        spans = []
        for key in ("head", "tail"):
            item = d[key]
            surface = " ".join(d["tokens"][item["start"] : item["end"] + 1])
            spans.append(
                EntitySpan(d["doc_id"], d["sentence_id"], item["start"], item["end"],
                           item["type"], surface)
            )
        return make_instance(sentence, spans[0], spans[1], d.get("gold_label"))


def make_instance(
    sentence: TaggedSentence, head: EntitySpan, tail: EntitySpan, gold_label: str | None
) -> ReInstance:
    """Wrap head/tail spans in typed markers (one marker token before and
    after each span)."""
    if not (head.end < tail.start or tail.end < head.start):
        raise ContractError("head and tail spans overlap")
    h_mark, t_mark = head_marker(head.entity_type), tail_marker(tail.entity_type)
    surfaces: list[str] = []
    origin: list[int | None] = []
    content: dict[str, list[int]] = {"head": [], "tail": []}
    def put(surface: str, source_index: int | None) -> None:
        surfaces.append(surface)
        origin.append(source_index)

    for i, token in enumerate(sentence.tokens):
        if i == head.start:
            put(h_mark, None)
        if i == tail.start:
            put(t_mark, None)
        if head.start <= i <= head.end:
            content["head"].append(len(surfaces))
        if tail.start <= i <= tail.end:
            content["tail"].append(len(surfaces))
        put(token.surface, i)
        if i == head.end:
            put(h_mark, None)
        if i == tail.end:
            put(t_mark, None)
    return ReInstance(
        sentence=sentence,
        head=head,
        tail=tail,
        gold_label=gold_label,
        tokens=tuple(surfaces),
        origin=tuple(origin),
        head_range=(content["head"][0], content["head"][-1]),
        tail_range=(content["tail"][0], content["tail"][-1]),
    )


def build_instances(
    sentence: TaggedSentence, spans: Sequence[EntitySpan], schema: OntologySchema
) -> list[ReInstance]:
    """One instance per schema-admissible ordered pair.

    Unambiguous pairs carry their sole admissible label as gold; ambiguous
    pairs are included unlabeled (a trainer must filter them out).
    """
    return [
        make_instance(sentence, cand.head, cand.tail, cand.chosen_label)
        for cand in annotate_pairs(schema, spans)
    ]


def instances_to_jsonl(instances: Iterable[ReInstance]) -> str:
    return "".join(json.dumps(inst.as_dict()) + "\n" for inst in instances)


def instances_from_jsonl(text: str) -> list[ReInstance]:
    out = []
    for line in text.splitlines():
        if line.strip():
            out.append(ReInstance.from_dict(json.loads(line)))
    return out


@dataclass(frozen=True)
class RelationTriple:
    """A typed, directed relation mention extracted from one sentence."""

    head_surface: str
    head_type: str
    relation: str
    tail_surface: str
    tail_type: str
    doc_id: str
    sentence_id: int
    confidence: float

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RelationTriple":
        return cls(**d)


class ReModel:
    """Relation classifier: embeddings -> BiGRU -> pooled -> dense + softmax."""

    def __init__(
        self,
        embedding: EmbeddingSource,
        gru: GruLayer,
        fc_w: np.ndarray,
        fc_b: np.ndarray,
        labels: tuple[str, ...],
        config: ReTrainConfig,
    ):
        pooled_dim = 3 * gru.output_dim
        if fc_w.shape != (pooled_dim, len(labels)) or fc_b.shape != (len(labels),):
            raise ShapeError(
                f"dense head must be ({pooled_dim}, {len(labels)}) + ({len(labels)},), "
                f"got {fc_w.shape} + {fc_b.shape}"
            )
        if gru.input_dim != embedding.dim:
            raise ShapeError(
                f"encoder expects input dim {gru.input_dim}, embedding provides {embedding.dim}"
            )
        if len(set(labels)) != len(labels) or not labels:
            raise ContractError("relation labels must be non-empty and unique")
        self.embedding = embedding
        self.gru = gru
        self.fc_w = fc_w
        self.fc_b = fc_b
        self.labels = labels
        self.config = config
        self.pooling = POOLING

    @classmethod
    def init(
        cls,
        labels: Sequence[str],
        embedding: EmbeddingSource,
        config: ReTrainConfig,
        rng: np.random.Generator,
    ) -> "ReModel":
        gru = GruLayer.init(embedding.dim, config.hidden_dim, rng)
        pooled_dim = 3 * gru.output_dim
        scale = 1.0 / np.sqrt(pooled_dim)
        fc_w = rng.uniform(-scale, scale, size=(pooled_dim, len(labels)))
        fc_b = np.zeros(len(labels))
        return cls(embedding, gru, fc_w, fc_b, tuple(labels), config)

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            **self.gru.parameters(),
            "fc.w": self.fc_w,
            "fc.b": self.fc_b,
            **self.embedding.parameters(),
        }

    def label_index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise DataError(f"label {label!r} unknown to this model") from None


def _embed_instance(source: EmbeddingSource, instance: ReInstance) -> np.ndarray:
    """Vectors for the augmented sequence; precomputed sources supply the
    original token vectors with zero vectors at marker positions."""
    if isinstance(source, PrecomputedEmbedding):
        base = source.lookup(instance.sentence)
        out = np.zeros((len(instance.tokens), source.dim))
        for pos, orig in enumerate(instance.origin):
            if orig is not None:
                out[pos] = base[orig]
        return out
    return source.lookup(instance.augmented_sentence())


def _pool(h: np.ndarray, instance: ReInstance) -> tuple[np.ndarray, np.ndarray]:
    hs, he = instance.head_range
    ts, te = instance.tail_range
    max_rows = np.argmax(h, axis=0)
    pooled = np.concatenate(
        [
            h[hs : he + 1].mean(axis=0),
            h[ts : te + 1].mean(axis=0),
            h[max_rows, np.arange(h.shape[1])],
        ]
    )
    return pooled, max_rows


def _unpool(
    d_pooled: np.ndarray, h_shape: tuple[int, int], instance: ReInstance, max_rows: np.ndarray
) -> np.ndarray:
    T, width = h_shape
    hs, he = instance.head_range
    ts, te = instance.tail_range
    d_h = np.zeros(h_shape)
    d_h[hs : he + 1] += d_pooled[:width] / (he - hs + 1)
    d_h[ts : te + 1] += d_pooled[width : 2 * width] / (te - ts + 1)
    d_h[max_rows, np.arange(width)] += d_pooled[2 * width :]
    return d_h


def re_forward(model: ReModel, instance: ReInstance) -> np.ndarray:
    """Probability distribution over the model's relation labels."""
    e = _embed_instance(model.embedding, instance)
    h, _ = bigru_forward_cached(model.gru, e)
    pooled, _ = _pool(h, instance)
    return softmax(pooled @ model.fc_w + model.fc_b)


def _instance_loss(
    model: ReModel,
    instance: ReInstance,
    dropout_mask: np.ndarray | None,
    grads: dict[str, np.ndarray] | None,
) -> float:
    """Cross-entropy of the gold label; accumulates gradients when asked."""
    gold = model.label_index(instance.gold_label)
    e = _embed_instance(model.embedding, instance)
    h, cache = bigru_forward_cached(model.gru, e)
    if dropout_mask is not None:
        h = h * dropout_mask
    pooled, max_rows = _pool(h, instance)
    logits = pooled @ model.fc_w + model.fc_b
    log_probs = logits - np.log(np.sum(np.exp(logits - logits.max()))) - logits.max()
    loss = -log_probs[gold]
    if grads is None:
        return float(loss)

    d_logits = np.exp(log_probs)
    d_logits[gold] -= 1.0
    grads["fc.w"] += np.outer(pooled, d_logits)
    grads["fc.b"] += d_logits
    d_pooled = model.fc_w @ d_logits
    d_h = _unpool(d_pooled, h.shape, instance, max_rows)
    if dropout_mask is not None:
        d_h = d_h * dropout_mask
    gru_grads, d_inputs = bigru_backward(model.gru, cache, d_h)
    for name, g in gru_grads.items():
        grads[name] += g
    if not isinstance(model.embedding, PrecomputedEmbedding):
        model.embedding.backprop(instance.augmented_sentence(), d_inputs, grads)
    return float(loss)


@dataclass(frozen=True)
class ReEpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_micro_f1: float


def train_re(
    train: Sequence[ReInstance],
    val: Sequence[ReInstance],
    config: ReTrainConfig,
    embedding: EmbeddingSource,
) -> tuple[ReModel, list[ReEpochStats]]:
    """Cross-entropy training over labeled instances (ambiguous ones are
    skipped); deterministic for a fixed config.seed."""
    labeled = [i for i in train if i.gold_label is not None]
    if not labeled:
        raise DataError("no labeled training instances")
    labels = tuple(sorted({i.gold_label for i in labeled}))
    val_labeled = [i for i in val if i.gold_label is not None]
    extra = sorted({i.gold_label for i in val_labeled} - set(labels))
    if extra:
        raise DataError(f"validation instances carry labels unseen in training: {extra}")

    rng = np.random.default_rng(config.seed)
    model = ReModel.init(labels, embedding, config, rng)
    optimizer = AdamW(
        model.parameters(),
        AdamWConfig(
            learning_rate=config.learning_rate,
            epsilon=config.epsilon,
            weight_decay=config.weight_decay,
        ),
    )
    accumulator = GradientAccumulator(model.parameters())
    width = model.gru.output_dim
    history: list[ReEpochStats] = []

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(labeled))
        loss_sum = 0.0
        for batch_no, batch in enumerate(_batches(order, config.batch_size), 1):
            accumulator.zero()
            batch_loss = 0.0
            for idx in batch:
                instance = labeled[idx]
                mask = None
                if config.dropout > 0.0:
                    keep = rng.random((len(instance.tokens), width)) >= config.dropout
                    mask = keep / (1.0 - config.dropout)
                batch_loss += _instance_loss(model, instance, mask, accumulator.grads)
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(epoch, batch_no)
            accumulator.scale(1.0 / len(batch))
            clip_global_norm(accumulator.grads, config.clip_norm)
            optimizer.step(accumulator.grads)
            loss_sum += batch_loss
        train_loss = loss_sum / len(labeled)
        if val_labeled:
            val_loss = float(
                np.mean([_instance_loss(model, i, None, None) for i in val_labeled])
            )
            hits = sum(
                model.labels[int(np.argmax(re_forward(model, i)))] == i.gold_label
                for i in val_labeled
            )
            val_f1 = hits / len(val_labeled)  # micro-F1 == accuracy pre-correction
        else:
            val_loss = float("nan")
            val_f1 = float("nan")
        history.append(ReEpochStats(epoch, train_loss, val_loss, val_f1))
    return model, history


def predict_relations(
    model: ReModel | None,
    schema: OntologySchema,
    sentence: TaggedSentence,
    spans: Sequence[EntitySpan],
    ambiguous_fallback: bool = False,
) -> list[RelationTriple]:
    """Extract schema-consistent triples for one sentence's spans.

    With a model, predictions are corrected by the schema (hybrid mode).
    Without one, unambiguous pairs get their sole admissible label and
    ambiguous pairs are either dropped or, with ``ambiguous_fallback``,
    resolved by schema priority order.
    """
    triples: list[RelationTriple] = []
    for cand in annotate_pairs(schema, spans):
        if model is not None:
            instance = make_instance(sentence, cand.head, cand.tail, None)
            probs = re_forward(model, instance)
            predicted = model.labels[int(np.argmax(probs))]
            prob_map = dict(zip(model.labels, (float(p) for p in probs)))
            decision = correct(
                schema, cand.head.entity_type, cand.tail.entity_type, predicted, prob_map
            )
            if decision.action == "rejected":
                continue
            label = decision.label
            confidence = prob_map.get(label, 0.0)
        elif cand.chosen_label is not None:
            label = cand.chosen_label
            confidence = 1.0
        elif ambiguous_fallback:
            label = cand.valid_labels[0]
            confidence = 1.0 / len(cand.valid_labels)
        else:
            continue
        triples.append(
            RelationTriple(
                head_surface=cand.head.surface,
                head_type=cand.head.entity_type,
                relation=label,
                tail_surface=cand.tail.surface,
                tail_type=cand.tail.entity_type,
                doc_id=sentence.doc_id,
                sentence_id=sentence.sentence_id,
                confidence=float(confidence),
            )
        )
    return triples


REJECTED = "<rejected>"


def _macro(per_label: dict[str, Prf]) -> Prf:
    if not per_label:
        return Prf(0.0, 0.0, 0.0, 0, 0, 0)
    ms = list(per_label.values())
    return Prf(
        precision=float(np.mean([m.precision for m in ms])),
        recall=float(np.mean([m.recall for m in ms])),
        f1=float(np.mean([m.f1 for m in ms])),
        tp=sum(m.tp for m in ms),
        n_pred=sum(m.n_pred for m in ms),
        n_gold=sum(m.n_gold for m in ms),
    )


@dataclass(frozen=True)
class ReMetrics:
    """Relation metrics before and after schema correction."""

    pre_micro: Prf
    pre_macro: Prf
    post_micro: Prf
    post_macro: Prf
    per_label: dict[str, Prf]  # post-correction
    confusion: dict[str, dict[str, int]]  # gold -> final prediction (post)
    kept: int
    corrected: int
    rejected: int

    def as_dict(self) -> dict:
        return {
            "pre_micro": self.pre_micro.as_dict(),
            "pre_macro": self.pre_macro.as_dict(),
            "post_micro": self.post_micro.as_dict(),
            "post_macro": self.post_macro.as_dict(),
            "per_label": {k: v.as_dict() for k, v in self.per_label.items()},
            "confusion": self.confusion,
            "kept": self.kept,
            "corrected": self.corrected,
            "rejected": self.rejected,
        }


def _prf_table(pairs: list[tuple[str, str | None]]) -> tuple[Prf, dict[str, Prf]]:
    labels = sorted({g for g, _ in pairs} | {p for _, p in pairs if p is not None})
    per_label: dict[str, Prf] = {}
    tp = n_pred = n_gold = 0
    for label in labels:
        l_tp = sum(1 for g, p in pairs if g == p == label)
        l_pred = sum(1 for _, p in pairs if p == label)
        l_gold = sum(1 for g, _ in pairs if g == label)
        per_label[label] = Prf.from_counts(l_tp, l_pred, l_gold)
        tp, n_pred, n_gold = tp + l_tp, n_pred + l_pred, n_gold + l_gold
    return Prf.from_counts(tp, n_pred, n_gold), per_label


def evaluate_re(
    model: ReModel, schema: OntologySchema, test: Sequence[ReInstance]
) -> ReMetrics:
    """Micro/macro P-R-F1 pre- and post-correction, plus a confusion table."""
    if any(i.gold_label is None for i in test):
        raise DataError("test instances must all carry gold labels")
    pre_pairs: list[tuple[str, str | None]] = []
    post_pairs: list[tuple[str, str | None]] = []
    confusion: dict[str, dict[str, int]] = {}
    kept = corrected = rejected = 0
    for instance in test:
        probs = re_forward(model, instance)
        predicted = model.labels[int(np.argmax(probs))]
        prob_map = dict(zip(model.labels, (float(p) for p in probs)))
        decision = correct(
            schema,
            instance.head.entity_type,
            instance.tail.entity_type,
            predicted,
            prob_map,
        )
        pre_pairs.append((instance.gold_label, predicted))
        post_pairs.append((instance.gold_label, decision.label))
        if decision.action == "keep":
            kept += 1
        elif decision.action == "corrected":
            corrected += 1
        else:
            rejected += 1
        row = confusion.setdefault(instance.gold_label, {})
        key = decision.label if decision.label is not None else REJECTED
        row[key] = row.get(key, 0) + 1

    pre_micro, pre_per = _prf_table(pre_pairs)
    post_micro, post_per = _prf_table(post_pairs)
    return ReMetrics(
        pre_micro=pre_micro,
        pre_macro=_macro(pre_per),
        post_micro=post_micro,
        post_macro=_macro(post_per),
        per_label=post_per,
        confusion=confusion,
        kept=kept,
        corrected=corrected,
        rejected=rejected,
    )


def save_re(model: ReModel, path: str | Path) -> None:
    meta = {
        "kind": "relation-classifier",
        "labels": list(model.labels),
        "config": model.config.as_dict(),
        "pooling": model.pooling,
        "embedding": embedding_meta(model.embedding),
    }
    save_checkpoint(path, model.parameters(), meta)


def load_re(path: str | Path, embedding: EmbeddingSource | None = None) -> ReModel:
    tensors, meta = load_checkpoint(path)
    if meta.get("kind") != "relation-classifier":
        raise DataError(f"{path} is not a relation checkpoint (kind={meta.get('kind')!r})")
    config = ReTrainConfig.from_dict(meta["config"])
    source = embedding_from_meta(meta["embedding"], tensors, embedding)
    return ReModel(
        embedding=source,
        gru=GruLayer.from_parameters(tensors),
        fc_w=tensors["fc.w"],
        fc_b=tensors["fc.b"],
        labels=tuple(meta["labels"]),
        config=config,
    )
