"""Named-entity tagging: embeddings -> BiGRU -> emission head -> CRF.

Training minimizes the mean per-sentence CRF negative log-likelihood with
AdamW and global-norm gradient clipping; decoding is Viterbi, by default
under the BIO feasibility mask so predicted tag sequences are always
well-formed.  Evaluation is span-level exact match (start, end, and type
must all agree), with token-level numbers reported as auxiliaries.
"""

from __future__ import annotations

import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .corpus import Corpus, TaggedSentence, tag_type
from .crf import LabelSpace, TransitionMatrix, bio_mask, nll, nll_gradients, structural_mask, viterbi
from .embeddings import EmbeddingSource, embedding_from_meta, embedding_meta
from .errors import ContractError, DataError, ShapeError, TrainingDivergedError
from .gru import GruLayer, bigru_backward, bigru_forward_cached
from .optim import AdamW, AdamWConfig, GradientAccumulator, clip_global_norm
from .serialize import load_checkpoint, save_checkpoint


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters of the sequence-tagging training loop."""

    batch_size: int = 8
    dropout: float = 0.2
    epsilon: float = 1e-8
    learning_rate: float = 5e-5
    epochs: int = 4
    hidden_dim: int = 128  # per direction
    weight_decay: float = 0.01
    clip_norm: float = 5.0
    seed: int = 0
    constrain_decoding: bool = True   # BIO mask during Viterbi
    constrain_training: bool = False  # BIO mask inside the likelihood

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
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass(frozen=True)
class EntitySpan:
    """A decoded entity mention: inclusive token range plus its type."""

    doc_id: str
    sentence_id: int
    start: int
    end: int
    entity_type: str
    surface: str

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise ContractError(f"bad span bounds ({self.start}, {self.end})")

    @property
    def key(self) -> tuple[int, int, str]:
        return (self.start, self.end, self.entity_type)


@dataclass(frozen=True)
class Prf:
    """Precision/recall/F1 with the raw counts they came from."""

    precision: float
    recall: float
    f1: float
    tp: int
    n_pred: int
    n_gold: int

    @classmethod
    def from_counts(cls, tp: int, n_pred: int, n_gold: int) -> "Prf":
        p = tp / n_pred if n_pred else 0.0
        r = tp / n_gold if n_gold else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        return cls(p, r, f1, tp, n_pred, n_gold)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_span_f1: float


@dataclass(frozen=True)
class NerMetrics:
    span_micro: Prf
    per_type: dict[str, Prf]
    token_micro: Prf
    token_accuracy: float

    def as_dict(self) -> dict:
        return {
            "span_micro": self.span_micro.as_dict(),
            "per_type": {t: m.as_dict() for t, m in self.per_type.items()},
            "token_micro": self.token_micro.as_dict(),
            "token_accuracy": self.token_accuracy,
        }

    def table(self) -> str:
        """Aligned text table, one row per entity type plus the micro row."""
        out = io.StringIO()
        header = f"{'type':<12} {'P':>7} {'R':>7} {'F1':>7} {'gold':>6}"
        out.write(header + "\n" + "-" * len(header) + "\n")
        for name, m in [*sorted(self.per_type.items()), ("micro", self.span_micro)]:
            out.write(
                f"{name:<12} {m.precision:>7.4f} {m.recall:>7.4f} "
                f"{m.f1:>7.4f} {m.n_gold:>6d}\n"
            )
        out.write(f"token accuracy: {self.token_accuracy:.4f}\n")
        return out.getvalue()


def history_csv(history: Sequence[EpochStats]) -> str:
    lines = ["epoch,train_loss,val_loss,val_span_f1"]
    for h in history:
        lines.append(f"{h.epoch},{h.train_loss!r},{h.val_loss!r},{h.val_span_f1!r}")
    return "\n".join(lines) + "\n"


class NerModel:
    """Trained (or freshly initialized) sequence tagger."""

    def __init__(
        self,
        embedding: EmbeddingSource,
        gru: GruLayer,
        head_w: np.ndarray,
        head_b: np.ndarray,
        trans_scores: np.ndarray,
        labels: LabelSpace,
        config: TrainConfig,
    ):
        L = labels.size
        if head_w.shape != (gru.output_dim, L) or head_b.shape != (L,):
            raise ShapeError(
                f"emission head must be ({gru.output_dim}, {L}) + ({L},), "
                f"got {head_w.shape} + {head_b.shape}"
            )
        if trans_scores.shape != (L + 2, L + 2):
            raise ShapeError(f"transition scores must be ({L + 2}, {L + 2})")
        if gru.input_dim != embedding.dim:
            raise ShapeError(
                f"encoder expects input dim {gru.input_dim}, embedding provides {embedding.dim}"
            )
        self.embedding = embedding
        self.gru = gru
        self.head_w = head_w
        self.head_b = head_b
        self.trans_scores = trans_scores
        self.labels = labels
        self.config = config

    @classmethod
    def init(
        cls,
        labels: LabelSpace,
        embedding: EmbeddingSource,
        config: TrainConfig,
        rng: np.random.Generator,
    ) -> "NerModel":
        gru = GruLayer.init(embedding.dim, config.hidden_dim, rng)
        scale = 1.0 / np.sqrt(gru.output_dim)
        head_w = rng.uniform(-scale, scale, size=(gru.output_dim, labels.size))
        head_b = np.zeros(labels.size)
        trans = np.zeros((labels.size + 2, labels.size + 2))
        return cls(embedding, gru, head_w, head_b, trans, labels, config)

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            **self.gru.parameters(),
            "head.w": self.head_w,
            "head.b": self.head_b,
            "crf.transitions": self.trans_scores,
            **self.embedding.parameters(),
        }

    def transitions(self, constrained: bool) -> TransitionMatrix:
        size = self.labels.size
        mask = bio_mask(self.labels) if constrained else structural_mask(size)
        return TransitionMatrix(self.trans_scores, mask)

    def emissions(self, sentence: TaggedSentence) -> np.ndarray:
        e = self.embedding.lookup(sentence)
        h, _ = bigru_forward_cached(self.gru, e)
        return h @ self.head_w + self.head_b


def predict_tags(model: NerModel, sentence: TaggedSentence) -> list[str]:
    """Viterbi decode; with constrained decoding the output is valid BIO."""
    emissions = model.emissions(sentence)
    trans = model.transitions(model.config.constrain_decoding)
    path, _ = viterbi(emissions, trans)
    return model.labels.decode(path)


def _sentence_loss(
    model: NerModel,
    sentence: TaggedSentence,
    trans: TransitionMatrix,
    dropout_mask: np.ndarray | None,
    grads: dict[str, np.ndarray] | None,
) -> float:
    """NLL of one sentence; accumulates gradients in place when asked."""
    e = model.embedding.lookup(sentence)
    y = model.labels.encode(sentence.tags)
    if grads is None:
        h, _ = bigru_forward_cached(model.gru, e)
        if dropout_mask is not None:
            h = h * dropout_mask
        return nll(h @ model.head_w + model.head_b, trans, y)

    h, cache = bigru_forward_cached(model.gru, e)
    if dropout_mask is not None:
        h = h * dropout_mask
    emissions = h @ model.head_w + model.head_b
    loss, grad_o, grad_a = nll_gradients(emissions, trans, y)
    grads["head.w"] += h.T @ grad_o
    grads["head.b"] += grad_o.sum(axis=0)
    grads["crf.transitions"] += grad_a
    d_h = grad_o @ model.head_w.T
    if dropout_mask is not None:
        d_h = d_h * dropout_mask
    gru_grads, d_inputs = bigru_backward(model.gru, cache, d_h)
    for name, g in gru_grads.items():
        grads[name] += g
    model.embedding.backprop(sentence, d_inputs, grads)
    return loss


def _batches(order: np.ndarray, size: int) -> Iterator[np.ndarray]:
    for i in range(0, len(order), size):
        yield order[i : i + size]


def train_ner(
    train: Corpus,
    val: Corpus,
    config: TrainConfig,
    embedding: EmbeddingSource,
) -> tuple[NerModel, list[EpochStats]]:
    """Mini-batch NLL training; deterministic for a fixed config.seed."""
    if len(train) == 0:
        raise DataError("training corpus is empty")
    labels = LabelSpace.from_corpus(train)
    known = set(labels.entity_types)
    extra = [t for t in val.entity_types if t not in known]
    if extra:
        raise DataError(f"validation corpus has entity types unseen in training: {extra}")

    rng = np.random.default_rng(config.seed)
    model = NerModel.init(labels, embedding, config, rng)
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
    history: list[EpochStats] = []

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train))
        loss_sum = 0.0
        for batch_no, batch in enumerate(_batches(order, config.batch_size), 1):
            trans = model.transitions(config.constrain_training)
            accumulator.zero()
            batch_loss = 0.0
            for idx in batch:
                sentence = train.sentences[idx]
                mask = None
                if config.dropout > 0.0:
                    keep = rng.random((len(sentence), width)) >= config.dropout
                    mask = keep / (1.0 - config.dropout)
                batch_loss += _sentence_loss(model, sentence, trans, mask, accumulator.grads)
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(epoch, batch_no)
            accumulator.scale(1.0 / len(batch))
            clip_global_norm(accumulator.grads, config.clip_norm)
            optimizer.step(accumulator.grads)
            loss_sum += batch_loss
        train_loss = loss_sum / len(train)
        eval_trans = model.transitions(config.constrain_training)
        val_loss = (
            float(
                np.mean([_sentence_loss(model, s, eval_trans, None, None) for s in val])
            )
            if len(val)
            else float("nan")
        )
        val_f1 = evaluate_ner(model, val).span_micro.f1 if len(val) else float("nan")
        history.append(EpochStats(epoch, train_loss, val_loss, val_f1))
    return model, history


def extract_spans(
    tags: Sequence[str], sentence: TaggedSentence, orphan_policy: str = "convert"
) -> list[EntitySpan]:
    """Decode BIO tags into entity spans.

    An I-X with no live X span (possible only for unconstrained decoders)
    is repaired: ``convert`` treats it as B-X, ``discard`` drops the token.
    """
    if len(tags) != len(sentence):
        raise ContractError(f"{len(tags)} tags for {len(sentence)} tokens")
    if orphan_policy not in ("convert", "discard"):
        raise ContractError(f"unknown orphan policy {orphan_policy!r}")
    spans: list[EntitySpan] = []
    start: int | None = None
    current: str | None = None

    def close(end: int) -> None:
        nonlocal start, current
        if start is not None:
            surface = " ".join(t.surface for t in sentence.tokens[start : end + 1])
            spans.append(
                EntitySpan(sentence.doc_id, sentence.sentence_id, start, end, current, surface)
            )
        start, current = None, None

    for i, tag in enumerate(tags):
        kind = tag[0]
        if kind == "O":
            close(i - 1)
        elif kind == "B":
            close(i - 1)
            start, current = i, tag_type(tag)
        else:  # I-X
            t = tag_type(tag)
            if current == t:
                continue
            close(i - 1)
            if orphan_policy == "convert":
                start, current = i, t
    close(len(tags) - 1)
    return spans


def spans_to_tags(spans: Iterable[EntitySpan], length: int) -> list[str]:
    """Inverse of extract_spans for non-overlapping spans."""
    tags = ["O"] * length
    for span in sorted(spans, key=lambda s: s.start):
        if span.end >= length:
            raise ContractError(f"span {span.key} exceeds sentence length {length}")
        if any(tags[i] != "O" for i in range(span.start, span.end + 1)):
            raise ContractError(f"span {span.key} overlaps another span")
        tags[span.start] = f"B-{span.entity_type}"
        for i in range(span.start + 1, span.end + 1):
            tags[i] = f"I-{span.entity_type}"
    return tags


@dataclass
class _Counts:
    tp: int = 0
    n_pred: int = 0
    n_gold: int = 0


def score_tag_sequences(
    gold_corpus: Iterable[TaggedSentence],
    predictions: Iterable[Sequence[str]],
) -> NerMetrics:
    """Span-level exact-match metrics over (gold sentence, predicted tags) pairs."""
    micro = _Counts()
    token = _Counts()
    per_type: dict[str, _Counts] = {}
    token_hits = 0
    token_total = 0
    for sentence, pred_tags in zip(gold_corpus, predictions):
        gold = {s.key for s in extract_spans(sentence.tags, sentence)}
        pred = {s.key for s in extract_spans(pred_tags, sentence)}
        for key in gold | pred:
            counts = per_type.setdefault(key[2], _Counts())
            in_gold, in_pred = key in gold, key in pred
            counts.n_gold += in_gold
            counts.n_pred += in_pred
            counts.tp += in_gold and in_pred
            micro.n_gold += in_gold
            micro.n_pred += in_pred
            micro.tp += in_gold and in_pred
        for g, p in zip(sentence.tags, pred_tags):
            token_total += 1
            token_hits += g == p
            token.n_gold += g != "O"
            token.n_pred += p != "O"
            token.tp += g == p != "O"
    return NerMetrics(
        span_micro=Prf.from_counts(micro.tp, micro.n_pred, micro.n_gold),
        per_type={
            t: Prf.from_counts(c.tp, c.n_pred, c.n_gold) for t, c in sorted(per_type.items())
        },
        token_micro=Prf.from_counts(token.tp, token.n_pred, token.n_gold),
        token_accuracy=token_hits / token_total if token_total else 0.0,
    )


def evaluate_ner(model: NerModel, test: Corpus) -> NerMetrics:
    return score_tag_sequences(test, [predict_tags(model, s) for s in test])


def save_ner(model: NerModel, path: str | Path) -> None:
    meta = {
        "kind": "ner-tagger",
        "labels": list(model.labels.labels),
        "config": model.config.as_dict(),
        "embedding": embedding_meta(model.embedding),
    }
    save_checkpoint(path, model.parameters(), meta)


def load_ner(path: str | Path, embedding: EmbeddingSource | None = None) -> NerModel:
    """Rebuild a tagger from a checkpoint.

    ``embedding`` must be supplied when the checkpoint was trained on
    precomputed vectors (they live in their own file, not the checkpoint).
    """
    tensors, meta = load_checkpoint(path)
    if meta.get("kind") != "ner-tagger":
        raise DataError(f"{path} is not a tagger checkpoint (kind={meta.get('kind')!r})")
    labels = LabelSpace(tuple(meta["labels"]))
    config = TrainConfig.from_dict(meta["config"])
    source = embedding_from_meta(meta["embedding"], tensors, embedding)
    gru = GruLayer.from_parameters(tensors)
    return NerModel(
        embedding=source,
        gru=gru,
        head_w=tensors["head.w"],
        head_b=tensors["head.b"],
        trans_scores=tensors["crf.transitions"],
        labels=labels,
        config=config,
    )
