"""Frozen-transformer inference and subword-to-token alignment.

The model is loaded once, switched to eval mode, and run under
``torch.no_grad`` -- the exporter never trains or fine-tunes.  Each
corpus token's vector is pooled from the hidden states of its subword
pieces: mean pooling by default, first-subword behind a flag.  Given
the same model and corpus file, re-export produces a byte-identical
container (sentences are batched in corpus order with a fixed batch
size, so every tensor shape is reproduced exactly).

Sentences are never truncated: a sentence longer than the model's
position table fails loudly rather than silently dropping tokens.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bio import BioSentence, read_bio_tokens
from .container import (
    Records,
    _atomic_write,
    corpus_fingerprint,
    write_embedding_container,
    write_embedding_text,
)

POOLING_POLICIES = ("mean", "first")


class AlignmentError(ValueError):
    """A corpus token produced no subword pieces, so no vector exists
    for it; names the offending sentence and token."""

    def __init__(self, sentence: BioSentence, token_index: int):
        super().__init__(
            f"token {token_index} ({sentence.surfaces[token_index]!r}) of sentence "
            f"({sentence.doc_id!r}, {sentence.sentence_id}) maps to zero subwords; "
            f"the tokenizer normalized it away"
        )
        self.sentence = sentence
        self.token_index = token_index


@dataclass(frozen=True)
class ExportManifest:
    """What was exported, with enough detail to audit the file."""

    model_id: str
    dim: int
    pooling: str
    corpus_fingerprint: str
    sentences: int
    vectors: int

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExportManifest":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def pool_subwords(vectors: np.ndarray, pooling: str) -> np.ndarray:
    """Aggregate a (n_subwords, dim) block to one token vector."""
    if pooling == "mean":
        return vectors.mean(axis=0)
    if pooling == "first":
        return vectors[0]
    raise ValueError(f"unknown pooling policy {pooling!r} (want one of {POOLING_POLICIES})")


def _align_batch(
    sentences: list[BioSentence],
    hidden: "np.ndarray",
    word_ids_per_row: list[list[int | None]],
    pooling: str,
    records: Records,
) -> None:
    for row, sentence in enumerate(sentences):
        positions: dict[int, list[int]] = {}
        for pos, word in enumerate(word_ids_per_row[row]):
            if word is not None:
                positions.setdefault(word, []).append(pos)
        vectors = np.empty((len(sentence), hidden.shape[2]), dtype=hidden.dtype)
        for token_index in range(len(sentence)):
            if token_index not in positions:
                raise AlignmentError(sentence, token_index)
            vectors[token_index] = pool_subwords(
                hidden[row, positions[token_index]], pooling
            )
        records[(sentence.doc_id, sentence.sentence_id)] = vectors


def compute_embeddings(
    sentences: list[BioSentence],
    model_id: str,
    pooling: str = "mean",
    batch_size: int = 16,
) -> tuple[Records, int]:
    """Per-token vectors for every sentence; returns (records, dim)."""
    import torch
    from transformers import AutoModel, AutoTokenizer

    if pooling not in POOLING_POLICIES:
        raise ValueError(f"unknown pooling policy {pooling!r} (want one of {POOLING_POLICIES})")
    if batch_size < 1:
        raise ValueError("batch_size must be positive")

    tokenizer = AutoTokenizer.from_pretrained(model_id)
    if not tokenizer.is_fast:
        raise ValueError(
            f"model {model_id!r} has no fast tokenizer; subword-to-token "
            f"alignment needs word_ids()"
        )
    model = AutoModel.from_pretrained(model_id)
    model.eval()

    records: Records = {}
    with torch.no_grad():
        for start in range(0, len(sentences), batch_size):
            batch = sentences[start:start + batch_size]
            encoding = tokenizer(
                [list(s.surfaces) for s in batch],
                is_split_into_words=True,
                padding=True,
                return_tensors="pt",
            )
            hidden = model(**encoding).last_hidden_state.numpy()
            word_ids = [encoding.word_ids(i) for i in range(len(batch))]
            _align_batch(batch, hidden, word_ids, pooling, records)
    return records, int(model.config.hidden_size)


def export_embeddings(
    corpus_path: str | Path,
    model_id: str,
    output_path: str | Path,
    pooling: str = "mean",
    batch_size: int = 16,
    dtype: str = "<f4",
    text: bool = False,
    manifest_path: str | Path | None = None,
) -> ExportManifest:
    """Run the model over a BIO corpus and write the embedding container.

    The manifest lands next to the container (``<output>.manifest.json``
    unless ``manifest_path`` says otherwise) and is also returned.
    """
    sentences = read_bio_tokens(corpus_path)
    fingerprint = corpus_fingerprint(corpus_path)
    records, dim = compute_embeddings(sentences, model_id, pooling, batch_size)

    if text:
        write_embedding_text(output_path, records, dim, fingerprint)
    else:
        write_embedding_container(output_path, records, dim, fingerprint, dtype)

    manifest = ExportManifest(
        model_id=str(model_id),
        dim=dim,
        pooling=pooling,
        corpus_fingerprint=fingerprint,
        sentences=len(sentences),
        vectors=sum(len(s) for s in sentences),
    )
    if manifest_path is None:
        manifest_path = Path(str(output_path) + ".manifest.json")
    payload = (json.dumps(manifest.as_dict(), indent=2, sort_keys=True) + "\n").encode()
    _atomic_write(manifest_path, lambda fh: fh.write(payload))
    return manifest
