"""Per-token embedding sources feeding the recurrent encoder.

Three interchangeable sources:

* :class:`LookupEmbedding` -- a trainable table over a fixed vocabulary
  (unknown surfaces hit a dedicated OOV row, itself trainable).
* :class:`HashedFeatureEmbedding` -- deterministic feature hashing over
  lexical features; needs no vocabulary and no training data.
* :class:`PrecomputedEmbedding` -- frozen contextual vectors read from an
  embedding container file produced offline.

Embedding container file format (binary, little-endian), version 1::

    magic   8 bytes  b"TKGEMB01"
    version u32      1
    dim     u32
    dtype   u32      1 = float32, 2 = float64
    fp_len  u32      length of the corpus fingerprint string (may be 0)
    fp      fp_len bytes (utf-8, sha256 hex of the exported corpus file)
    count   u64      number of sentence records
    record: doc_len u32, doc_id utf-8, sentence_id u32, T u32,
            T*dim values of ``dtype``

A reference textual variant is also accepted: a header line
``#tkg-embeddings v1 dim=<d> fingerprint=<hex|->`` followed, per sentence,
by ``#sentence <doc_id> <sentence_id> <T>`` and T lines of ``dim``
space-separated floats.  ``doc_id`` must be whitespace-free in the text
variant.
"""

from __future__ import annotations

import hashlib
import re
import struct
from abc import ABC, abstractmethod
from pathlib import Path

import numpy as np

from .corpus import TaggedSentence, ioc_kinds
from .errors import DataError, MissingEmbeddingError, ParseError, ShapeError

MAGIC = b"TKGEMB01"
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}


class EmbeddingSource(ABC):
    """Maps a sentence to a (T, dim) matrix of per-token vectors."""

    @property
    @abstractmethod
    def dim(self) -> int: ...

    @abstractmethod
    def lookup(self, sentence: TaggedSentence) -> np.ndarray:
        """Return float64 rows e_t, one per token."""

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable arrays (empty for frozen sources)."""
        return {}

    def backprop(
        self, sentence: TaggedSentence, d_embeddings: np.ndarray, grads: dict[str, np.ndarray]
    ) -> None:
        """Accumulate gradients wrt this source's parameters (no-op default)."""


class LookupEmbedding(EmbeddingSource):
    """Trainable per-surface vectors; the last table row is the OOV row."""

    def __init__(self, vocab: dict[str, int], table: np.ndarray):
        if table.ndim != 2 or table.shape[0] != len(vocab) + 1:
            raise ShapeError(
                f"table must be (len(vocab)+1, dim), got {table.shape} for "
                f"{len(vocab)} surfaces"
            )
        self.vocab = vocab
        self.table = np.asarray(table, dtype=np.float64)

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    @property
    def oov_index(self) -> int:
        return self.table.shape[0] - 1

    def row_indices(self, sentence: TaggedSentence) -> np.ndarray:
        oov = self.oov_index
        return np.array([self.vocab.get(t.surface, oov) for t in sentence.tokens])

    def lookup(self, sentence: TaggedSentence) -> np.ndarray:
        return self.table[self.row_indices(sentence)]

    def parameters(self) -> dict[str, np.ndarray]:
        return {"embedding.table": self.table}

    def backprop(self, sentence, d_embeddings, grads) -> None:
        np.add.at(grads["embedding.table"], self.row_indices(sentence), d_embeddings)

    @classmethod
    def random(
        cls, surfaces: "list[str] | set[str] | frozenset[str]", dim: int, rng: np.random.Generator
    ) -> "LookupEmbedding":
        vocab = {s: i for i, s in enumerate(sorted(surfaces))}
        scale = 1.0 / np.sqrt(dim)
        table = rng.uniform(-scale, scale, size=(len(vocab) + 1, dim))
        return cls(vocab, table)

    @classmethod
    def from_word2vec_text(cls, path: str | Path) -> "LookupEmbedding":
        """Load ``surface v1 ... vd`` lines; an optional count/dim header
        line is skipped.  The OOV row is the mean of all vectors."""
        vocab: dict[str, int] = {}
        rows: list[np.ndarray] = []
        dim: int | None = None
        with Path(path).open(encoding="utf-8") as fh:
            for line_no, raw in enumerate(fh, 1):
                parts = raw.split()
                if not parts:
                    continue
                if line_no == 1 and len(parts) == 2:
                    continue  # "vocab_size dim" header
                surface, values = parts[0], parts[1:]
                if dim is None:
                    dim = len(values)
                    if dim == 0:
                        raise ParseError("vector has no components", line_no)
                elif len(values) != dim:
                    raise ParseError(
                        f"expected {dim} components, got {len(values)}", line_no
                    )
                if surface in vocab:
                    raise ParseError(f"duplicate surface {surface!r}", line_no)
                vocab[surface] = len(rows)
                try:
                    rows.append(np.array([float(v) for v in values]))
                except ValueError as exc:
                    raise ParseError(str(exc), line_no) from None
        if not rows:
            raise DataError(f"no vectors found in {path}")
        table = np.vstack(rows + [np.mean(rows, axis=0)])
        return cls(vocab, table)


def _stable_hash(feature: str) -> int:
    return int.from_bytes(hashlib.blake2b(feature.encode(), digest_size=8).digest(), "little")


_SHAPE_RUN = re.compile(r"(.)\1+")


def word_shape(surface: str) -> str:
    """Compressed character-class sketch, e.g. ``APT28`` -> ``X9``."""
    classes = []
    for ch in surface:
        if ch.isupper():
            classes.append("X")
        elif ch.islower():
            classes.append("x")
        elif ch.isdigit():
            classes.append("9")
        else:
            classes.append(ch)
    return _SHAPE_RUN.sub(r"\1", "".join(classes))


class HashedFeatureEmbedding(EmbeddingSource):
    """Deterministic feature-hashed vectors; identical token, identical row.

    Features per token: lowercased surface, word shape, 3-char prefix and
    suffix, and IoC kind flags.  Each feature lands in one signed bucket.
    """

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise ShapeError("dim must be positive")
        self._dim = dim
        self._cache: dict[str, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return self._dim

    @staticmethod
    def features(surface: str) -> list[str]:
        lowered = surface.lower()
        feats = [
            f"low={lowered}",
            f"shape={word_shape(surface)}",
            f"pre3={lowered[:3]}",
            f"suf3={lowered[-3:]}",
        ]
        feats.extend(f"ioc={kind}" for kind in ioc_kinds(surface))
        return feats

    def _vector(self, surface: str) -> np.ndarray:
        cached = self._cache.get(surface)
        if cached is not None:
            return cached
        vec = np.zeros(self._dim)
        feats = self.features(surface)
        for feat in feats:
            h = _stable_hash(feat)
            sign = 1.0 if (h >> 62) & 1 else -1.0
            vec[h % self._dim] += sign
        vec /= np.sqrt(len(feats))
        self._cache[surface] = vec
        return vec

    def lookup(self, sentence: TaggedSentence) -> np.ndarray:
        return np.vstack([self._vector(t.surface) for t in sentence.tokens])


class PrecomputedEmbedding(EmbeddingSource):
    """Frozen vectors keyed by (doc_id, sentence_id), loaded from a file."""

    def __init__(
        self,
        records: dict[tuple[str, int], np.ndarray],
        dim: int,
        fingerprint: str | None = None,
    ):
        self._records = records
        self._dim = dim
        self.fingerprint = fingerprint

    @property
    def dim(self) -> int:
        return self._dim

    def lookup(self, sentence: TaggedSentence) -> np.ndarray:
        key = (sentence.doc_id, sentence.sentence_id)
        try:
            matrix = self._records[key]
        except KeyError:
            raise MissingEmbeddingError(*key) from None
        if matrix.shape[0] != len(sentence):
            raise MissingEmbeddingError(
                *key, detail=f"stored T={matrix.shape[0]} != sentence T={len(sentence)}"
            )
        return matrix

    def verify_fingerprint(self, corpus_path: str | Path) -> None:
        """Reject when the file was exported from a different corpus file."""
        if self.fingerprint is None:
            return
        actual = corpus_fingerprint(corpus_path)
        if actual != self.fingerprint:
            raise DataError(
                f"corpus fingerprint mismatch: embeddings were exported from "
                f"{self.fingerprint[:12]}..., corpus file hashes to {actual[:12]}..."
            )

    @classmethod
    def open(cls, path: str | Path) -> "PrecomputedEmbedding":
        records, dim, fingerprint = read_embedding_file(path)
        return cls(records, dim, fingerprint)


def corpus_fingerprint(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def embedding_meta(source: EmbeddingSource) -> dict:
    """Checkpoint metadata describing how to rebuild an embedding source."""
    if isinstance(source, LookupEmbedding):
        surfaces = [""] * len(source.vocab)
        for surface, idx in source.vocab.items():
            surfaces[idx] = surface
        return {"kind": "lookup", "dim": source.dim, "surfaces": surfaces}
    if isinstance(source, HashedFeatureEmbedding):
        return {"kind": "hashed", "dim": source.dim}
    if isinstance(source, PrecomputedEmbedding):
        return {"kind": "precomputed", "dim": source.dim}
    raise DataError(f"cannot serialize embedding source {type(source).__name__}")


def embedding_from_meta(
    meta: dict, tensors: dict[str, np.ndarray], external: EmbeddingSource | None = None
) -> EmbeddingSource:
    """Inverse of :func:`embedding_meta`.

    ``external`` supplies the vectors for checkpoints trained on
    precomputed embeddings (which live in their own file, not the
    checkpoint); it is ignored for self-contained checkpoints.
    """
    kind = meta["kind"]
    if kind == "lookup":
        vocab = {s: i for i, s in enumerate(meta["surfaces"])}
        return LookupEmbedding(vocab, tensors["embedding.table"])
    if kind == "hashed":
        return HashedFeatureEmbedding(meta["dim"])
    if kind == "precomputed":
        if external is None:
            raise DataError(
                "checkpoint was trained on precomputed embeddings; "
                "supply the embedding file to load it"
            )
        if external.dim != meta["dim"]:
            raise DataError(
                f"checkpoint expects embedding dim {meta['dim']}, got {external.dim}"
            )
        return external
    raise DataError(f"unknown embedding kind {kind!r} in checkpoint")


def write_embedding_file(
    path: str | Path,
    records: dict[tuple[str, int], np.ndarray],
    dim: int,
    fingerprint: str | None = None,
    dtype: str = "<f4",
) -> None:
    dt = np.dtype(dtype)
    if dt not in _DTYPE_CODES:
        raise DataError(f"unsupported embedding dtype {dtype!r}")
    fp_bytes = (fingerprint or "").encode()
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", 1, dim, _DTYPE_CODES[dt]))
        fh.write(struct.pack("<I", len(fp_bytes)))
        fh.write(fp_bytes)
        fh.write(struct.pack("<Q", len(records)))
        for (doc_id, sentence_id), matrix in records.items():
            if matrix.ndim != 2 or matrix.shape[1] != dim:
                raise ShapeError(
                    f"record ({doc_id!r}, {sentence_id}) has shape {matrix.shape}, "
                    f"expected (T, {dim})"
                )
            doc_bytes = doc_id.encode()
            fh.write(struct.pack("<I", len(doc_bytes)))
            fh.write(doc_bytes)
            fh.write(struct.pack("<II", sentence_id, matrix.shape[0]))
            fh.write(np.ascontiguousarray(matrix, dtype=dt).tobytes())


def read_embedding_file(
    path: str | Path,
) -> tuple[dict[tuple[str, int], np.ndarray], int, str | None]:
    """Load either the binary container or the textual reference variant."""
    path = Path(path)
    with path.open("rb") as fh:
        head = fh.read(len(MAGIC))
        if head != MAGIC:
            return _read_embedding_text(path)
        version, dim, dtype_code = struct.unpack("<III", fh.read(12))
        if version != 1:
            raise DataError(f"unsupported embedding container version {version}")
        if dtype_code not in _DTYPES:
            raise DataError(f"unknown embedding dtype code {dtype_code}")
        dt = _DTYPES[dtype_code]
        (fp_len,) = struct.unpack("<I", fh.read(4))
        fingerprint = fh.read(fp_len).decode() or None
        (count,) = struct.unpack("<Q", fh.read(8))
        records: dict[tuple[str, int], np.ndarray] = {}
        for _ in range(count):
            (doc_len,) = struct.unpack("<I", fh.read(4))
            doc_id = fh.read(doc_len).decode()
            sentence_id, T = struct.unpack("<II", fh.read(8))
            payload = fh.read(T * dim * dt.itemsize)
            if len(payload) != T * dim * dt.itemsize:
                raise DataError(f"truncated embedding record in {path}")
            matrix = np.frombuffer(payload, dtype=dt).reshape(T, dim)
            records[(doc_id, sentence_id)] = matrix.astype(np.float64)
        return records, dim, fingerprint


_TEXT_HEADER = re.compile(r"^#tkg-embeddings v1 dim=(\d+) fingerprint=(\S+)$")


def write_embedding_text(
    path: str | Path,
    records: dict[tuple[str, int], np.ndarray],
    dim: int,
    fingerprint: str | None = None,
) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"#tkg-embeddings v1 dim={dim} fingerprint={fingerprint or '-'}\n")
        for (doc_id, sentence_id), matrix in records.items():
            if any(ch.isspace() for ch in doc_id):
                raise DataError(
                    f"doc_id {doc_id!r} contains whitespace; use the binary container"
                )
            fh.write(f"#sentence {doc_id} {sentence_id} {matrix.shape[0]}\n")
            for row in matrix:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def _read_embedding_text(
    path: Path,
) -> tuple[dict[tuple[str, int], np.ndarray], int, str | None]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataError(f"{path} is empty, expected an embedding container")
    header = _TEXT_HEADER.match(lines[0])
    if header is None:
        raise DataError(f"{path} is not an embedding container (bad header)")
    dim = int(header.group(1))
    fingerprint = None if header.group(2) == "-" else header.group(2)

    records: dict[tuple[str, int], np.ndarray] = {}
    i = 1
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        parts = lines[i].split()
        if parts[0] != "#sentence" or len(parts) != 4:
            raise ParseError(f"expected '#sentence <doc> <sid> <T>', got {lines[i]!r}", i + 1)
        doc_id, sentence_id, T = parts[1], int(parts[2]), int(parts[3])
        rows = []
        for j in range(T):
            values = lines[i + 1 + j].split()
            if len(values) != dim:
                raise ParseError(f"expected {dim} values, got {len(values)}", i + 2 + j)
            rows.append([float(v) for v in values])
        records[(doc_id, sentence_id)] = np.array(rows, dtype=np.float64)
        i += 1 + T
    return records, dim, fingerprint
