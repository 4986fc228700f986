"""Writer for the precomputed-embedding container the pipeline loads.

Binary layout (all integers little-endian):

    magic  b"TKGEMB01"
    u32 x3 version (=1), dim, dtype code (1 = float32, 2 = float64)
    u32    fingerprint length, then that many UTF-8 bytes (empty = none)
    u64    record count
    per record:
        u32    doc_id length, then that many UTF-8 bytes
        u32 x2 sentence_id, T
        T * dim values in the declared dtype

A human-readable text variant exists for debugging; the binary form is
the interchange format.  Files are written atomically (temp + rename in
the destination directory) so a crashed export never leaves a partial
container behind.
"""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
from pathlib import Path
from typing import Callable

import numpy as np

MAGIC = b"TKGEMB01"
_DTYPE_CODES = {"<f4": 1, "<f8": 2}

Records = dict[tuple[str, int], np.ndarray]


def corpus_fingerprint(path: str | Path) -> str:
    """SHA-256 of the exact corpus file bytes; stored in the container so
    the loader can refuse embeddings exported from a different file."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _atomic_write(path: str | Path, write: Callable) -> None:
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            write(fh)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def write_embedding_container(
    path: str | Path,
    records: Records,
    dim: int,
    fingerprint: str | None = None,
    dtype: str = "<f4",
) -> None:
    if dtype not in _DTYPE_CODES:
        raise ValueError(f"unsupported embedding dtype {dtype!r} (want '<f4' or '<f8')")
    dt = np.dtype(dtype)
    fp_bytes = (fingerprint or "").encode()

    def write(fh) -> None:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", 1, dim, _DTYPE_CODES[dtype]))
        fh.write(struct.pack("<I", len(fp_bytes)))
        fh.write(fp_bytes)
        fh.write(struct.pack("<Q", len(records)))
        for (doc_id, sentence_id), matrix in records.items():
            if matrix.ndim != 2 or matrix.shape[1] != dim:
                raise ValueError(
                    f"record ({doc_id!r}, {sentence_id}) has shape {matrix.shape}, "
                    f"expected (T, {dim})"
                )
            doc_bytes = doc_id.encode()
            fh.write(struct.pack("<I", len(doc_bytes)))
            fh.write(doc_bytes)
            fh.write(struct.pack("<II", sentence_id, matrix.shape[0]))
            fh.write(np.ascontiguousarray(matrix, dtype=dt).tobytes())

    _atomic_write(path, write)


def write_embedding_text(
    path: str | Path,
    records: Records,
    dim: int,
    fingerprint: str | None = None,
) -> None:
    lines = [f"#tkg-embeddings v1 dim={dim} fingerprint={fingerprint or '-'}\n"]
    for (doc_id, sentence_id), matrix in records.items():
        if any(ch.isspace() for ch in doc_id):
            raise ValueError(
                f"doc_id {doc_id!r} contains whitespace; use the binary container"
            )
        lines.append(f"#sentence {doc_id} {sentence_id} {matrix.shape[0]}\n")
        for row in matrix:
            lines.append(" ".join(repr(float(v)) for v in row) + "\n")
    payload = "".join(lines).encode("utf-8")

    _atomic_write(path, lambda fh: fh.write(payload))
