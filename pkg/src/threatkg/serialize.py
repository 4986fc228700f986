"""Single-file model checkpoints and atomic file writing.

Checkpoint layout (binary, little-endian)::

    magic      8 bytes  b"TKGCKPT1"
    header_len u32
    header     header_len bytes of utf-8 JSON:
               {"version": 1, "meta": {...}, "tensors":
                [{"name": str, "dtype": "<f8", "shape": [int, ...]}, ...]}
    payload    raw tensor bytes, concatenated in header order

``meta`` carries whatever the model needs to rebuild itself (label space,
training config, vocabulary, ...).  A human-readable copy of ``meta`` is
written alongside as ``<path>.json``.  Both files are written atomically
(temp file in the same directory, then rename) so readers never observe a
half-written checkpoint.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from .errors import StorageError

CHECKPOINT_MAGIC = b"TKGCKPT1"


def atomic_write_bytes(path: str | Path, payload: bytes) -> None:
    path = Path(path)
    tmp_name = None
    try:
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp_name, path)
    except OSError as exc:
        if tmp_name is not None:
            try:
                os.unlink(tmp_name)
            except OSError:
                pass
        raise StorageError(f"could not write {path}: {exc}") from exc


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def save_checkpoint(
    path: str | Path, tensors: dict[str, np.ndarray], meta: dict[str, Any]
) -> None:
    entries = []
    chunks = []
    for name, tensor in tensors.items():
        arr = np.asarray(tensor)  # keeps 0-d shapes; tobytes() emits C order
        if arr.dtype.byteorder == ">":  # normalize to little-endian on disk
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        chunks.append(arr.tobytes())
    header = json.dumps({"version": 1, "meta": meta, "tensors": entries}).encode("utf-8")
    payload = b"".join([CHECKPOINT_MAGIC, struct.pack("<I", len(header)), header, *chunks])
    atomic_write_bytes(path, payload)
    atomic_write_text(Path(str(path) + ".json"), json.dumps(meta, indent=2) + "\n")


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise StorageError(f"could not read checkpoint {path}: {exc}") from exc
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise StorageError(f"{path} is not a model checkpoint (bad magic)")
    offset = len(CHECKPOINT_MAGIC)
    if len(blob) < offset + 4:
        raise StorageError(f"truncated checkpoint header in {path}")
    (header_len,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    try:
        header = json.loads(blob[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StorageError(f"corrupt checkpoint header in {path}: {exc}") from exc
    offset += header_len
    if header.get("version") != 1:
        raise StorageError(f"unsupported checkpoint version {header.get('version')!r}")
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        size = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
        chunk = blob[offset : offset + size]
        if len(chunk) != size:
            raise StorageError(f"truncated tensor {entry['name']!r} in {path}")
        tensors[entry["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(shape).copy()
        offset += size
    return tensors, header["meta"]
