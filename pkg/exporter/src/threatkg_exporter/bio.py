"""Minimal reader for the tagger's BIO corpus format.

Grammar (one token per line): ``<surface> <tag>`` separated by
whitespace, a blank line after each sentence, a trailing sentence
without its blank line still counts.  Tags must look like ``O``,
``B-TYPE`` or ``I-TYPE``.  Only surfaces matter for embedding export;
tags are validated and discarded.

Sentences are keyed exactly the way the extraction pipeline keys them
when it reads the same file: ``doc_id`` defaults to the corpus file
name and sentence ids count up from zero.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

_TAG_RE = re.compile(r"^(O|[BI]-[A-Za-z0-9_]+)$")


class BioFormatError(ValueError):
    """A corpus line does not follow the BIO grammar."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class BioSentence:
    doc_id: str
    sentence_id: int
    surfaces: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.surfaces)


def read_bio_tokens(path: str | Path, doc_id: str | None = None) -> list[BioSentence]:
    """Token surfaces per sentence, keyed (doc_id, sentence_id)."""
    path = Path(path)
    if doc_id is None:
        doc_id = path.name

    sentences: list[BioSentence] = []
    surfaces: list[str] = []

    def flush() -> None:
        if surfaces:
            sentences.append(BioSentence(doc_id, len(sentences), tuple(surfaces)))
            surfaces.clear()

    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            flush()
            continue
        fields = line.split()
        if len(fields) != 2:
            raise BioFormatError(
                f"expected '<token> <tag>', got {len(fields)} fields in {line!r}",
                line_no,
            )
        surface, tag = fields
        if not _TAG_RE.match(tag):
            raise BioFormatError(f"unknown tag shape {tag!r} (want O, B-X or I-X)", line_no)
        surfaces.append(surface)
    flush()
    return sentences
