"""BIO corpus ingestion, consolidation, statistics, splits, and report tokenization.

The on-disk corpus format is line oriented: one ``<token><sep><tag>`` pair
per line where ``<sep>`` is a run of tabs and/or spaces, with a blank line
terminating each sentence.  Tags are ``O`` or ``B-<TYPE>`` / ``I-<TYPE>``.
All corpus values are immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .errors import DataError, ParseError

_TAG_RE = re.compile(r"^(?:O|[BI]-\S+)$")


@dataclass(frozen=True)
class Token:
    """A surface form plus its character offset into the source sentence."""

    surface: str
    start_offset: int = 0

    def __post_init__(self):
        if not self.surface:
            raise DataError("token surface must be non-empty")
        if "\n" in self.surface or "\r" in self.surface:
            raise DataError(f"token surface contains a line break: {self.surface!r}")
        if self.start_offset < 0:
            raise DataError("token start_offset must be non-negative")


@dataclass(frozen=True)
class TaggedSentence:
    """A token sequence with one BIO tag per token."""

    tokens: tuple[Token, ...]
    tags: tuple[str, ...]
    doc_id: str = ""
    sentence_id: int = 0

    def __post_init__(self):
        if len(self.tokens) == 0:
            raise DataError("a sentence must contain at least one token")
        if len(self.tags) != len(self.tokens):
            raise DataError(
                f"tag count {len(self.tags)} != token count {len(self.tokens)}"
            )
        for tag in self.tags:
            if not _TAG_RE.match(tag):
                raise DataError(f"malformed BIO tag: {tag!r}")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def surfaces(self) -> tuple[str, ...]:
        return tuple(t.surface for t in self.tokens)

    def text(self) -> str:
        """Reconstructed sentence text (single spaces between tokens)."""
        return " ".join(self.surfaces)


def tag_type(tag: str) -> str | None:
    """Entity type of a ``B-``/``I-`` tag, or None for ``O``."""
    return None if tag == "O" else tag[2:]


@dataclass(frozen=True)
class Corpus:
    """An immutable collection of tagged sentences."""

    sentences: tuple[TaggedSentence, ...]

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    @cached_property
    def entity_types(self) -> tuple[str, ...]:
        """Entity types appearing in tags, in sorted order."""
        types = {tag_type(tag) for s in self.sentences for tag in s.tags} - {None}
        return tuple(sorted(types))

    @cached_property
    def vocab(self) -> frozenset[str]:
        return frozenset(t.surface for s in self.sentences for t in s.tokens)

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)


@dataclass(frozen=True)
class CorpusStats:
    n_sentences: int
    n_tokens: int
    vocab_size: int
    n_entity_types: int
    per_type_entity_count: dict[str, int]
    per_type_token_count: dict[str, int]

    def as_dict(self) -> dict:
        return {
            "n_sentences": self.n_sentences,
            "n_tokens": self.n_tokens,
            "vocab_size": self.vocab_size,
            "n_entity_types": self.n_entity_types,
            "per_type_entity_count": dict(self.per_type_entity_count),
            "per_type_token_count": dict(self.per_type_token_count),
        }


@dataclass(frozen=True)
class MergeMap:
    """Single-step rewriting of entity type names (source -> target)."""

    mapping: dict[str, str]

    def __post_init__(self):
        for src, dst in self.mapping.items():
            if dst == "O":
                raise DataError(f"invalid merge: {src!r} -> 'O' is not permitted")
            if dst in self.mapping:
                raise DataError(
                    f"invalid merge: target {dst!r} also appears as a source "
                    "(only single-step rewriting is supported)"
                )

    @classmethod
    def from_file(cls, path: str | Path) -> "MergeMap":
        """Load ``SOURCE = TARGET`` lines; '#' starts a comment."""
        mapping: dict[str, str] = {}
        for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"expected 'SOURCE = TARGET', got {raw!r}", line_no)
            src, dst = (part.strip() for part in line.split("=", 1))
            if not src or not dst:
                raise ParseError(f"empty source or target in {raw!r}", line_no)
            mapping[src] = dst
        return cls(mapping)


def default_merge_map() -> MergeMap:
    """The shipped consolidation map ({SHA1, SHA2, MD5} -> HASH)."""
    return MergeMap.from_file(Path(__file__).parent / "data" / "default_merge.cfg")


def parse_bio(stream: str | IO[str] | Iterable[str], doc_id: str = "corpus") -> Corpus:
    """Parse a BIO/CoNLL-style stream into a Corpus.

    ``stream`` may be a text blob, an open file, or any iterable of lines.
    A trailing sentence without a terminating blank line is included.
    Raises :class:`ParseError` (with the line number) on malformed lines.
    """
    lines: Iterable[str]
    if isinstance(stream, str):
        lines = stream.splitlines()
    else:
        lines = stream

    sentences: list[TaggedSentence] = []
    surfaces: list[str] = []
    tags: list[str] = []

    def flush() -> None:
        if not surfaces:
            return
        offset = 0
        tokens = []
        for surface in surfaces:
            tokens.append(Token(surface, offset))
            offset += len(surface) + 1
        sentences.append(
            TaggedSentence(tuple(tokens), tuple(tags), doc_id, len(sentences))
        )
        surfaces.clear()
        tags.clear()

    for line_no, raw in enumerate(lines, 1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            flush()
            continue
        fields = line.split()
        if len(fields) != 2:
            raise ParseError(
                f"expected '<token> <tag>', got {len(fields)} fields in {line!r}",
                line_no,
            )
        surface, tag = fields
        if not _TAG_RE.match(tag):
            raise ParseError(f"unknown tag shape {tag!r} (want O, B-X or I-X)", line_no)
        surfaces.append(surface)
        tags.append(tag)
    flush()
    return Corpus(tuple(sentences))


def parse_bio_file(path: str | Path, doc_id: str | None = None) -> Corpus:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return parse_bio(fh, doc_id=doc_id if doc_id is not None else path.name)


def serialize_bio(corpus: Corpus) -> str:
    """Emit the canonical form: tab separated, blank line after each sentence."""
    chunks = []
    for sentence in corpus:
        for token, tag in zip(sentence.tokens, sentence.tags):
            chunks.append(f"{token.surface}\t{tag}\n")
        chunks.append("\n")
    return "".join(chunks)


def consolidate(corpus: Corpus, merge: MergeMap) -> Corpus:
    """Rewrite entity types through ``merge``, preserving span boundaries.

    Tag prefixes are untouched, so adjacent spans of formerly distinct
    source types stay distinct spans after merging.
    """
    if not merge.mapping:
        return corpus
    rewritten = []
    for sentence in corpus:
        new_tags = []
        for tag in sentence.tags:
            etype = tag_type(tag)
            if etype is not None and etype in merge.mapping:
                tag = f"{tag[:2]}{merge.mapping[etype]}"
            new_tags.append(tag)
        rewritten.append(
            TaggedSentence(
                sentence.tokens, tuple(new_tags), sentence.doc_id, sentence.sentence_id
            )
        )
    return Corpus(tuple(rewritten))


def split(
    corpus: Corpus, ratios: tuple[float, float, float], seed: int
) -> tuple[Corpus, Corpus, Corpus]:
    """Deterministic sentence-level train/val/test partition.

    Validation and test sizes are ``floor(n * ratio)``; the remainder goes
    to the training split.
    """
    if any(r < 0 for r in ratios):
        raise DataError(f"invalid ratio in {ratios}: ratios must be non-negative")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios {ratios} must sum to 1.0")
    if len(corpus) == 0:
        raise DataError("cannot split an empty corpus")

    n = len(corpus)
    # epsilon guards floor against representation error (n*0.15 = x.9999...)
    n_val = int(n * ratios[1] + 1e-9)
    n_test = int(n * ratios[2] + 1e-9)
    n_train = n - n_val - n_test

    order = np.random.default_rng(seed).permutation(n)
    pick = lambda idx: Corpus(tuple(corpus.sentences[i] for i in sorted(idx)))
    return (
        pick(order[:n_train]),
        pick(order[n_train : n_train + n_val]),
        pick(order[n_train + n_val :]),
    )


def stats(corpus: Corpus) -> CorpusStats:
    """Dataset statistics; B-tag counts are entity-mention counts."""
    entity_count: Counter[str] = Counter()
    token_count: Counter[str] = Counter()
    for sentence in corpus:
        for tag in sentence.tags:
            etype = tag_type(tag)
            if etype is None:
                continue
            token_count[etype] += 1
            if tag.startswith("B-"):
                entity_count[etype] += 1
    return CorpusStats(
        n_sentences=len(corpus),
        n_tokens=corpus.n_tokens,
        vocab_size=len(corpus.vocab),
        n_entity_types=len(corpus.entity_types),
        per_type_entity_count={t: entity_count.get(t, 0) for t in corpus.entity_types},
        per_type_token_count={t: token_count.get(t, 0) for t in corpus.entity_types},
    )


# --------------------------------------------------------------------------
# Raw report tokenization
# --------------------------------------------------------------------------
#
# IoC-shaped tokens (URLs, emails, IPv4 quads, file paths, long hex hashes,
# CVE ids) survive tokenization as single tokens.  Defanged forms can be
# refanged first.  The protection list below is fixed; pass extra compiled
# patterns via ``extra_ioc_patterns`` to extend it.

_REFANG_RULES: tuple[tuple[re.Pattern, str], ...] = (
    (re.compile(r"hxxp", re.IGNORECASE), "http"),
    (re.compile(r"\[\.\]|\(\.\)|\{\.\}"), "."),
    (re.compile(r"\[:\]"), ":"),
    (re.compile(r"\[@\]|\[at\]", re.IGNORECASE), "@"),
)

# Matched in order; earlier patterns claim their span first.
IOC_PATTERNS: tuple[tuple[str, re.Pattern], ...] = (
    ("url", re.compile(r"\b(?:https?|ftp|hxxps?)://[^\s\"'<>]+|\bwww\.[^\s\"'<>]+", re.I)),
    ("email", re.compile(r"\b[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}\b")),
    ("cve", re.compile(r"\bCVE-\d{4}-\d{4,}\b", re.I)),
    ("hash", re.compile(r"\b[0-9a-fA-F]{32,}\b")),
    ("ipv4", re.compile(r"\b(?:\d{1,3}\.){3}\d{1,3}\b")),
    ("winpath", re.compile(r"\b[A-Za-z]:\\[^\s\"'<>|]+|\\\\[^\s\"'<>|]+")),
    ("unixpath", re.compile(r"(?<![\w.])/(?:[\w.+~-]+/)+[\w.+~-]+")),
)

# Sentence punctuation accidentally swallowed by the greedy IoC patterns.
_TRAILING_PUNCT = ".,;:!?)]}'\""

_WORD_RE = re.compile(r"\w+(?:[-'’]\w+)*|[^\w\s]")
_SENT_END_RE = re.compile(r"[.!?]+(?=\s|$)")
_PARAGRAPH_RE = re.compile(r"\n\s*\n")


def refang(text: str) -> str:
    """Undo common defanging ("hxxp", "[.]", "[:]", "[@]", "[at]")."""
    for pattern, repl in _REFANG_RULES:
        text = pattern.sub(repl, text)
    return text


def _ioc_spans(text: str, extra: Iterable[re.Pattern] = ()) -> list[tuple[int, int]]:
    """Non-overlapping character spans claimed by IoC patterns."""
    claimed: list[tuple[int, int]] = []

    def overlaps(start: int, end: int) -> bool:
        return any(start < c_end and c_start < end for c_start, c_end in claimed)

    patterns = [p for _, p in IOC_PATTERNS] + list(extra)
    for pattern in patterns:
        for match in pattern.finditer(text):
            start, end = match.span()
            while end > start and text[end - 1] in _TRAILING_PUNCT:
                end -= 1
            if end > start and not overlaps(start, end):
                claimed.append((start, end))
    claimed.sort()
    return claimed


def ioc_kinds(surface: str) -> tuple[str, ...]:
    """Names of IoC patterns fully matching ``surface`` (used as features)."""
    return tuple(name for name, pat in IOC_PATTERNS if pat.fullmatch(surface))


def _split_sentences(text: str) -> list[str]:
    """Terminal punctuation plus blank-line paragraph boundaries."""
    pieces: list[str] = []
    for paragraph in _PARAGRAPH_RE.split(text):
        protected = _ioc_spans(paragraph)
        start = 0
        for match in _SENT_END_RE.finditer(paragraph):
            end = match.end()
            inside = any(s < end and match.start() < e for s, e in protected)
            if inside:
                continue
            pieces.append(paragraph[start:end])
            start = end
        pieces.append(paragraph[start:])
    return [p for p in pieces if p.strip()]


def _tokenize_sentence(sentence: str, extra: Iterable[re.Pattern] = ()) -> list[Token]:
    protected = _ioc_spans(sentence, extra)
    tokens: list[Token] = []
    cursor = 0
    for start, end in protected + [(len(sentence), len(sentence))]:
        for match in _WORD_RE.finditer(sentence, cursor, start):
            tokens.append(Token(match.group(), match.start()))
        if end > start:
            tokens.append(Token(sentence[start:end], start))
        cursor = end
    return tokens


def tokenize_report(
    text: str,
    refang_text: bool = False,
    doc_id: str = "report",
    extra_ioc_patterns: Iterable[re.Pattern] = (),
) -> list[TaggedSentence]:
    """Split raw report text into O-tagged sentences.

    Token offsets refer to the (optionally refanged) sentence text.
    Tolerant by design: never raises on odd input, empty text gives [].
    """
    if refang_text:
        text = refang(text)
    sentences = []
    for raw in _split_sentences(text):
        tokens = _tokenize_sentence(raw.strip(), extra_ioc_patterns)
        if not tokens:
            continue
        sentences.append(
            TaggedSentence(
                tuple(tokens),
                tuple("O" for _ in tokens),
                doc_id,
                len(sentences),
            )
        )
    return sentences
