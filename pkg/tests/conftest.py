"""Shared fixtures and brute-force oracles for the test suite.

The oracles here are deliberately naive (exhaustive enumeration, central
finite differences) so they share no code path with the implementations
they check.
"""

from __future__ import annotations

import itertools
import math
from pathlib import Path
from typing import Callable

import numpy as np
import pytest

from threatkg.corpus import Corpus, TaggedSentence, Token
from threatkg.crf import TransitionMatrix

REPO_ROOT = Path(__file__).resolve().parents[1]
SYNTHETIC_DIR = REPO_ROOT / "data" / "synthetic"
NER_OVERFIT = SYNTHETIC_DIR / "ner_overfit.bio"
RE_OVERFIT = SYNTHETIC_DIR / "re_overfit.bio"


# --------------------------------------------------------------------------
# Builders
# --------------------------------------------------------------------------


def sent(
    surfaces: list[str] | str,
    tags: list[str] | None = None,
    doc_id: str = "doc",
    sentence_id: int = 0,
) -> TaggedSentence:
    """Build a TaggedSentence; tags default to all-O."""
    if isinstance(surfaces, str):
        surfaces = surfaces.split()
    if tags is None:
        tags = ["O"] * len(surfaces)
    offset, tokens = 0, []
    for surface in surfaces:
        tokens.append(Token(surface, offset))
        offset += len(surface) + 1
    return TaggedSentence(tuple(tokens), tuple(tags), doc_id, sentence_id)


def corpus_of(*sentences: TaggedSentence) -> Corpus:
    return Corpus(tuple(sentences))


# --------------------------------------------------------------------------
# Brute-force CRF oracles (enumeration over all L^T sequences)
# --------------------------------------------------------------------------


def brute_score(emissions: np.ndarray, trans: TransitionMatrix, y: tuple[int, ...]) -> float:
    """Path score computed directly from the definition."""
    A = trans.effective()
    total = A[trans.start_index, y[0]] + emissions[0, y[0]]
    for t in range(1, len(y)):
        total += A[y[t - 1], y[t]] + emissions[t, y[t]]
    return float(total + A[y[-1], trans.stop_index])


def all_paths(T: int, L: int):
    return itertools.product(range(L), repeat=T)


def brute_log_partition(emissions: np.ndarray, trans: TransitionMatrix) -> float:
    T, L = emissions.shape
    scores = [brute_score(emissions, trans, y) for y in all_paths(T, L)]
    finite = [s for s in scores if s > -math.inf]
    if not finite:
        return -math.inf
    m = max(finite)
    return m + math.log(sum(math.exp(s - m) for s in finite))


def brute_marginals(
    emissions: np.ndarray, trans: TransitionMatrix
) -> tuple[np.ndarray, np.ndarray]:
    """Unary and pairwise marginals by summing P(y) over every sequence."""
    T, L = emissions.shape
    log_z = brute_log_partition(emissions, trans)
    unary = np.zeros((T, L))
    pairwise = np.zeros((T - 1, L, L))
    for y in all_paths(T, L):
        s = brute_score(emissions, trans, y)
        if s == -math.inf:
            continue
        p = math.exp(s - log_z)
        for t, label in enumerate(y):
            unary[t, label] += p
        for t in range(T - 1):
            pairwise[t, y[t], y[t + 1]] += p
    return unary, pairwise


def brute_viterbi(
    emissions: np.ndarray, trans: TransitionMatrix
) -> tuple[tuple[int, ...], float]:
    """Argmax path; ties break to the lowest label index at the latest
    differing position, i.e. the reversed-tuple lexicographic minimum."""
    T, L = emissions.shape
    best_score = -math.inf
    argmax: list[tuple[int, ...]] = []
    for y in all_paths(T, L):
        s = brute_score(emissions, trans, y)
        if s > best_score:
            best_score, argmax = s, [y]
        elif s == best_score and s > -math.inf:
            argmax.append(y)
    winner = min(argmax, key=lambda y: tuple(reversed(y)))
    return winner, best_score


# --------------------------------------------------------------------------
# Finite-difference oracle
# --------------------------------------------------------------------------

FD_STEP = 1e-5
FD_RTOL = 1e-4


def fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central finite differences, one coordinate at a time."""
    grad = np.zeros_like(x, dtype=float)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(x)
        flat[i] = orig - step
        lo = f(x)
        flat[i] = orig
        out[i] = (hi - lo) / (2.0 * step)
    return grad


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(1, |a|, |n|), the usual gradient-check metric."""
    a = np.asarray(analytic, dtype=float).reshape(-1)
    n = np.asarray(numeric, dtype=float).reshape(-1)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


# --------------------------------------------------------------------------
# Fixtures
# --------------------------------------------------------------------------


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
