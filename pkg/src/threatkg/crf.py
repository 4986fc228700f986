"""Linear-chain conditional random field over emission and transition scores.

A sequence ``y`` of length T is scored as

    score(o, y) = sum_t A[y_{t-1}, y_t] + o[t, y_t]   (y_0 = START)
                  + A[y_T, STOP]

where ``o`` is a T x L emission matrix and ``A`` an (L+2) x (L+2)
transition matrix carrying virtual START and STOP states.  The partition
function, marginals, and negative log-likelihood gradients are computed
exactly by log-space forward/backward recursions; decoding is Viterbi
with deterministic tie-breaking (lowest label index at the latest
differing position).

All operations here are pure functions of their inputs and thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .corpus import Corpus, tag_type
from .errors import ContractError, InfeasiblePathError, SchemaError


@dataclass(frozen=True)
class LabelSpace:
    """Ordered tag names; virtual START/STOP live at indices L and L+1."""

    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) == 0:
            raise SchemaError("label space must contain at least one label")
        if len(set(self.labels)) != len(self.labels):
            raise SchemaError("label names must be distinct")

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def start_index(self) -> int:
        return len(self.labels)

    @property
    def stop_index(self) -> int:
        return len(self.labels) + 1

    @cached_property
    def _index(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.labels)}

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise SchemaError(f"unknown label {label!r}") from None

    def encode(self, tags: Sequence[str]) -> list[int]:
        return [self.index(t) for t in tags]

    def decode(self, indices: Sequence[int]) -> list[str]:
        return [self.labels[i] for i in indices]

    @cached_property
    def entity_types(self) -> tuple[str, ...]:
        types = {tag_type(label) for label in self.labels} - {None}
        return tuple(sorted(types))

    @classmethod
    def for_entity_types(cls, types: Sequence[str]) -> "LabelSpace":
        """Canonical BIO space: O first, then B-X, I-X per sorted type."""
        labels = ["O"]
        for etype in sorted(set(types)):
            labels += [f"B-{etype}", f"I-{etype}"]
        return cls(tuple(labels))

    @classmethod
    def from_corpus(cls, corpus: Corpus) -> "LabelSpace":
        return cls.for_entity_types(corpus.entity_types)


def structural_mask(n_labels: int) -> np.ndarray:
    """Permit everything except entering START or leaving STOP."""
    size = n_labels + 2
    mask = np.ones((size, size), dtype=bool)
    mask[:, n_labels] = False   # nothing enters START
    mask[n_labels + 1, :] = False  # nothing leaves STOP
    mask[n_labels, n_labels + 1] = False  # no empty path
    return mask


def bio_mask(labels: LabelSpace) -> np.ndarray:
    """Transition mask forbidding I-X after anything but B-X / I-X.

    Labels must follow O / B-X / I-X naming; any other shape is a schema
    error.  STOP is reachable from every real label.
    """
    L = labels.size
    mask = structural_mask(L)
    kinds: list[tuple[str, str | None]] = []
    for name in labels.labels:
        if name == "O":
            kinds.append(("O", None))
        elif name.startswith(("B-", "I-")) and len(name) > 2:
            kinds.append((name[0], name[2:]))
        else:
            raise SchemaError(f"label {name!r} does not follow O/B-X/I-X naming")

    for j, (kind_j, type_j) in enumerate(kinds):
        if kind_j != "I":
            continue
        # only B-X and I-X may precede I-X
        mask[labels.start_index, j] = False
        for i, (kind_i, type_i) in enumerate(kinds):
            if not (kind_i in ("B", "I") and type_i == type_j):
                mask[i, j] = False
    return mask


@dataclass(frozen=True)
class TransitionMatrix:
    """Trainable transition scores plus a boolean feasibility mask.

    ``scores`` is (L+2) x (L+2); masked-out entries act as -inf when
    scoring.  The structural mask (no incoming START, no outgoing STOP)
    is always enforced on top of the supplied mask.
    """

    scores: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.scores.shape != self.mask.shape or self.scores.ndim != 2:
            raise ContractError("transition scores and mask shapes differ")
        if self.scores.shape[0] != self.scores.shape[1]:
            raise ContractError("transition matrix must be square")
        object.__setattr__(self, "mask", self.mask & structural_mask(self.n_labels))

    @property
    def n_labels(self) -> int:
        return self.scores.shape[0] - 2

    @property
    def start_index(self) -> int:
        return self.n_labels

    @property
    def stop_index(self) -> int:
        return self.n_labels + 1

    def effective(self) -> np.ndarray:
        """Scores with masked entries replaced by -inf."""
        return np.where(self.mask, self.scores, -np.inf)

    def with_mask(self, mask: np.ndarray) -> "TransitionMatrix":
        return TransitionMatrix(self.scores, mask)

    @classmethod
    def zeros(cls, n_labels: int, mask: np.ndarray | None = None) -> "TransitionMatrix":
        scores = np.zeros((n_labels + 2, n_labels + 2))
        if mask is None:
            mask = structural_mask(n_labels)
        return cls(scores, mask)


def _check_inputs(emissions: np.ndarray, trans: TransitionMatrix) -> tuple[int, int]:
    if emissions.ndim != 2:
        raise ContractError(f"emissions must be 2-d, got shape {emissions.shape}")
    T, L = emissions.shape
    if T < 1:
        raise ContractError("emissions must cover at least one position")
    if L != trans.n_labels:
        raise ContractError(
            f"emission width {L} != transition label count {trans.n_labels}"
        )
    if not np.all(np.isfinite(emissions)):
        raise ContractError("emissions must be finite")
    return T, L


def _check_sequence(y: Sequence[int], T: int, L: int) -> None:
    if len(y) != T:
        raise ContractError(f"label sequence length {len(y)} != T {T}")
    if any(not 0 <= int(label) < L for label in y):
        raise ContractError("label index out of range")


def score(emissions: np.ndarray, trans: TransitionMatrix, y: Sequence[int]) -> float:
    """Path score of ``y``; -inf if it crosses a masked transition."""
    T, L = _check_inputs(emissions, trans)
    _check_sequence(y, T, L)
    A = trans.effective()
    total = A[trans.start_index, y[0]] + emissions[0, y[0]]
    for t in range(1, T):
        total += A[y[t - 1], y[t]] + emissions[t, y[t]]
    total += A[y[T - 1], trans.stop_index]
    return float(total)


def _forward(emissions: np.ndarray, A: np.ndarray, trans: TransitionMatrix) -> np.ndarray:
    """Log-space forward lattice alpha, shape (T, L)."""
    T, L = emissions.shape
    alpha = np.empty((T, L))
    alpha[0] = A[trans.start_index, :L] + emissions[0]
    for t in range(1, T):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + A[:L, :L], axis=0) + emissions[t]
    return alpha


def _backward(emissions: np.ndarray, A: np.ndarray, trans: TransitionMatrix) -> np.ndarray:
    """Log-space backward lattice beta, shape (T, L)."""
    T, L = emissions.shape
    beta = np.empty((T, L))
    beta[T - 1] = A[:L, trans.stop_index]
    for t in range(T - 2, -1, -1):
        beta[t] = logsumexp(A[:L, :L] + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def log_partition(emissions: np.ndarray, trans: TransitionMatrix) -> float:
    """log sum over all label sequences of exp(score); exact, stable."""
    _check_inputs(emissions, trans)
    A = trans.effective()
    alpha = _forward(emissions, A, trans)
    log_z = float(logsumexp(alpha[-1] + A[: trans.n_labels, trans.stop_index]))
    if log_z == -np.inf:
        raise InfeasiblePathError("no feasible START -> STOP path under the mask")
    return log_z


def nll(emissions: np.ndarray, trans: TransitionMatrix, y: Sequence[int]) -> float:
    """Negative log-likelihood -log P(y | o); non-negative."""
    return log_partition(emissions, trans) - score(emissions, trans, y)


def marginals(
    emissions: np.ndarray, trans: TransitionMatrix
) -> tuple[np.ndarray, np.ndarray]:
    """Exact unary (T x L) and pairwise ((T-1) x L x L) probabilities."""
    T, L = _check_inputs(emissions, trans)
    A = trans.effective()
    alpha = _forward(emissions, A, trans)
    beta = _backward(emissions, A, trans)
    log_z = float(logsumexp(alpha[-1] + A[:L, trans.stop_index]))
    if log_z == -np.inf:
        raise InfeasiblePathError("no feasible START -> STOP path under the mask")

    unary = np.exp(alpha + beta - log_z)
    pairwise = np.empty((T - 1, L, L))
    for t in range(T - 1):
        combined = (
            alpha[t][:, None]
            + A[:L, :L]
            + (emissions[t + 1] + beta[t + 1])[None, :]
            - log_z
        )
        pairwise[t] = np.exp(combined)
    return unary, pairwise


def nll_gradients(
    emissions: np.ndarray, trans: TransitionMatrix, y: Sequence[int]
) -> tuple[float, np.ndarray, np.ndarray]:
    """Value and exact gradients of the NLL wrt emissions and transitions.

    Gradients are expected counts minus observed counts; entries under the
    mask are zero (they are -inf constants, not parameters).
    Returns ``(loss, grad_emissions, grad_transitions)`` with
    ``grad_transitions`` of shape (L+2) x (L+2).
    """
    T, L = _check_inputs(emissions, trans)
    _check_sequence(y, T, L)
    unary, pairwise = marginals(emissions, trans)

    grad_o = unary.copy()
    for t, label in enumerate(y):
        grad_o[t, label] -= 1.0

    grad_a = np.zeros_like(trans.scores)
    grad_a[trans.start_index, :L] = unary[0]
    grad_a[trans.start_index, y[0]] -= 1.0
    if T > 1:
        grad_a[:L, :L] = pairwise.sum(axis=0)
        for t in range(1, T):
            grad_a[y[t - 1], y[t]] -= 1.0
    grad_a[:L, trans.stop_index] = unary[-1]
    grad_a[y[T - 1], trans.stop_index] -= 1.0
    grad_a[~trans.mask] = 0.0

    loss = nll(emissions, trans, y)
    return loss, grad_o, grad_a


def viterbi(emissions: np.ndarray, trans: TransitionMatrix) -> tuple[list[int], float]:
    """Highest-scoring label sequence and its score.

    Ties resolve to the lowest label index at the latest position where
    optimal sequences differ (first-index argmax on backpointers).
    """
    T, L = _check_inputs(emissions, trans)
    A = trans.effective()
    delta = A[trans.start_index, :L] + emissions[0]
    backptr = np.zeros((T, L), dtype=int)
    for t in range(1, T):
        candidate = delta[:, None] + A[:L, :L]
        backptr[t] = np.argmax(candidate, axis=0)
        delta = candidate[backptr[t], np.arange(L)] + emissions[t]

    final = delta + A[:L, trans.stop_index]
    best_score = float(np.max(final))
    if best_score == -np.inf:
        raise InfeasiblePathError("no feasible START -> STOP path under the mask")

    path = [int(np.argmax(final))]
    for t in range(T - 1, 0, -1):
        path.append(int(backptr[t, path[-1]]))
    path.reverse()
    return path, best_score
