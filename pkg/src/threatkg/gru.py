"""Bidirectional gated recurrent layer with exact reverse-mode gradients.

Single-direction recurrence (zero initial state, double precision):

    z_t = sigmoid(W_z e_t + U_z h_{t-1} + b_z)        update gate
    r_t = sigmoid(W_r e_t + U_r h_{t-1} + b_r)        reset gate
    c_t = tanh(W_c e_t + U_c (r_t * h_{t-1}) + b_c)   candidate
    h_t = (1 - z_t) * h_{t-1} + z_t * c_t

The bidirectional layer concatenates the forward state at t with the
backward-direction state at t (computed from the suffix), so the output
width is ``2 * hidden_dim``.  Parameters are immutable during inference;
forward passes are safe to run concurrently across sentences.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterator

import numpy as np
from scipy.special import expit as sigmoid

from .errors import ContractError, ShapeError

GATE_NAMES = ("w_z", "w_r", "w_c", "u_z", "u_r", "u_c", "b_z", "b_r", "b_c")


@dataclass
class GruParams:
    """Gate weights for one recurrence direction."""

    w_z: np.ndarray
    w_r: np.ndarray
    w_c: np.ndarray
    u_z: np.ndarray
    u_r: np.ndarray
    u_c: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_c: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.w_z.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w_z.shape[0]

    def arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        for f in fields(self):
            yield f.name, getattr(self, f.name)

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "GruParams":
        scale = 1.0 / np.sqrt(hidden_dim)
        def w():
            return rng.uniform(-scale, scale, size=(hidden_dim, input_dim))
        def u():
            return rng.uniform(-scale, scale, size=(hidden_dim, hidden_dim))
        zeros = lambda: np.zeros(hidden_dim)
        return cls(w(), w(), w(), u(), u(), u(), zeros(), zeros(), zeros())

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "GruParams":
        w = lambda: np.zeros((hidden_dim, input_dim))
        u = lambda: np.zeros((hidden_dim, hidden_dim))
        b = lambda: np.zeros(hidden_dim)
        return cls(w(), w(), w(), u(), u(), u(), b(), b(), b())


@dataclass
class _DirectionCache:
    """Forward-pass intermediates needed for the exact backward pass."""

    params: GruParams
    inputs: np.ndarray  # (T, D)
    z: np.ndarray       # (T, H)
    r: np.ndarray
    c: np.ndarray
    h: np.ndarray


def gru_forward(params: GruParams, inputs: np.ndarray) -> tuple[np.ndarray, _DirectionCache]:
    """Run one direction over (T, input_dim) inputs; returns states and cache."""
    if inputs.ndim != 2 or inputs.shape[1] != params.input_dim:
        raise ShapeError(
            f"expected inputs (T, {params.input_dim}), got {inputs.shape}"
        )
    T = inputs.shape[0]
    H = params.hidden_dim
    z = np.empty((T, H))
    r = np.empty((T, H))
    c = np.empty((T, H))
    h = np.empty((T, H))
    h_prev = np.zeros(H)
    for t in range(T):
        e_t = inputs[t]
        z[t] = sigmoid(params.w_z @ e_t + params.u_z @ h_prev + params.b_z)
        r[t] = sigmoid(params.w_r @ e_t + params.u_r @ h_prev + params.b_r)
        c[t] = np.tanh(params.w_c @ e_t + params.u_c @ (r[t] * h_prev) + params.b_c)
        h[t] = (1.0 - z[t]) * h_prev + z[t] * c[t]
        h_prev = h[t]
    return h, _DirectionCache(params, inputs, z, r, c, h)


def gru_backward(
    params: GruParams, cache: _DirectionCache, upstream: np.ndarray
) -> tuple[GruParams, np.ndarray]:
    """Exact gradients for one direction.

    ``upstream`` is dLoss/dh of shape (T, H).  Returns parameter gradients
    (as a GruParams of matching shapes) and dLoss/dinputs of shape (T, D).
    """
    if cache.params is not params:
        raise ContractError("forward cache does not belong to these parameters")
    T, H = cache.h.shape
    if upstream.shape != (T, H):
        raise ShapeError(f"expected upstream ({T}, {H}), got {upstream.shape}")

    grads = GruParams.zeros(params.input_dim, H)
    d_inputs = np.zeros_like(cache.inputs)
    dh = np.zeros(H)
    for t in range(T - 1, -1, -1):
        dh = dh + upstream[t]
        h_prev = cache.h[t - 1] if t > 0 else np.zeros(H)
        z_t, r_t, c_t = cache.z[t], cache.r[t], cache.c[t]
        e_t = cache.inputs[t]

        dz = dh * (c_t - h_prev)
        dc = dh * z_t
        dh_prev = dh * (1.0 - z_t)

        # candidate: c = tanh(w_c e + u_c (r*h_prev) + b_c)
        da_c = dc * (1.0 - c_t * c_t)
        grads.w_c += np.outer(da_c, e_t)
        grads.u_c += np.outer(da_c, r_t * h_prev)
        grads.b_c += da_c
        d_rh = params.u_c.T @ da_c
        dr = d_rh * h_prev
        dh_prev += d_rh * r_t
        d_inputs[t] += params.w_c.T @ da_c

        # update gate
        da_z = dz * z_t * (1.0 - z_t)
        grads.w_z += np.outer(da_z, e_t)
        grads.u_z += np.outer(da_z, h_prev)
        grads.b_z += da_z
        dh_prev += params.u_z.T @ da_z
        d_inputs[t] += params.w_z.T @ da_z

        # reset gate
        da_r = dr * r_t * (1.0 - r_t)
        grads.w_r += np.outer(da_r, e_t)
        grads.u_r += np.outer(da_r, h_prev)
        grads.b_r += da_r
        dh_prev += params.u_r.T @ da_r
        d_inputs[t] += params.w_r.T @ da_r

        dh = dh_prev
    return grads, d_inputs


@dataclass
class GruLayer:
    """Forward and backward direction parameters of a BiGRU."""

    forward: GruParams
    backward: GruParams

    def __post_init__(self):
        if (
            self.forward.input_dim != self.backward.input_dim
            or self.forward.hidden_dim != self.backward.hidden_dim
        ):
            raise ShapeError("forward/backward directions must share dimensions")

    @property
    def input_dim(self) -> int:
        return self.forward.input_dim

    @property
    def hidden_dim(self) -> int:
        return self.forward.hidden_dim

    @property
    def output_dim(self) -> int:
        return 2 * self.forward.hidden_dim

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "GruLayer":
        return cls(
            GruParams.init(input_dim, hidden_dim, rng),
            GruParams.init(input_dim, hidden_dim, rng),
        )

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, params in (("gru.fwd", self.forward), ("gru.bwd", self.backward)):
            for name, array in params.arrays():
                out[f"{prefix}.{name}"] = array
        return out

    @classmethod
    def from_parameters(cls, tensors: dict[str, np.ndarray]) -> "GruLayer":
        """Rebuild from a dict keyed as :meth:`parameters` emits."""
        return cls(
            GruParams(**{name: tensors[f"gru.fwd.{name}"] for name in GATE_NAMES}),
            GruParams(**{name: tensors[f"gru.bwd.{name}"] for name in GATE_NAMES}),
        )


@dataclass
class _BiGruCache:
    layer: GruLayer
    fwd: _DirectionCache
    bwd: _DirectionCache


def bigru_forward(layer: GruLayer, inputs: np.ndarray) -> np.ndarray:
    """Per-position context vectors of width 2*hidden_dim."""
    out, _ = bigru_forward_cached(layer, inputs)
    return out


def bigru_forward_cached(
    layer: GruLayer, inputs: np.ndarray
) -> tuple[np.ndarray, _BiGruCache]:
    if not np.all(np.isfinite(inputs)):
        raise ShapeError("inputs must be finite")
    h_fwd, cache_f = gru_forward(layer.forward, inputs)
    h_bwd_rev, cache_b = gru_forward(layer.backward, inputs[::-1])
    out = np.hstack([h_fwd, h_bwd_rev[::-1]])
    return out, _BiGruCache(layer, cache_f, cache_b)


def bigru_backward(
    layer: GruLayer, cache: _BiGruCache, upstream: np.ndarray
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradients for both directions plus dLoss/dinputs.

    Returned dict keys match :meth:`GruLayer.parameters`.
    """
    if cache.layer is not layer:
        raise ContractError("forward cache does not belong to this layer")
    H = layer.hidden_dim
    T = cache.fwd.inputs.shape[0]
    if upstream.shape != (T, 2 * H):
        raise ShapeError(f"expected upstream ({T}, {2 * H}), got {upstream.shape}")

    grads_f, d_in_f = gru_backward(layer.forward, cache.fwd, upstream[:, :H])
    grads_b, d_in_b = gru_backward(layer.backward, cache.bwd, upstream[:, H:][::-1])

    grads: dict[str, np.ndarray] = {}
    for prefix, g in (("gru.fwd", grads_f), ("gru.bwd", grads_b)):
        for name, array in g.arrays():
            grads[f"{prefix}.{name}"] = array
    return grads, d_in_f + d_in_b[::-1]
