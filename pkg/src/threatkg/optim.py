"""Gradient-descent machinery shared by the taggers.

Implements AdamW (Adam with weight decay decoupled from the adaptive
moment update) over flat dicts of named numpy arrays, plus global-norm
gradient clipping.  Parameters are updated in place so model objects can
hand out live views.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError


def global_norm(grads: dict[str, np.ndarray]) -> float:
    """Euclidean norm of all gradient entries concatenated."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.square(g)))
    return float(np.sqrt(total))


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale every gradient in place so the joint norm is <= max_norm.

    Returns the pre-clip norm; a zero or small-enough norm leaves the
    gradients untouched.
    """
    norm = global_norm(grads)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class AdamWConfig:
    learning_rate: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.01


class AdamW:
    """Decoupled-weight-decay Adam over a dict of named parameters.

    Update per step t (per parameter tensor, elementwise)::

        m = b1*m + (1-b1)*g
        v = b2*v + (1-b2)*g^2
        m_hat = m / (1 - b1^t);  v_hat = v / (1 - b2^t)
        p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
    """

    def __init__(self, params: dict[str, np.ndarray], config: AdamWConfig | None = None):
        self.params = params
        self.config = config or AdamWConfig()
        self.step_count = 0
        self._m = {k: np.zeros_like(p) for k, p in params.items()}
        self._v = {k: np.zeros_like(p) for k, p in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        c = self.config
        self.step_count += 1
        bias1 = 1.0 - c.beta1**self.step_count
        bias2 = 1.0 - c.beta2**self.step_count
        for name, p in self.params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ShapeError(f"gradient {name} has shape {g.shape}, param {p.shape}")
            m = self._m[name]
            v = self._v[name]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * np.square(g)
            update = (m / bias1) / (np.sqrt(v / bias2) + c.epsilon)
            if c.weight_decay:
                update = update + c.weight_decay * p
            p -= c.learning_rate * update


@dataclass
class GradientAccumulator:
    """Zero-initialized gradient dict matching a parameter dict."""

    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray] = field(init=False)

    def __post_init__(self) -> None:
        self.grads = {k: np.zeros_like(p) for k, p in self.params.items()}

    def zero(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def add(self, partial: dict[str, np.ndarray]) -> None:
        for name, g in partial.items():
            self.grads[name] += g

    def scale(self, factor: float) -> None:
        for g in self.grads.values():
            g *= factor
