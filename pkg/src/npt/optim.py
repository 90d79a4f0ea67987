"""Adam optimizer over named parameters."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Param, ShapeMismatch


class AdamState:
    """Per-parameter first/second moment estimates plus the shared step count."""

    def __init__(self, params: Sequence[Param], lr: float = 5e-5,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.step = 0
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {p.name: np.zeros_like(p.data) for p in params}
        self.v = {p.name: np.zeros_like(p.data) for p in params}


def adam_step(params: Sequence[Param], grads: Sequence[np.ndarray], state: AdamState):
    """One bias-corrected Adam update, in place on the params and state."""
    if len(params) != len(grads):
        raise ShapeMismatch(f"{len(params)} params but {len(grads)} gradients")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for p, g in zip(params, grads):
        if g.shape != p.data.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} does not match {p.name} {p.data.shape}")
        m = state.m[p.name]
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state
