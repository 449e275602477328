"""Bias-corrected Adam over named parameter sets."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DimensionError
from .tape import Tensor


class AdamState:
    """First/second moment buffers plus step counter, keyed like params."""

    def __init__(
        self,
        params: dict[str, Tensor],
        *,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> AdamState:
    """One in-place Adam update; increments the step counter."""
    if lr < 0:
        raise ConfigError(f"learning rate must be >= 0, got {lr}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise DimensionError(
                f"gradient for '{name}' has shape {g.shape}, parameter is {p.data.shape}"
            )
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1**state.t)
        v_hat = v / (1.0 - b2**state.t)
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.data.dtype, copy=False)
    return state
