"""Central-difference verification of tape gradients.

The harness is meant to run on float64 copies of a model: callers build
the model with dtype=np.float64 and pass a loss closure that reads the
parameters' current `.data`. Perturbations happen in place and are
always restored.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from ..errors import NumericalError
from .tape import GradientTape, Tensor

LossFn = Callable[[], Tensor]


def analytic_gradients(loss_fn: LossFn, params: dict[str, Tensor]) -> tuple[float, dict[str, np.ndarray]]:
    """Run the forward under a fresh tape and return (loss, grads)."""
    with GradientTape() as tape:
        loss = loss_fn()
    value = float(loss.data)
    if not math.isfinite(value):
        raise NumericalError(f"non-finite loss {value!r} during gradient check")
    grads = tape.gradients(loss, list(params.values()))
    return value, dict(zip(params, grads))


def numeric_gradient_entries(
    loss_fn: LossFn,
    params: dict[str, Tensor],
    *,
    eps: float = 1e-3,
    max_entries_per_param: int = 24,
    rng: np.random.Generator | None = None,
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Central differences for a sampled subset of each parameter.

    Returns {name: (flat_indices, fd_values)}. The loss is evaluated
    outside any tape, so this side never touches the analytic path.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    entries: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        if flat.size <= max_entries_per_param:
            idxs = np.arange(flat.size)
        else:
            idxs = np.sort(rng.choice(flat.size, size=max_entries_per_param, replace=False))
        values = np.empty(idxs.size, dtype=np.float64)
        for j, i in enumerate(idxs):
            original = flat[i]
            flat[i] = original + eps
            hi = float(loss_fn().data)
            flat[i] = original - eps
            lo = float(loss_fn().data)
            flat[i] = original
            if not (math.isfinite(hi) and math.isfinite(lo)):
                raise NumericalError(
                    f"non-finite loss while probing '{name}'[{i}] (hi={hi!r}, lo={lo!r})"
                )
            values[j] = (hi - lo) / (2.0 * eps)
        entries[name] = (idxs, values)
    return entries


def max_relative_error(
    analytic: dict[str, np.ndarray],
    numeric: dict[str, tuple[np.ndarray, np.ndarray]],
) -> float:
    worst = 0.0
    for name, (idxs, fd) in numeric.items():
        a = analytic[name].reshape(-1)[idxs]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(fd)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - fd) / denom)) if idxs.size else 0.0)
    return worst


def finite_difference_check(
    loss_fn: LossFn,
    params: dict[str, Tensor],
    *,
    eps: float = 1e-3,
    max_entries_per_param: int = 24,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between tape gradients and central differences."""
    _, analytic = analytic_gradients(loss_fn, params)
    numeric = numeric_gradient_entries(
        loss_fn, params, eps=eps, max_entries_per_param=max_entries_per_param, rng=rng
    )
    return max_relative_error(analytic, numeric)
