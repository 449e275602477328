"""Reverse-mode gradients via an explicit tape of forward steps.

Ops in :mod:`hemalearn.nn.ops` append one step per primitive to the
active tape. Because steps are appended in execution order, replaying
the list once in reverse visits every step exactly once and is a valid
topological order for backpropagation. All five model families in the
package run through this single code path.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import TapeError


class Tensor:
    """Array wrapper giving values an identity the tape can track.

    Plain numpy arrays flow in and out at module boundaries; Tensors
    exist only so the tape can tell which intermediate fed which step.
    """

    __slots__ = ("data",)

    def __init__(self, data, dtype=None):
        self.data = np.asarray(data, dtype=dtype)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]

_ACTIVE: list["GradientTape"] = []


def active_tape() -> "GradientTape | None":
    """The innermost open tape, or None when recording is off."""
    return _ACTIVE[-1] if _ACTIVE else None


class GradientTape:
    """Ordered record of forward primitives, replayed once in reverse."""

    def __init__(self) -> None:
        self._steps: list[tuple[Tensor, tuple[Tensor, ...], BackwardFn]] = []
        self._output_ids: set[int] = set()

    def __enter__(self) -> "GradientTape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        _ACTIVE.remove(self)
        return False

    def __len__(self) -> int:
        return len(self._steps)

    def record(self, out: Tensor, inputs: Sequence[Tensor], backward: BackwardFn) -> None:
        self._steps.append((out, tuple(inputs), backward))
        self._output_ids.add(id(out))

    def gradients(self, loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
        """Gradients of `loss` for each tensor in `params`.

        Parameters the loss does not depend on get exact zeros. Raises
        :class:`TapeError` if `loss` was not produced under this tape.
        """
        if id(loss) not in self._output_ids:
            raise TapeError(
                "backward requested for a loss this tape never saw; "
                "run the forward pass inside `with GradientTape() as tape:`"
            )
        if loss.data.size != 1:
            raise TapeError(f"loss must be scalar, got shape {loss.data.shape}")

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for out, inputs, backward_fn in reversed(self._steps):
            upstream = grads.get(id(out))
            if upstream is None:
                continue  # this step does not influence the loss
            for tensor, piece in zip(inputs, backward_fn(upstream)):
                if piece is None:
                    continue
                seen = grads.get(id(tensor))
                grads[id(tensor)] = piece if seen is None else seen + piece
        return [grads.get(id(p), np.zeros_like(p.data)) for p in params]


def backward(tape: GradientTape, loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
    """Functional alias for :meth:`GradientTape.gradients`."""
    return tape.gradients(loss, params)
