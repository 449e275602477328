"""Dense-network building blocks with seeded initialization.

Weight init follows the usual convention: He-uniform into ReLU blocks,
Xavier-uniform elsewhere, zero biases. Every layer takes the Generator
it should draw from, so callers decide the seeding policy.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DimensionError, InputError
from . import ops
from .tape import Tensor


def he_uniform(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def xavier_uniform(
    shape: tuple[int, ...], fan_in: int, fan_out: int, rng: np.random.Generator, dtype
) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class LinearLayer:
    """Affine map x -> x W^T + b with the weight stored (out, in)."""

    def __init__(
        self,
        in_width: int,
        out_width: int,
        *,
        rng: np.random.Generator,
        init: str = "he",
        bias: bool = True,
        dtype=np.float32,
    ) -> None:
        if init == "he":
            w = he_uniform((out_width, in_width), in_width, rng, dtype)
        elif init == "xavier":
            w = xavier_uniform((out_width, in_width), in_width, out_width, rng, dtype)
        else:
            raise ConfigError(f"unknown init '{init}', expected 'he' or 'xavier'")
        self.in_width = in_width
        self.out_width = out_width
        self.weight = Tensor(w)
        self.bias = Tensor(np.zeros(out_width, dtype=dtype)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_width:
            raise DimensionError(
                f"linear layer takes width {self.in_width} (weight {self.weight.shape}), "
                f"got input of shape {x.shape}"
            )
        # collapse leading axes so BLAS sees one big 2-d product
        lead = x.shape[:-1]
        flat = ops.reshape(x, (-1, self.in_width)) if x.ndim != 2 else x
        out = ops.matmul(flat, ops.transpose(self.weight))
        if self.bias is not None:
            out = ops.add(out, self.bias)
        if x.ndim != 2:
            out = ops.reshape(out, (*lead, self.out_width))
        return out

    def parameters(self) -> dict[str, Tensor]:
        named = {"weight": self.weight}
        if self.bias is not None:
            named["bias"] = self.bias
        return named


class BatchNormLayer:
    """Per-feature batch normalization with running statistics.

    Train mode normalizes with the batch mean and (biased) variance and
    updates the running stats by exponential moving average; eval mode
    uses the running stats only, making it a fixed affine map.
    """

    def __init__(self, width: int, *, eps: float = 1e-5, momentum: float = 0.1, dtype=np.float32) -> None:
        self.width = width
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones(width, dtype=dtype))
        self.beta = Tensor(np.zeros(width, dtype=dtype))
        self.running_mean = np.zeros(width, dtype=dtype)
        self.running_var = np.ones(width, dtype=dtype)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        if x.shape[-1] != self.width:
            raise DimensionError(
                f"batchnorm over {self.width} features got input of shape {x.shape}"
            )
        if training:
            if x.shape[0] < 2:
                raise InputError(
                    "batchnorm in train mode needs batch size >= 2; "
                    f"got {x.shape[0]} (batch variance undefined)"
                )
            mu = ops.mean(x, axis=0)
            centered = ops.sub(x, mu)
            var = ops.mean(ops.mul(centered, centered), axis=0)
            m = self.momentum
            self.running_mean = ((1.0 - m) * self.running_mean + m * mu.data).astype(
                self.running_mean.dtype
            )
            self.running_var = ((1.0 - m) * self.running_var + m * var.data).astype(
                self.running_var.dtype
            )
            inv_std = ops.power(ops.add(var, self.eps), -0.5)
            normalized = ops.mul(centered, inv_std)
        else:
            inv_std = (1.0 / np.sqrt(self.running_var + self.eps)).astype(x.dtype)
            normalized = ops.mul(ops.sub(x, Tensor(self.running_mean.astype(x.dtype))), Tensor(inv_std))
        return ops.add(ops.mul(normalized, self.gamma), self.beta)

    def parameters(self) -> dict[str, Tensor]:
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self) -> dict[str, np.ndarray]:
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def load_buffers(self, buffers: dict[str, np.ndarray]) -> None:
        self.running_mean = np.asarray(buffers["running_mean"], dtype=self.running_mean.dtype)
        self.running_var = np.asarray(buffers["running_var"], dtype=self.running_var.dtype)


class DropoutLayer:
    """Inverted dropout: survivors scaled by 1/(1-rate), eval is identity.

    The mask is drawn from the layer's own stream; `fixed_mask` pins it
    for gradient checking.
    """

    def __init__(self, rate: float, rng: np.random.Generator) -> None:
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng
        self.fixed_mask: np.ndarray | None = None

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        if not training or self.rate == 0.0:
            return x
        if self.fixed_mask is not None:
            keep = self.fixed_mask
        else:
            keep = self.rng.random(x.shape) >= self.rate
        scaled = keep.astype(x.dtype) / (1.0 - self.rate)
        return ops.mul(x, Tensor(scaled))

    def parameters(self) -> dict[str, Tensor]:
        return {}
