"""Deterministic dense-network primitives: tape, ops, layers, Adam."""

from . import ops
from .adam import AdamState, adam_step
from .gradcheck import (
    analytic_gradients,
    finite_difference_check,
    max_relative_error,
    numeric_gradient_entries,
)
from .layers import BatchNormLayer, DropoutLayer, LinearLayer, he_uniform, xavier_uniform
from .losses import binary_cross_entropy_loss, cross_entropy_loss, loss, mse_loss
from .ops import softmax_rows
from .tape import GradientTape, Tensor, backward

__all__ = [
    "AdamState",
    "BatchNormLayer",
    "DropoutLayer",
    "GradientTape",
    "LinearLayer",
    "Tensor",
    "adam_step",
    "analytic_gradients",
    "backward",
    "binary_cross_entropy_loss",
    "cross_entropy_loss",
    "finite_difference_check",
    "he_uniform",
    "loss",
    "max_relative_error",
    "mse_loss",
    "numeric_gradient_entries",
    "ops",
    "softmax_rows",
    "xavier_uniform",
]
