"""Minimal reverse-mode differentiation core (numpy-backed)."""

from . import functional
from .gradcheck import check_gradients, numeric_gradient, relative_error
from .nn import Conv2d, Module, Parameter
from .optim import AdamState, adam_step
from .tensor import DimensionError, Tensor

__all__ = [
    "AdamState",
    "Conv2d",
    "DimensionError",
    "Module",
    "Parameter",
    "Tensor",
    "adam_step",
    "check_gradients",
    "functional",
    "numeric_gradient",
    "relative_error",
]
