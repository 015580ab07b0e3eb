"""Minimal tensor library with reverse-mode automatic differentiation."""

from . import ops
from .gradcheck import check_gradients, relative_error
from .tensor import (
    NumericalError,
    ShapeError,
    Tensor,
    as_tensor,
    default_dtype,
    first_nonfinite,
    get_default_dtype,
    is_grad_enabled,
    no_grad,
)

__all__ = [
    "NumericalError",
    "ShapeError",
    "Tensor",
    "as_tensor",
    "check_gradients",
    "default_dtype",
    "first_nonfinite",
    "get_default_dtype",
    "is_grad_enabled",
    "no_grad",
    "ops",
    "relative_error",
]
