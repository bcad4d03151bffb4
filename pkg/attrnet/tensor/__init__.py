"""Tensors, differentiable primitives and reverse-mode gradient propagation."""
from attrnet.tensor.gradcheck import finite_difference_gradient, relative_error
from attrnet.tensor.ops import (
    add,
    affine,
    conv2d,
    dropout,
    flatten,
    maxpool2,
    mul,
    relu,
    sigmoid,
    tensor_sum,
)
from attrnet.tensor.tensor import (
    ComputeGraph,
    Function,
    Tensor,
    backward,
    default_dtype,
    float64_mode,
    grad_enabled,
    no_grad,
)

__all__ = [
    "Tensor",
    "Function",
    "ComputeGraph",
    "backward",
    "no_grad",
    "float64_mode",
    "grad_enabled",
    "default_dtype",
    "conv2d",
    "maxpool2",
    "relu",
    "sigmoid",
    "affine",
    "dropout",
    "flatten",
    "add",
    "mul",
    "tensor_sum",
    "finite_difference_gradient",
    "relative_error",
]
