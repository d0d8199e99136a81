"""Minimal dense-tensor engine with reverse-mode differentiation."""

from . import functional
from .conv import conv2d, conv3d, deconv
from .functional import (
    add,
    channel_affine,
    concat,
    crop,
    cross_entropy,
    einsum,
    expand,
    gather,
    layer_scale,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    scale,
    softmax,
    sub,
    sum,
    sum_axis,
    transpose,
)
from .tensor import Function, GraphError, Tensor, default_dtype, no_grad, precision, set_debug

__all__ = [
    "Function",
    "GraphError",
    "Tensor",
    "add",
    "channel_affine",
    "concat",
    "conv2d",
    "conv3d",
    "crop",
    "cross_entropy",
    "deconv",
    "default_dtype",
    "einsum",
    "expand",
    "functional",
    "gather",
    "layer_scale",
    "matmul",
    "mean",
    "mul",
    "no_grad",
    "precision",
    "relu",
    "reshape",
    "scale",
    "set_debug",
    "softmax",
    "sub",
    "sum",
    "sum_axis",
    "transpose",
]
