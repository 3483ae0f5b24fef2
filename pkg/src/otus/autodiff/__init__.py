"""Minimal reverse-mode automatic differentiation over numpy arrays."""

from . import functional, tnsr
from .functional import (
    RunningStats,
    abs_mean,
    add,
    batchnorm2d,
    concat,
    concat_channels,
    conv2d,
    div,
    leaky_relu,
    maxpool2d,
    mean,
    mul,
    relu,
    square,
    sub,
    upsample_nearest,
)
from .tensor import (
    Tensor,
    as_tensor,
    default_dtype,
    no_grad,
    precision,
    set_debug,
    set_default_dtype,
)

__all__ = [
    "RunningStats", "Tensor", "abs_mean", "add", "as_tensor", "batchnorm2d", "concat",
    "concat_channels", "conv2d", "default_dtype", "div", "functional", "leaky_relu",
    "maxpool2d", "mean", "mul", "no_grad", "precision", "relu", "set_debug",
    "set_default_dtype", "square", "sub", "tnsr", "upsample_nearest",
]
