"""Numeric core: tensors, reverse-mode differentiation, parameters, optimizers."""

from .gradcheck import GradCheckReport, grad_check
from .optim import Optimizer, OptimizerConfig, optimizer_step
from .params import (
    ParamCounts,
    ParamSet,
    init_conv,
    init_dense,
    kaiming_uniform,
    layer_rng,
    param_count,
)
from .tensor import (
    DEFAULT_DTYPE,
    WIDE_DTYPE,
    Tensor,
    add,
    bce_with_logits,
    concat_channels,
    conv2d,
    dense,
    interp_matrix,
    matmul,
    maxpool2,
    mul,
    relu,
    reshape,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    sub,
    tmean,
    tsum,
    upsample_bilinear,
)
from .weights import WeightFormatError, load_weights, load_weights_into, save_weights

__all__ = [
    "DEFAULT_DTYPE",
    "WIDE_DTYPE",
    "GradCheckReport",
    "Optimizer",
    "OptimizerConfig",
    "ParamCounts",
    "ParamSet",
    "Tensor",
    "WeightFormatError",
    "add",
    "bce_with_logits",
    "concat_channels",
    "conv2d",
    "dense",
    "grad_check",
    "init_conv",
    "init_dense",
    "interp_matrix",
    "kaiming_uniform",
    "layer_rng",
    "load_weights",
    "load_weights_into",
    "matmul",
    "maxpool2",
    "mul",
    "optimizer_step",
    "param_count",
    "relu",
    "reshape",
    "save_weights",
    "sigmoid",
    "softmax",
    "softmax_cross_entropy",
    "sub",
    "tmean",
    "tsum",
    "upsample_bilinear",
]
