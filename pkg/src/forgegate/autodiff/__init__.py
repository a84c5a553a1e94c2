"""Minimal reverse-mode tensor engine: every op the models need, plus Adam."""

from .adam import Adam, AdamState, adam_step
from .layers import BatchNorm2d, Conv2d, ConvTranspose2d, Linear
from .ops import (
    add,
    affine,
    batchnorm2d,
    bce_loss,
    conv2d,
    conv_transpose2d,
    global_avg_pool2d,
    leaky_relu,
    linear,
    mean_all,
    neg,
    pointwise_activation,
    relu,
    reshape,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    sub,
    sum_all,
    tanh,
)
from .snapshot import load_tensors, pack_tensors, save_tensors, unpack_tensors
from .tensor import Tensor, backward, zero_grads

__all__ = [
    "Adam",
    "AdamState",
    "adam_step",
    "BatchNorm2d",
    "Conv2d",
    "ConvTranspose2d",
    "Linear",
    "Tensor",
    "backward",
    "zero_grads",
    "add",
    "affine",
    "batchnorm2d",
    "bce_loss",
    "conv2d",
    "conv_transpose2d",
    "global_avg_pool2d",
    "leaky_relu",
    "linear",
    "mean_all",
    "neg",
    "pointwise_activation",
    "relu",
    "reshape",
    "sigmoid",
    "softmax",
    "softmax_cross_entropy",
    "sub",
    "sum_all",
    "tanh",
    "load_tensors",
    "pack_tensors",
    "save_tensors",
    "unpack_tensors",
]
