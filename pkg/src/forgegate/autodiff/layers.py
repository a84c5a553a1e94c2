"""Parameterized layers: thin state holders over the functional ops.

Initialization follows the usual DCGAN recipe: conv and transposed-conv
weights ~ N(0, 0.02), batchnorm gain ~ N(1, 0.02) with zero shift. Draws
come from the caller's generator in construction order, so a model build is
deterministic under a fixed seed.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError
from . import ops
from .tensor import Tensor

WEIGHT_STD = 0.02


class Conv2d:
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        stride: int = 1,
        padding: int = 0,
        groups: int = 1,
        bias: bool = False,
        rng: np.random.Generator | None = None,
        dtype=np.float32,
    ):
        if in_channels % groups or out_channels % groups:
            raise ConfigurationError(
                f"groups={groups} must divide in={in_channels} and out={out_channels}"
            )
        rng = rng or np.random.default_rng()
        shape = (out_channels, in_channels // groups, kernel, kernel)
        self.weight = Tensor(
            rng.normal(0.0, WEIGHT_STD, size=shape).astype(dtype), requires_grad=True
        )
        self.bias = (
            Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True) if bias else None
        )
        self.stride = stride
        self.padding = padding
        self.groups = groups

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(
            x, self.weight, self.bias, stride=self.stride, padding=self.padding, groups=self.groups
        )

    def params(self, prefix: str) -> dict[str, Tensor]:
        named = {f"{prefix}/weight": self.weight}
        if self.bias is not None:
            named[f"{prefix}/bias"] = self.bias
        return named

    def buffers(self, prefix: str) -> dict[str, np.ndarray]:
        return {}


class ConvTranspose2d:
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        stride: int = 1,
        padding: int = 0,
        rng: np.random.Generator | None = None,
        dtype=np.float32,
    ):
        rng = rng or np.random.default_rng()
        shape = (in_channels, out_channels, kernel, kernel)
        self.weight = Tensor(
            rng.normal(0.0, WEIGHT_STD, size=shape).astype(dtype), requires_grad=True
        )
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv_transpose2d(x, self.weight, stride=self.stride, padding=self.padding)

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}/weight": self.weight}

    def buffers(self, prefix: str) -> dict[str, np.ndarray]:
        return {}


class BatchNorm2d:
    """Batchnorm layer state: trainable gain/shift plus running statistics."""

    def __init__(
        self,
        channels: int,
        momentum: float = 0.1,
        eps: float = 1e-5,
        rng: np.random.Generator | None = None,
        dtype=np.float32,
    ):
        if not 0.0 < momentum <= 1.0 or eps <= 0.0:
            raise ConfigurationError(f"invalid momentum={momentum} or eps={eps}")
        rng = rng or np.random.default_rng()
        self.gamma = Tensor(
            rng.normal(1.0, WEIGHT_STD, size=channels).astype(dtype), requires_grad=True
        )
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps
        self.mode = "train"

    def __call__(self, x: Tensor) -> Tensor:
        return ops.batchnorm2d(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            momentum=self.momentum,
            eps=self.eps,
            training=self.mode == "train",
        )

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}/gamma": self.gamma, f"{prefix}/beta": self.beta}

    def buffers(self, prefix: str) -> dict[str, np.ndarray]:
        return {
            f"{prefix}/running_mean": self.running_mean,
            f"{prefix}/running_var": self.running_var,
        }


class Linear:
    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator | None = None,
        dtype=np.float32,
    ):
        rng = rng or np.random.default_rng()
        self.weight = Tensor(
            rng.normal(0.0, WEIGHT_STD, size=(in_features, out_features)).astype(dtype),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}/weight": self.weight, f"{prefix}/bias": self.bias}

    def buffers(self, prefix: str) -> dict[str, np.ndarray]:
        return {}
