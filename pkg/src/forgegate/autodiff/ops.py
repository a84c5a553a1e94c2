"""Differentiable operations over ``Tensor``.

Each op computes its forward result with numpy (conv gathers/scatters go
through the selected kernel backend) and attaches a closure mapping the
upstream gradient to per-parent gradients. Closures must return freshly
allocated arrays; ``backward`` accumulates into them in place.

No broadcasting: elementwise ops require identical shapes, and the only
implicit expansion is the bias add inside ``conv2d``/``linear``.
"""

from __future__ import annotations

import numpy as np

from .. import _kernels
from ..errors import ConfigurationError, ContractError, DegenerateBatchError, DimensionError
from .tensor import Tensor

BCE_CLAMP = 1e-7


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=parents, _backward_fn=backward_fn)
    return Tensor(data)


# ---------------------------------------------------------------------------
# convolution


def _conv_geometry(h: int, w: int, k: int, stride: int, padding: int) -> tuple[int, int]:
    out_h = (h + 2 * padding - k) // stride + 1
    out_w = (w + 2 * padding - k) // stride + 1
    return out_h, out_w


def _pad_nchw(arr: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return arr
    return np.pad(arr, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _crop_nchw(arr: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return arr
    return arr[:, :, padding:-padding, padding:-padding]


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    """Grouped 2D convolution, NCHW input against OIkk weights."""
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise DimensionError(
            f"conv2d expects 4D input and weight, got {x.shape} and {weight.shape}"
        )
    n, c, h, w = x.shape
    o, c_per_group, kh, kw = weight.shape
    if kh != kw:
        raise DimensionError(f"conv2d kernels must be square, got {weight.shape}")
    k = kh
    if groups < 1 or c % groups != 0 or o % groups != 0:
        raise ConfigurationError(f"groups={groups} must divide channels C={c} and O={o}")
    if c_per_group != c // groups:
        raise DimensionError(
            f"weight shape {weight.shape} incompatible with input {x.shape} at groups={groups}"
        )
    if h + 2 * padding < k or w + 2 * padding < k:
        raise DimensionError(
            f"kernel {k}x{k} does not fit padded input {x.shape} (padding={padding})"
        )
    if bias is not None and bias.shape != (o,):
        raise DimensionError(f"bias shape {bias.shape} != ({o},)")

    out_h, out_w = _conv_geometry(h, w, k, stride, padding)
    length = out_h * out_w
    padded = _pad_nchw(x.data, padding)
    cols = _kernels.im2col(padded, k, stride, out_h, out_w)
    cols_g = cols.reshape(n, groups, (c // groups) * k * k, length)
    w_g = weight.data.reshape(groups, o // groups, (c // groups) * k * k)
    out = np.matmul(w_g[None], cols_g)  # (n, groups, o/groups, length)
    out = out.reshape(n, o, out_h, out_w)
    if bias is not None:
        out = out + bias.data.reshape(1, o, 1, 1)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward_fn(gy: np.ndarray):
        gy_g = gy.reshape(n, groups, o // groups, length)
        grad_w = np.matmul(gy_g, cols_g.transpose(0, 1, 3, 2)).sum(axis=0)
        grad_w = grad_w.reshape(weight.shape)
        gcols = np.matmul(w_g.transpose(0, 2, 1)[None], gy_g)
        gcols = gcols.reshape(n, c * k * k, length)
        gpadded = _kernels.col2im(
            gcols, n, c, h + 2 * padding, w + 2 * padding, k, stride, out_h, out_w
        )
        grad_x = np.ascontiguousarray(_crop_nchw(gpadded, padding))
        if bias is None:
            return ((x, grad_x), (weight, grad_w))
        return ((x, grad_x), (weight, grad_w), (bias, gy.sum(axis=(0, 2, 3))))

    return _result(out, parents, backward_fn)


def conv_transpose2d(x: Tensor, weight: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed 2D convolution: the adjoint of ``conv2d`` with the same geometry.

    ``weight`` is laid out (in_channels, out_channels, k, k); reading it as a
    conv2d weight (O=in, I=out) makes ``conv_transpose2d(g, W)`` exactly the
    input gradient of ``conv2d(x, W)`` at upstream gradient ``g``.
    """
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise DimensionError(
            f"conv_transpose2d expects 4D input and weight, got {x.shape} and {weight.shape}"
        )
    n, ci, h, w = x.shape
    wi, co, kh, kw = weight.shape
    if kh != kw:
        raise DimensionError(f"conv_transpose2d kernels must be square, got {weight.shape}")
    k = kh
    if k < 1 or stride < 1:
        raise ContractError(f"stride={stride} and kernel={k} must be >= 1")
    if wi != ci:
        raise DimensionError(f"weight shape {weight.shape} incompatible with input {x.shape}")
    out_h = (h - 1) * stride - 2 * padding + k
    out_w = (w - 1) * stride - 2 * padding + k
    if out_h < 1 or out_w < 1:
        raise DimensionError(
            f"conv_transpose2d geometry yields non-positive output {out_h}x{out_w} "
            f"for input {x.shape}, k={k}, stride={stride}, padding={padding}"
        )

    length = h * w
    w_mat = weight.data.reshape(ci, co * k * k)
    x_flat = x.data.reshape(n, ci, length)
    cols = np.matmul(w_mat.T[None], x_flat)  # (n, co*k*k, h*w)
    gpadded = _kernels.col2im(
        cols, n, co, out_h + 2 * padding, out_w + 2 * padding, k, stride, h, w
    )
    out = np.ascontiguousarray(_crop_nchw(gpadded, padding))

    def backward_fn(gy: np.ndarray):
        gy_padded = _pad_nchw(gy, padding)
        gy_cols = _kernels.im2col(gy_padded, k, stride, h, w)  # (n, co*k*k, h*w)
        grad_x = np.matmul(w_mat[None], gy_cols).reshape(n, ci, h, w)
        grad_w = np.matmul(x_flat, gy_cols.transpose(0, 2, 1)).sum(axis=0)
        return ((x, grad_x), (weight, grad_w.reshape(weight.shape)))

    return _result(out, (x, weight), backward_fn)


# ---------------------------------------------------------------------------
# normalization


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    momentum: float = 0.1,
    eps: float = 1e-5,
    training: bool = True,
) -> Tensor:
    """Per-channel batch normalization over an NCHW batch.

    Training mode normalizes with batch statistics (biased variance) and
    updates the running buffers in place; eval mode uses the running buffers.
    """
    if x.data.ndim != 4:
        raise DimensionError(f"batchnorm2d expects NCHW input, got {x.shape}")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(
            f"gamma/beta shapes {gamma.shape}/{beta.shape} do not match {c} channels"
        )
    m = n * h * w
    if training:
        if m < 2:
            raise DegenerateBatchError(
                f"batch statistics need at least 2 elements per channel, got {m}"
            )
        mu = x.data.mean(axis=(0, 2, 3))
        centered = x.data - mu.reshape(1, c, 1, 1)
        var = np.mean(centered * centered, axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu = running_mean
        var = running_var
        centered = x.data - mu.reshape(1, c, 1, 1)

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std.reshape(1, c, 1, 1)
    out = gamma.data.reshape(1, c, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1)
    out = out.astype(x.dtype, copy=False)

    def backward_fn(gy: np.ndarray):
        grad_gamma = (gy * xhat).sum(axis=(0, 2, 3))
        grad_beta = gy.sum(axis=(0, 2, 3))
        gxhat = gy * gamma.data.reshape(1, c, 1, 1)
        if training:
            sum_gxhat = gxhat.sum(axis=(0, 2, 3)).reshape(1, c, 1, 1)
            sum_gxhat_xhat = (gxhat * xhat).sum(axis=(0, 2, 3)).reshape(1, c, 1, 1)
            grad_x = (inv_std.reshape(1, c, 1, 1) / m) * (
                m * gxhat - sum_gxhat - xhat * sum_gxhat_xhat
            )
        else:
            grad_x = gxhat * inv_std.reshape(1, c, 1, 1)
        grad_x = grad_x.astype(x.dtype, copy=False)
        return ((x, grad_x), (gamma, grad_gamma), (beta, grad_beta))

    return _result(out, (x, gamma, beta), backward_fn)


# ---------------------------------------------------------------------------
# pointwise


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    """max(v, slope*v) elementwise; the subgradient at exactly 0 is ``slope``."""
    if not 0.0 <= slope < 1.0:
        raise ContractError(f"leaky_relu slope must be in [0, 1), got {slope}")
    positive = x.data > 0
    out = np.where(positive, x.data, x.dtype.type(slope) * x.data)

    def backward_fn(gy: np.ndarray):
        return ((x, np.where(positive, gy, x.dtype.type(slope) * gy)),)

    return _result(out, (x,), backward_fn)


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, 0.0)


def sigmoid(x: Tensor) -> Tensor:
    # numerically safe in both tails
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ez = np.exp(x.data[~pos])
    out[~pos] = ez / (1.0 + ez)

    def backward_fn(gy: np.ndarray):
        return ((x, gy * out * (1.0 - out)),)

    return _result(out, (x,), backward_fn)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backward_fn(gy: np.ndarray):
        return ((x, gy * (1.0 - out * out)),)

    return _result(out, (x,), backward_fn)


def pointwise_activation(x: Tensor, kind: str) -> Tensor:
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    raise ContractError(f"unknown activation kind {kind!r}")


def affine(x: Tensor, scale: float, shift: float) -> Tensor:
    """scale*x + shift with scalar constants (used to remap tanh output to [0,1])."""
    s = x.dtype.type(scale)
    out = s * x.data + x.dtype.type(shift)

    def backward_fn(gy: np.ndarray):
        return ((x, s * gy),)

    return _result(out, (x,), backward_fn)


# ---------------------------------------------------------------------------
# linear algebra


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x @ weight + bias for x (N, F), weight (F, G), bias (G,)."""
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise DimensionError(f"linear expects 2D input and weight, got {x.shape}, {weight.shape}")
    n, f = x.shape
    fw, g = weight.shape
    if f != fw:
        raise DimensionError(f"linear inner dimensions disagree: input {x.shape} vs weight {weight.shape}")
    if bias.shape != (g,):
        raise DimensionError(f"bias shape {bias.shape} != ({g},)")
    out = x.data @ weight.data + bias.data

    def backward_fn(gy: np.ndarray):
        return ((x, gy @ weight.data.T), (weight, x.data.T @ gy), (bias, gy.sum(axis=0)))

    return _result(out, (x, weight, bias), backward_fn)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = x.data.reshape(shape)

    def backward_fn(gy: np.ndarray):
        return ((x, gy.reshape(x.shape).copy()),)

    return _result(out, (x,), backward_fn)


def add(x: Tensor, y: Tensor) -> Tensor:
    if x.shape != y.shape:
        raise DimensionError(f"add requires equal shapes, got {x.shape} and {y.shape}")
    out = x.data + y.data

    def backward_fn(gy: np.ndarray):
        return ((x, gy.copy()), (y, gy.copy()))

    return _result(out, (x, y), backward_fn)


def sub(x: Tensor, y: Tensor) -> Tensor:
    if x.shape != y.shape:
        raise DimensionError(f"sub requires equal shapes, got {x.shape} and {y.shape}")
    out = x.data - y.data

    def backward_fn(gy: np.ndarray):
        return ((x, gy.copy()), (y, -gy))

    return _result(out, (x, y), backward_fn)


def neg(x: Tensor) -> Tensor:
    def backward_fn(gy: np.ndarray):
        return ((x, -gy),)

    return _result(-x.data, (x,), backward_fn)


def sum_all(x: Tensor) -> Tensor:
    out = x.data.sum(dtype=x.dtype)

    def backward_fn(gy: np.ndarray):
        return ((x, np.full_like(x.data, gy.reshape(()))),)

    return _result(np.asarray(out), (x,), backward_fn)


def mean_all(x: Tensor) -> Tensor:
    inv = x.dtype.type(1.0 / x.size)
    out = np.asarray(x.data.mean(dtype=x.dtype))

    def backward_fn(gy: np.ndarray):
        return ((x, np.full_like(x.data, gy.reshape(()) * inv)),)

    return _result(out, (x,), backward_fn)


def global_avg_pool2d(x: Tensor) -> Tensor:
    """Mean over the spatial axes: (N, C, H, W) -> (N, C)."""
    if x.data.ndim != 4:
        raise DimensionError(f"global_avg_pool2d expects NCHW input, got {x.shape}")
    n, c, h, w = x.shape
    inv = x.dtype.type(1.0 / (h * w))
    out = x.data.mean(axis=(2, 3), dtype=x.dtype)

    def backward_fn(gy: np.ndarray):
        grad = np.empty_like(x.data)
        grad[:] = (gy * inv).reshape(n, c, 1, 1)
        return ((x, grad),)

    return _result(out, (x,), backward_fn)


# ---------------------------------------------------------------------------
# losses


def bce_loss(prediction: Tensor, target: Tensor) -> Tensor:
    """Mean binary cross entropy; predictions are clamped to [1e-7, 1-1e-7].

    The gradient is exact for the clamped function: it vanishes where the
    clamp is active.
    """
    if prediction.shape != target.shape:
        raise DimensionError(
            f"bce_loss shapes differ: prediction {prediction.shape} vs target {target.shape}"
        )
    lo = prediction.dtype.type(BCE_CLAMP)
    hi = prediction.dtype.type(1.0 - BCE_CLAMP)
    p = np.clip(prediction.data, lo, hi)
    t = target.data
    losses = -(t * np.log(p) + (1.0 - t) * np.log1p(-p))
    out = np.asarray(losses.mean(dtype=prediction.dtype))
    inside = (prediction.data >= lo) & (prediction.data <= hi)
    count = prediction.size

    def backward_fn(gy: np.ndarray):
        inner = (-(t / p) + (1.0 - t) / (1.0 - p)) / count
        grad = np.where(inside, inner, 0.0).astype(prediction.dtype) * gy.reshape(())
        return ((prediction, grad),)

    return _result(out, (prediction,), backward_fn)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross entropy of (N, C) logits against integer class labels."""
    if logits.data.ndim != 2:
        raise DimensionError(f"softmax_cross_entropy expects (N, C) logits, got {logits.shape}")
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise DimensionError(f"labels shape {labels.shape} != ({n},)")
    if labels.min() < 0 or labels.max() >= c:
        raise ContractError(f"labels must lie in [0, {c})")
    probs = softmax(logits.data)
    picked = probs[np.arange(n), labels]
    out = np.asarray(-np.log(np.maximum(picked, BCE_CLAMP)).mean(dtype=logits.dtype))

    def backward_fn(gy: np.ndarray):
        grad = probs.copy()
        grad[np.arange(n), labels] -= 1.0
        grad = (grad / n).astype(logits.dtype) * gy.reshape(())
        return ((logits, grad),)

    return _result(out, (logits,), backward_fn)
