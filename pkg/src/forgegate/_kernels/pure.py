"""Numpy implementations of the conv hot-path kernels.

Patch gather (im2col) and scatter-add (col2im) are the memory-bound inner
loops of every convolution here; the surrounding GEMM is delegated to BLAS
either way. The compiled twin in ``_conv_cy`` computes the same values with
the same accumulation order.
"""

import numpy as np


def im2col(padded: np.ndarray, k: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """Gather k*k patches of a padded NCHW batch into (N, C*k*k, out_h*out_w)."""
    n, c, _, _ = padded.shape
    cols = np.empty((n, c, k, k, out_h, out_w), dtype=padded.dtype)
    for ki in range(k):
        for kj in range(k):
            cols[:, :, ki, kj] = padded[
                :, :, ki : ki + stride * out_h : stride, kj : kj + stride * out_w : stride
            ]
    return cols.reshape(n, c * k * k, out_h * out_w)


def col2im(
    cols: np.ndarray,
    n: int,
    c: int,
    padded_h: int,
    padded_w: int,
    k: int,
    stride: int,
    out_h: int,
    out_w: int,
) -> np.ndarray:
    """Scatter-add (N, C*k*k, out_h*out_w) columns back onto a padded NCHW grid."""
    padded = np.zeros((n, c, padded_h, padded_w), dtype=cols.dtype)
    cols6 = cols.reshape(n, c, k, k, out_h, out_w)
    for ki in range(k):
        for kj in range(k):
            padded[
                :, :, ki : ki + stride * out_h : stride, kj : kj + stride * out_w : stride
            ] += cols6[:, :, ki, kj]
    return padded
