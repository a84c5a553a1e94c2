"""Independent reference implementations used by the tests.

Everything here is deliberately naive (nested loops, direct definitions) and
shares no code with the package, so it can serve as an oracle for the real
implementations.
"""

import numpy as np


def naive_conv2d(x, w, bias=None, stride=1, padding=0, groups=1):
    """Direct nested-loop convolution over NCHW input and OIkk weights."""
    n, c, h, wid = x.shape
    o, c_per_group, k, _ = w.shape
    out_h = (h + 2 * padding - k) // stride + 1
    out_w = (wid + 2 * padding - k) // stride + 1
    xp = np.zeros((n, c, h + 2 * padding, wid + 2 * padding), dtype=np.float64)
    xp[:, :, padding : padding + h, padding : padding + wid] = x
    out = np.zeros((n, o, out_h, out_w), dtype=np.float64)
    o_per_group = o // groups
    for ni in range(n):
        for oi in range(o):
            g = oi // o_per_group
            for oy in range(out_h):
                for ox in range(out_w):
                    acc = 0.0
                    for ci in range(c_per_group):
                        for ky in range(k):
                            for kx in range(k):
                                acc += (
                                    xp[ni, g * c_per_group + ci, oy * stride + ky, ox * stride + kx]
                                    * w[oi, ci, ky, kx]
                                )
                    if bias is not None:
                        acc += bias[oi]
                    out[ni, oi, oy, ox] = acc
    return out


def naive_matmul(a, b):
    """Triple-loop matrix multiply."""
    n, f = a.shape
    f2, g = b.shape
    assert f == f2
    out = np.zeros((n, g), dtype=np.float64)
    for i in range(n):
        for j in range(g):
            acc = 0.0
            for t in range(f):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def finite_diff_grad(fn, arr, eps=1e-4):
    """Central finite differences of scalar fn with respect to every entry of arr."""
    grad = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn()
        flat[i] = orig - eps
        lo = fn()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def finite_diff_grad_subset(fn, arr, indices, eps=1e-4):
    """Central differences at a chosen subset of flat indices."""
    flat = arr.reshape(-1)
    out = {}
    for i in indices:
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn()
        flat[i] = orig - eps
        lo = fn()
        flat[i] = orig
        out[int(i)] = (hi - lo) / (2.0 * eps)
    return out


def relative_error(analytic, numeric):
    """max |a - n| scaled by max(1, |a|, |n|), elementwise-summarized."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(1.0, np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0))
    return np.max(np.abs(analytic - numeric)) / scale


def naive_integral_table(image):
    """Cumulative-sum table with a zero border, table[x][y] = sum over [0,x)*[0,y).

    image is indexed [row, col] = [y, x]; accumulation is 64-bit.
    """
    h, w = image.shape
    table = np.zeros((w + 1, h + 1), dtype=np.float64)
    for x in range(1, w + 1):
        for y in range(1, h + 1):
            acc = 0.0
            for yy in range(y):
                for xx in range(x):
                    acc += float(image[yy, xx])
            table[x, y] = acc
    return table


def naive_rect_sum(image, x, y, w, h):
    acc = 0.0
    for yy in range(y, y + h):
        for xx in range(x, x + w):
            acc += float(image[yy, xx])
    return acc
