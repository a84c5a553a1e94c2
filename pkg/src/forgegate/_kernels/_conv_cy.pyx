# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the pure-numpy conv kernels in ``pure.py``.

Same values, same accumulation order; just typed loops instead of strided
slice arithmetic, which avoids the temporary views and keeps the gather and
scatter cache-friendly for the small kernel sizes used here.
"""

import numpy as np

cimport numpy as cnp

ctypedef fused real:
    float
    double


def im2col(cnp.ndarray padded, int k, int stride, int out_h, int out_w):
    padded = np.ascontiguousarray(padded)
    if padded.dtype == np.float32:
        return _im2col[float](padded, k, stride, out_h, out_w)
    if padded.dtype == np.float64:
        return _im2col[double](padded, k, stride, out_h, out_w)
    raise TypeError(f"unsupported dtype {padded.dtype}")


def col2im(cnp.ndarray cols, int n, int c, int padded_h, int padded_w,
           int k, int stride, int out_h, int out_w):
    cols = np.ascontiguousarray(cols)
    if cols.dtype == np.float32:
        return _col2im[float](cols, n, c, padded_h, padded_w, k, stride, out_h, out_w)
    if cols.dtype == np.float64:
        return _col2im[double](cols, n, c, padded_h, padded_w, k, stride, out_h, out_w)
    raise TypeError(f"unsupported dtype {cols.dtype}")


cdef _im2col(real[:, :, :, ::1] padded, int k, int stride, int out_h, int out_w):
    cdef Py_ssize_t n = padded.shape[0]
    cdef Py_ssize_t c = padded.shape[1]
    cdef Py_ssize_t ni, ci, ki, kj, oy, ox
    out = np.empty((n, c * k * k, out_h * out_w),
                   dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, ::1] cols = out
    cdef Py_ssize_t row, col
    for ni in range(n):
        for ci in range(c):
            for ki in range(k):
                for kj in range(k):
                    row = (ci * k + ki) * k + kj
                    for oy in range(out_h):
                        col = oy * out_w
                        for ox in range(out_w):
                            cols[ni, row, col + ox] = padded[
                                ni, ci, ki + oy * stride, kj + ox * stride
                            ]
    return out


cdef _col2im(real[:, :, ::1] cols, int n, int c, int padded_h, int padded_w,
             int k, int stride, int out_h, int out_w):
    cdef Py_ssize_t ni, ci, ki, kj, oy, ox
    out = np.zeros((n, c, padded_h, padded_w),
                   dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, :, ::1] padded = out
    cdef Py_ssize_t row, col
    # (ki, kj)-major accumulation matches pure.col2im bit for bit
    for ki in range(k):
        for kj in range(k):
            for ni in range(n):
                for ci in range(c):
                    row = (ci * k + ki) * k + kj
                    for oy in range(out_h):
                        col = oy * out_w
                        for ox in range(out_w):
                            padded[ni, ci, ki + oy * stride, kj + ox * stride] += cols[
                                ni, row, col + ox
                            ]
    return out
