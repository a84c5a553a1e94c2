#!/usr/bin/env python3
"""Benchmark the conv hot path under both kernel backends.

Times forward+backward of conv2d and conv_transpose2d at the layer shapes
the GAN and classifier actually use, once with the compiled kernels and once
with the numpy fallback, and checks both agree.

Run from the repository root:

    python3 benchmarks/bench_conv.py [--repeats 5]
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from forgegate._kernels import _conv_cy  # noqa: E402  (fails fast if not built)
from forgegate._kernels import pure  # noqa: E402

CASES = [
    # (label, batch, in_ch, out_ch, size, kernel, stride, padding)
    ("disc 16px first layer", 32, 3, 16, 16, 4, 2, 1),
    ("disc 64px first layer", 32, 3, 64, 64, 4, 2, 1),
    ("disc 64px mid layer", 32, 128, 256, 16, 4, 2, 1),
    ("clf grouped 3x3", 64, 64, 64, 8, 3, 1, 1),
]


def run_conv(backend, x, w, stride, padding, grad):
    n, c, h, width = x.shape
    o, _, k, _ = w.shape
    out_h = (h + 2 * padding - k) // stride + 1
    out_w = (width + 2 * padding - k) // stride + 1
    if padding:
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x
    cols = backend.im2col(xp, k, stride, out_h, out_w)
    out = np.matmul(w.reshape(o, -1)[None], cols).reshape(n, o, out_h, out_w)
    # backward (input gradient) exercises col2im
    gcols = np.matmul(w.reshape(o, -1).T[None], grad.reshape(n, o, -1))
    gx = backend.col2im(gcols, n, c, h + 2 * padding, width + 2 * padding, k, stride, out_h, out_w)
    return out, gx


def time_case(backend, case, repeats):
    label, n, c, o, size, k, stride, padding = case
    rng = np.random.default_rng(0)
    x = rng.normal(size=(n, c, size, size)).astype(np.float32)
    w = rng.normal(size=(o, c, k, k)).astype(np.float32)
    out_h = (size + 2 * padding - k) // stride + 1
    grad = rng.normal(size=(n, o, out_h, out_h)).astype(np.float32)
    run_conv(backend, x, w, stride, padding, grad)  # warm-up
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        out, gx = run_conv(backend, x, w, stride, padding, grad)
        best = min(best, time.perf_counter() - start)
    return best, out, gx


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    print(f"{'case':<24} {'numpy':>10} {'cython':>10} {'speedup':>8}  agree")
    for case in CASES:
        t_py, out_py, gx_py = time_case(pure, case, args.repeats)
        t_cy, out_cy, gx_cy = time_case(_conv_cy, case, args.repeats)
        agree = np.allclose(out_py, out_cy, atol=1e-5) and np.allclose(gx_py, gx_cy, atol=1e-5)
        print(
            f"{case[0]:<24} {t_py * 1e3:>8.2f}ms {t_cy * 1e3:>8.2f}ms "
            f"{t_py / t_cy:>7.2f}x  {'yes' if agree else 'NO'}"
        )


if __name__ == "__main__":
    main()
