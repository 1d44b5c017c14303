#!/usr/bin/env python3
"""Benchmark the compiled extension against the pure-numpy fallback on the
five hot kernels, and sanity-check that both backends produce the same
numbers while at it.

Run from the repo root:

    python3 bench/bench_backends.py

The package itself never imports the kernel modules directly — everything
goes through ``tgvdeconv.backend``, which prefers the compiled extension and
falls back to numpy (or honors ``TGVDECONV_BACKEND=numpy``).
"""

import time

import numpy as np

from tgvdeconv import _kernels_np
from tgvdeconv.backend import BACKEND_NAME
from tgvdeconv.core import pad_index_maps

try:
    from tgvdeconv import _kernels_c
except ImportError:
    _kernels_c = None


def best_ms(fn, reps=5, inner=20):
    """Best mean-of-inner wall time over reps, in milliseconds."""
    fn()  # warm up caches and any lazy allocation
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        best = min(best, (time.perf_counter() - t0) / inner)
    return 1e3 * best


def cases():
    rng = np.random.default_rng(0)
    for size, ksize in ((64, 5), (128, 5), (256, 7)):
        u = rng.random((size, size))
        k = rng.random((ksize, ksize))
        k /= k.sum()
        g = rng.standard_normal((size, size))
        pi_r, pi_c = pad_index_maps((size, size), ksize, "circular")
        tag = f"{size}x{size} K={ksize}"
        yield (f"conv_same        {tag}",
               lambda m, u=u, k=k, r=pi_r, c=pi_c: m.conv_same(u, k, r, c))
        yield (f"conv_same_grad_u {tag}",
               lambda m, g=g, k=k, r=pi_r, c=pi_c, n=size:
               m.conv_same_grad_u(g, k, r, c, n, n))
        yield (f"conv_same_grad_k {tag}",
               lambda m, g=g, u=u, K=ksize, r=pi_r, c=pi_c:
               m.conv_same_grad_k(g, u, K, r, c))
    for channels, size in ((4, 64), (8, 128)):
        x = rng.standard_normal((channels, size, size))
        cols = rng.standard_normal((channels * 9, size * size))
        tag = f"C={channels} {size}x{size}"
        yield (f"im2col3          {tag}", lambda m, x=x: m.im2col3(x))
        yield (f"col2im3          {tag}",
               lambda m, cols=cols, C=channels, n=size: m.col2im3(cols, C, n, n))


def main():
    print(f"package backend selection: {BACKEND_NAME}")
    if _kernels_c is None:
        print("compiled extension not built; timing the numpy fallback only")
    header = (f"{'kernel':32s} {'numpy':>11s} {'compiled':>11s}"
              f" {'speedup':>8s} {'max|diff|':>10s}")
    print(header)
    print("-" * len(header))
    for label, call in cases():
        t_np = best_ms(lambda: call(_kernels_np))
        if _kernels_c is None:
            print(f"{label:32s} {t_np:9.3f}ms {'-':>11s} {'-':>8s} {'-':>10s}")
            continue
        t_c = best_ms(lambda: call(_kernels_c))
        diff = float(np.max(np.abs(call(_kernels_np) - call(_kernels_c))))
        print(f"{label:32s} {t_np:9.3f}ms {t_c:9.3f}ms"
              f" {t_np / t_c:7.1f}x {diff:10.2e}")


if __name__ == "__main__":
    main()
