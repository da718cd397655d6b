#!/usr/bin/env python3
"""Timing comparison of the numba and numpy convolution kernels.

Runs forward, input-gradient, and weight-gradient passes on network-realistic
shapes and reports per-call wall time for both backends plus the speedup.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from posepyr.kernels import numpy_backend as knp

try:
    from posepyr.kernels import numba_backend as knb
except ImportError:
    knb = None

# (label, n, ci, co, h, w, k, stride, pad)
SHAPES = [
    ("stem 3x3/s2", 1, 3, 16, 128, 128, 3, 2, 1),
    ("branch0 3x3", 1, 32, 32, 64, 64, 3, 1, 1),
    ("branch1 3x3", 1, 64, 64, 32, 32, 3, 1, 1),
    ("fuse 1x1", 1, 64, 32, 32, 32, 1, 1, 0),
    ("head 1x1", 1, 32, 34, 64, 64, 1, 1, 0),
]


def _time(fn, repeats):
    fn()  # warm-up (JIT compilation, caches)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench(repeats):
    rng = np.random.default_rng(0)
    rows = []
    for label, n, ci, co, h, w, k, s, p in SHAPES:
        x = rng.normal(size=(n, ci, h, w))
        wt = rng.normal(size=(co, ci, k, k))
        y = knp.conv2d_forward(x, wt, s, p)
        g = rng.normal(size=y.shape)
        for op, np_fn, nb_fn in [
            ("fwd",
             lambda: knp.conv2d_forward(x, wt, s, p),
             (lambda: knb.conv2d_forward(x, wt, s, p)) if knb else None),
            ("dgrad",
             lambda: knp.conv2d_input_grad(g, wt, s, p, h, w),
             (lambda: knb.conv2d_input_grad(g, wt, s, p, h, w)) if knb else None),
            ("wgrad",
             lambda: knp.conv2d_weight_grad(x, g, s, p, k, k),
             (lambda: knb.conv2d_weight_grad(x, g, s, p, k, k)) if knb else None),
        ]:
            t_np = _time(np_fn, repeats)
            t_nb = _time(nb_fn, repeats) if nb_fn else float("nan")
            rows.append((label, op, t_np, t_nb))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    rows = bench(args.repeats)
    print(f"{'shape':<14}{'op':<7}{'numpy (ms)':>12}{'numba (ms)':>12}{'speedup':>9}")
    for label, op, t_np, t_nb in rows:
        speed = t_np / t_nb if t_nb == t_nb and t_nb > 0 else float("nan")
        print(f"{label:<14}{op:<7}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{speed:>8.1f}x")


if __name__ == "__main__":
    main()
