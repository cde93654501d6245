#!/usr/bin/env python3
"""Timing comparison of the compiled kernels against the numpy fallback.

Runs each hot kernel on training-shaped inputs and prints per-call times.
Invoke directly:  python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from fairmtl import _kernels_np as knp

try:
    from fairmtl import _ckernels as kc
except ImportError:
    kc = None


def timeit(fn, repeats):
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    x = np.ascontiguousarray(rng.standard_normal((512, 64)))
    g = np.ascontiguousarray(rng.standard_normal((512, 64)))
    acc = np.zeros_like(x)
    p = np.ascontiguousarray(rng.random((512, 1)))
    y = np.ascontiguousarray(rng.integers(0, 2, (512, 1)).astype(np.float64))
    pacc = np.zeros_like(p)
    u = np.ascontiguousarray(rng.standard_normal((256, 1)))
    v = np.ascontiguousarray(rng.standard_normal((256, 1)))
    kmat = knp.gauss_fwd(u, v, 0.5)
    kg = np.ascontiguousarray(rng.standard_normal(kmat.shape))
    du, dv = np.zeros_like(u), np.zeros_like(v)
    w = np.ascontiguousarray(rng.standard_normal((64, 64)))
    wg = np.ascontiguousarray(rng.standard_normal((64, 64)))
    wacc = np.abs(np.ascontiguousarray(rng.standard_normal((64, 64))))

    def make(mod):
        return [
            ("relu_fwd 512x64", lambda: mod.relu_fwd(x)),
            ("relu_bwd 512x64", lambda: mod.relu_bwd(x, g, acc)),
            ("sigmoid_fwd 512x64", lambda: mod.sigmoid_fwd(x)),
            ("xent_fwd 512", lambda: mod.xent_fwd(p, y)),
            ("xent_bwd 512", lambda: mod.xent_bwd(p, y, 1.0, pacc)),
            ("gauss_fwd 256x256", lambda: mod.gauss_fwd(u, v, 0.5)),
            ("gauss_bwd 256x256",
             lambda: mod.gauss_bwd(u, v, kmat, kg, 0.5, du, dv)),
            ("adagrad 64x64", lambda: mod.adagrad_step(w, wg, wacc, 0.05, 1e-8)),
        ]
    return make


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=200)
    args = ap.parse_args()

    make = cases(np.random.default_rng(0))
    numpy_rows = [(name, timeit(fn, args.repeats)) for name, fn in make(knp)]
    if kc is None:
        print("compiled extension not available; numpy-only timings")
        for name, t in numpy_rows:
            print(f"{name:22s} numpy {t * 1e6:9.1f} us")
        return

    compiled_rows = [(name, timeit(fn, args.repeats)) for name, fn in make(kc)]
    print(f"{'kernel':22s} {'numpy us':>10s} {'compiled us':>12s} {'speedup':>8s}")
    for (name, tn), (_, tc) in zip(numpy_rows, compiled_rows):
        print(f"{name:22s} {tn * 1e6:10.1f} {tc * 1e6:12.1f} {tn / tc:8.2f}x")


if __name__ == "__main__":
    main()
