#!/usr/bin/env python3
"""Benchmark the compiled kernel backend against the NumPy fallback.

Times the two hand-written kernels (greedy pivoted-QR column selection and
elementwise soft thresholding) on production-like shapes, plus one
end-to-end robust decomposition per backend.  The LAPACK SVD inside the
decomposition is shared by both backends, so the end-to-end row shows how
much of the pipeline the kernels actually account for.

Usage: python benchmarks/bench_kernels.py [--repeats N] [--quick]
"""

import argparse
import time

import numpy as np

from shimsense import _kernels
from shimsense import PcpConfig, pcp


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_pivot(backend, shape, pivots, repeats):
    rng = np.random.default_rng(0)
    a = rng.standard_normal(shape)
    module = _kernels.backend_module(backend)
    return timeit(lambda: module.pivot_columns(a, pivots, 1e-12), repeats)


def bench_soft(backend, size, repeats):
    rng = np.random.default_rng(1)
    x = rng.standard_normal(size)
    out = np.empty_like(x)
    module = _kernels.backend_module(backend)
    return timeit(lambda: module.soft_threshold(x, 0.1, out), repeats)


def bench_pcp(backend, repeats):
    rng = np.random.default_rng(2)
    low = rng.standard_normal((600, 40)) @ np.diag(0.3 * 0.7 ** np.arange(40))
    sparse = np.zeros(600 * 40)
    sparse[rng.choice(600 * 40, 1200, replace=False)] = 0.05
    x = low + sparse.reshape(600, 40)
    previous = _kernels.active_backend()
    _kernels.set_backend(backend)
    try:
        return timeit(lambda: pcp(x, PcpConfig(tol=1e-5)), repeats)
    finally:
        _kernels.set_backend(previous)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--quick", action="store_true",
                        help="smaller shapes, fewer repeats")
    args = parser.parse_args()
    repeats = 2 if args.quick else args.repeats

    backends = _kernels.available_backends()
    if "cython" not in backends:
        print("note: compiled backend unavailable; timing NumPy only")

    # transposed-basis shape from sensor selection at production scale
    pivot_cases = [((26, 10076), 26), ((8, 600), 8), ((64, 2048), 64)]
    soft_sizes = [10076 * 53, 600 * 40]
    if args.quick:
        pivot_cases = pivot_cases[1:2]
        soft_sizes = soft_sizes[1:]

    rows = []
    for shape, pivots in pivot_cases:
        timings = {b: bench_pivot(b, shape, pivots, repeats)
                   for b in backends}
        rows.append((f"pivoted QR {shape[0]}x{shape[1]} ({pivots} pivots)",
                     timings))
    for size in soft_sizes:
        timings = {b: bench_soft(b, size, repeats) for b in backends}
        rows.append((f"soft threshold ({size:,} entries)", timings))
    rows.append(("robust decomposition 600x40 (end to end)",
                 {b: bench_pcp(b, max(repeats // 2, 1)) for b in backends}))

    width = max(len(r[0]) for r in rows)
    header = f"{'kernel'.ljust(width)}  " + "  ".join(
        f"{b:>10}" for b in backends)
    if len(backends) == 2:
        header += f"  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for label, timings in rows:
        cells = "  ".join(f"{timings[b] * 1e3:9.2f}ms" for b in backends)
        line = f"{label.ljust(width)}  {cells}"
        if len(backends) == 2:
            line += f"  {timings['numpy'] / timings['cython']:7.2f}x"
        print(line)


if __name__ == "__main__":
    main()
