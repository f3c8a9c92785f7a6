#!/usr/bin/env python3
"""Compare the numba and numpy kernel backends on realistic workloads.

Runs each hot kernel on synthetic volumes at a few sizes and prints the
best-of-N wall time per backend plus the speedup ratio. Compile cost is
excluded by a warmup pass. Useful to sanity-check that the jitted path
actually pays for itself on the machine at hand.

    python3 benchmarks/bench_kernels.py [--sizes 64,96] [--repeats 5]
"""

import argparse
import time

import numpy as np

from glioscribe import kernels


def _best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _workloads(n, rng):
    blob = rng.random((n, n, n)) < 0.3
    labels = rng.integers(0, 5, (n, n, n)).astype(np.int32)
    coords = rng.uniform(-1.0, n, size=(50000, 3))
    spacing = (1.0, 0.9, 1.2)
    return [
        (f"label_components {n}^3 c=26",
         lambda b: kernels.label_components(blob, connectivity=26, backend=b)),
        (f"edt {n}^3 anisotropic",
         lambda b: kernels.edt(blob, spacing=spacing, backend=b)),
        (f"nn_gather {n}^3 x 50k pts",
         lambda b: kernels.nn_gather(labels, coords, backend=b)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="48,64",
                    help="comma list of cube edge lengths (default 48,64)")
    ap.add_argument("--repeats", type=int, default=5,
                    help="timed repetitions per cell, best is kept (default 5)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    backends = ["numpy"]
    try:
        kernels.label_components(np.ones((2, 2, 2), bool), backend="numba")
        backends.insert(0, "numba")
    except RuntimeError:
        print("numba backend unavailable, benchmarking numpy only")

    rng = np.random.default_rng(args.seed)
    rows = []
    for size_text in args.sizes.split(","):
        n = int(size_text)
        for name, run in _workloads(n, rng):
            cell = {}
            for backend in backends:
                run(backend)                    # warmup / compile
                cell[backend] = _best_of(lambda: run(backend), args.repeats)
            rows.append((name, cell))

    width = max(len(name) for name, _ in rows)
    header = f"{'workload':<{width}}  " + "".join(
        f"{b + ' (s)':>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, cell in rows:
        line = f"{name:<{width}}  " + "".join(
            f"{cell[b]:>12.4f}" for b in backends)
        if len(backends) == 2:
            line += f"{cell['numpy'] / cell['numba']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
