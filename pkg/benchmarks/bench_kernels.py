"""Benchmark the two implementations of the clustering hot kernels.

Both kernels — k-th-nearest core distances and the Prim minimum spanning
tree over mutual reachability — ship in a pure-numpy form and, when numba
is installed, a JIT-compiled form. This script times both on the same
random point sets and prints the speedup, so a deployment can decide
whether the numba dependency pays for itself at its corpus sizes.

Usage:
    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --sizes 500 2000 8000 --dim 8
    MOTIFCAT_DISABLE_NUMBA=1 python3 ...   # numpy-only column

The JIT path is warmed up once per shape before timing, so compilation
cost is excluded; the first invocation in a fresh environment still pays
it (numba caches compiled kernels on disk afterwards).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from motifcat import kernels


def _time(fn, *args, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--sizes",
        type=int,
        nargs="+",
        default=[300, 1000, 3000],
        help="point counts to benchmark",
    )
    parser.add_argument("--dim", type=int, default=5, help="point dimension")
    parser.add_argument("--k", type=int, default=10, help="core-distance k")
    parser.add_argument(
        "--repeats", type=int, default=3, help="timed repeats (best is kept)"
    )
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    numba_on = kernels.HAS_NUMBA and kernels.core_distances_numba is not None
    print(
        f"numba available: {kernels.HAS_NUMBA}; "
        f"dispatcher uses numba: {kernels.USE_NUMBA}"
    )
    header = (
        f"{'n':>6} {'kernel':<14} {'numpy (s)':>10} {'numba (s)':>10} "
        f"{'speedup':>8}"
    )
    print(header)
    print("-" * len(header))

    rng = np.random.default_rng(args.seed)
    for n in args.sizes:
        points = rng.normal(size=(n, args.dim))
        k = min(args.k, n)

        if numba_on:  # compile outside the timed region
            kernels.core_distances_numba(points, k)
        t_core_np = _time(
            kernels.core_distances_numpy, points, k, repeats=args.repeats
        )
        t_core_nb = (
            _time(kernels.core_distances_numba, points, k, repeats=args.repeats)
            if numba_on
            else None
        )
        core = kernels.core_distances_numpy(points, k)

        if numba_on:
            kernels.prim_mst_numba(points, core)
        t_mst_np = _time(
            kernels.prim_mst_numpy, points, core, repeats=args.repeats
        )
        t_mst_nb = (
            _time(kernels.prim_mst_numba, points, core, repeats=args.repeats)
            if numba_on
            else None
        )

        for name, t_np, t_nb in [
            ("core-distance", t_core_np, t_core_nb),
            ("prim-mst", t_mst_np, t_mst_nb),
        ]:
            if t_nb is None:
                print(f"{n:>6} {name:<14} {t_np:>10.4f} {'-':>10} {'-':>8}")
            else:
                print(
                    f"{n:>6} {name:<14} {t_np:>10.4f} {t_nb:>10.4f} "
                    f"{t_np / t_nb:>7.1f}x"
                )

    # the two paths must agree on the answer, not just the timing
    points = rng.normal(size=(500, args.dim))
    core = kernels.core_distances_numpy(points, min(args.k, 500))
    if numba_on:
        assert np.allclose(
            core, kernels.core_distances_numba(points, min(args.k, 500)),
            atol=1e-12,
        )
        np_mst = kernels.prim_mst_numpy(points, core)
        nb_mst = kernels.prim_mst_numba(points, core)
        assert abs(np_mst[:, 2].sum() - nb_mst[:, 2].sum()) < 1e-9
        print("agreement check: numpy and numba kernels match")


if __name__ == "__main__":
    main()
