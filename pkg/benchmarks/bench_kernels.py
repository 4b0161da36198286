"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from czflow import _kernels_py as py

try:
    from czflow import _kernels as cy
except ImportError:  # pragma: no cover
    cy = None


def cases(rng):
    pts = rng.normal(size=(20_000, 3)) * 3
    ctr = rng.normal(size=(200, 3)) * 3
    owner, _ = py.koranyi_argmin(pts, ctr)
    cand = rng.normal(size=(3_000, 3)) * 2
    bx = np.sort(rng.uniform(0, 100, 2_000))
    by = rng.normal(size=2_000)
    lo = rng.uniform(0, 100, 50_000)
    hi = lo + rng.uniform(0, 10, 50_000)
    return {
        "koranyi_argmin 20000x200": ("koranyi_argmin", (pts, ctr)),
        "greedy_koranyi_net 3000": ("greedy_koranyi_net", (cand, np.zeros((1, 3)), 0.5)),
        "pl_interval_max 2000/50000": ("pl_interval_max", (bx, by, lo, hi)),
        "koranyi_cell_radii 20000x200": ("koranyi_cell_radii", (pts, owner, ctr)),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}")
    for label, (name, call_args) in cases(rng).items():
        t_py = min(timeit.repeat(lambda: getattr(py, name)(*call_args), number=1, repeat=args.repeat))
        if cy is None:
            print(f"{label:32s} {1e3 * t_py:12.2f} {'n/a':>12s}")
            continue
        t_cy = min(timeit.repeat(lambda: getattr(cy, name)(*call_args), number=1, repeat=args.repeat))
        print(f"{label:32s} {1e3 * t_py:12.2f} {1e3 * t_cy:12.2f} {t_py / t_cy:8.1f}x")


if __name__ == "__main__":
    main()
