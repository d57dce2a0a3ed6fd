"""Compiled vs numpy orbit kernel on the order-2 and order-3 inflation index spaces.

Run: python benchmarks/bench_kernels.py [--repeat 3]
"""
import argparse
import time

import numpy as np

from evanscompat import _kernels_py
from evanscompat.inflation import symmetry_maps

try:
    from evanscompat import _kernels
except ImportError:
    _kernels = None


def radices(n, cards=(3, 2, 2)):
    na, nb, nc = cards
    return np.array([nb] * n + [na] * n + [nb] * (n * n) + [nc] * n, np.int64)


def bench(fn, args, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, np.asarray(out)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--orders", default="2,3")
    args = ap.parse_args()
    print(f"{'order':>5} {'columns':>9} {'numpy [s]':>10} {'cython [s]':>11} {'speedup':>8}")
    for n in (int(k) for k in args.orders.split(",")):
        r = radices(n)
        perms, adm = symmetry_maps(n)
        t_py, rep_py = bench(_kernels_py.orbit_representatives, (r, perms, adm), args.repeat)
        if _kernels is None:
            print(f"{n:>5} {rep_py.size:>9} {t_py:>10.3f} {'n/a':>11} {'n/a':>8}")
            continue
        t_cy, rep_cy = bench(_kernels.orbit_representatives, (r, perms, adm), args.repeat)
        if not np.array_equal(rep_py, rep_cy):
            raise SystemExit(f"order {n}: backends disagree")
        print(f"{n:>5} {rep_py.size:>9} {t_py:>10.3f} {t_cy:>11.3f} {t_py / t_cy:>7.1f}x")


if __name__ == "__main__":
    main()
