"""Compiled vs pure-numpy kernel timings.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 20]

Prints one row per (kernel, N, dim) with the best-of-``repeat`` time of each
backend and the max absolute difference between their outputs.
"""

import argparse
import timeit

import numpy as np

from ccslab import _pykernels
from ccslab._backend import available_backends

SIZES = [(16, 64), (64, 64), (256, 16), (512, 4)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy backend is available")
        return
    ck = backends["cython"]
    rng = np.random.default_rng(0)
    print(f"{'kernel':18s} {'N':>5s} {'dim':>4s} {'cython ms':>10s} {'numpy ms':>10s} {'speedup':>8s} {'max diff':>10s}")
    for n, d in SIZES:
        x = rng.normal(size=(n, d))
        z = rng.normal(size=(n, d))
        h = 1.5
        cases = {
            "pairwise_sq_dists": (lambda m: m.pairwise_sq_dists(x, z)),
            "svgd_phi": (lambda m: m.svgd_phi(x, z, h)),
            "mmd2_unbiased": (lambda m: m.mmd2_unbiased(x, z, h)),
        }
        for name, fn in cases.items():
            tc = min(timeit.repeat(lambda: fn(ck), number=1, repeat=args.repeat))
            tp = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat))
            diff = float(np.max(np.abs(np.asarray(fn(ck)) - np.asarray(fn(_pykernels)))))
            print(f"{name:18s} {n:5d} {d:4d} {tc * 1e3:10.3f} {tp * 1e3:10.3f} {tp / tc:8.2f} {diff:10.2e}")


if __name__ == "__main__":
    main()
