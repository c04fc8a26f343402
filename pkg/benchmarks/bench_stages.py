"""Micro-benchmarks for the Monte Carlo and FFT stages.

    python benchmarks/bench_stages.py [--repeat 3] [--threads N]

Prints the best wall time per stage.
"""

import argparse
import os
import timeit

from assoc_clt.cltlab import EXACT, normalized_sums
from assoc_clt.covariance import PowerCovariance, k_rect, set_variance, variance_exact
from assoc_clt.blocking import partition
from assoc_clt.fields import make_gaussian, make_iid, make_moving_average
from assoc_clt.lattice import Box


def cases(threads):
    harmonic = PowerCovariance(1, 1.0)
    gauss = make_gaussian(harmonic, (2**16,))
    ma = make_moving_average(1, {(j,): 1.0 / (1 + j) for j in range(64)})
    iid = make_iid(1, 1.0, "normal")
    plan = partition((2**20,), (2**10,), (2**6,))
    return {
        "gaussian synthesis (torus 2^16, 2 fields)": lambda: gauss._realize_group(Box.of_size((4096,)), 1, 0, 0),
        "circulant setup (torus 2^18)": lambda: make_gaussian(harmonic, (2**18,)),
        "MA(64) convolution, n=2^20": lambda: ma.sample(Box.of_size((2**20,)), 1),
        "iid sums, n=4096, N=10^4": lambda: normalized_sums(iid, (4096,), EXACT, 10**4, 1, threads),
        "gaussian sums, n=4096, N=500": lambda: normalized_sums(gauss, (4096,), EXACT, 500, 1, threads),
        "K_X(2^24) power model": lambda: k_rect(harmonic, (2**24,)),
        "var S(U_n), n=2^20": lambda: variance_exact(harmonic, (2**20,)),
        "corridor lag counts (FFT), n=2^20": lambda: set_variance(harmonic, plan.corridor_indicator),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args()
    for name, fn in cases(args.threads).items():
        best = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        print(f"{name:<40s} {best * 1e3:10.1f} ms")


if __name__ == "__main__":
    main()
