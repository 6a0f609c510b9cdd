"""Wall-clock comparison of the numba and numpy history kernels.

Run ``python3 benchmarks/bench_kernels.py``; each case is timed after one
warm-up call so numba compilation is excluded.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from fluidq.distributions import make_distribution
from fluidq.fluid import FluidConfig, solve
from fluidq.multiclass import MulticlassConfig, solve_multiclass
from fluidq.renewal import renewal_density


def _cases(scale):
    exp = make_distribution("exponential", {"rate": 1.0}, "service")
    weib = make_distribution("weibull", {"shape": 0.5}, "service")
    logn = make_distribution("lognormal", {"mu": 0.0, "sigma": 0.5}, "patience")
    pat = make_distribution("exponential", {"rate": 1.0}, "patience")
    h = 50.0 * scale
    return {
        "fluid exp/exp": lambda b: solve(FluidConfig(2.0, exp, pat, dt=0.01, horizon=h), backend=b).X,
        "fluid weibull/lognormal": lambda b: solve(
            FluidConfig(1.5, weib, logn, dt=0.01, horizon=h), backend=b
        ).X,
        "multiclass J=3": lambda b: solve_multiclass(
            MulticlassConfig((0.5, 0.8, 0.5), (1.0, 1.0, 1.0), exp, dt=0.01, horizon=h), backend=b
        ).X,
        "renewal weibull": lambda b: renewal_density(weib, 0.005, h, backend=b).U,
    }


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scale", type=float, default=1.0, help="horizon multiplier")
    p.add_argument("--repeats", type=int, default=3)
    args = p.parse_args(argv)
    print(f"{'case':<26}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}{'max diff':>12}")
    for name, fn in _cases(args.scale).items():
        fn("numba")
        tn, xn = best_of(lambda: fn("numba"), args.repeats)
        tp, xp = best_of(lambda: fn("numpy"), args.repeats)
        diff = float(np.max(np.abs(xn - xp)))
        print(f"{name:<26}{tn:>12.4f}{tp:>12.4f}{tp / tn:>10.1f}{diff:>12.1e}")


if __name__ == "__main__":
    main()
