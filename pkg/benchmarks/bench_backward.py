"""Numba vs numpy timing of one O(N^2) backward update.

    python3 benchmarks/bench_backward.py [--sizes 1024 2048 4096] [--repeats 5]

Prints one line per (kernel, backend, N): median seconds, the speedup of
numba over numpy, and the largest absolute difference between the two
backends' outputs.
"""
import argparse
import statistics
import time

import numpy as np

from fkbackward import kernels
from fkbackward._accel import HAVE_NUMBA


def _median_time(fn, repeats):
    fn()  # warm-up / compile
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def gaussian_case(N, rng):
    src = rng.standard_normal((N, 1))
    tgt = src + rng.standard_normal((N, 1))
    log_g = -0.5 * (src[:, 0] - 0.3) ** 2 / 5.0
    return (src, log_g, rng.standard_normal(N), tgt, rng.standard_normal(N), 1.0, 0.5)


def finite_case(N, rng, S=4):
    src = rng.integers(0, S, N)
    tgt = rng.integers(0, S, N)
    trans = rng.random((S, S)) + 0.1
    trans /= trans.sum(axis=1, keepdims=True)
    return (src, np.log(rng.random(S) + 0.1), rng.standard_normal(N), tgt, rng.standard_normal(N), np.log(trans))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[1024, 2048, 4096])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy backend is timed")
    rng = np.random.default_rng(args.seed)
    cases = {"gaussian": (gaussian_case, kernels.gaussian_backward),
             "finite_dense": (finite_case, kernels.finite_backward_dense)}
    print(f"{'kernel':<13}{'N':>7}{'numpy_s':>12}{'numba_s':>12}{'speedup':>9}{'max_abs_diff':>14}")
    for name, (make, fn) in cases.items():
        for N in args.sizes:
            case = make(N, rng)
            t_np = _median_time(lambda: fn(*case, backend="numpy"), args.repeats)
            ref = fn(*case, backend="numpy")[0]
            if HAVE_NUMBA:
                t_nb = _median_time(lambda: fn(*case, backend="numba"), args.repeats)
                diff = float(np.max(np.abs(fn(*case, backend="numba")[0] - ref)))
                print(f"{name:<13}{N:>7}{t_np:>12.4g}{t_nb:>12.4g}{t_np / t_nb:>9.2f}{diff:>14.3g}")
            else:
                print(f"{name:<13}{N:>7}{t_np:>12.4g}{'-':>12}{'-':>9}{'-':>14}")


if __name__ == "__main__":
    main()
