"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--size 4096] [--repeat 7]

Prints best-of-repeat wall time per call for each kernel and backend, plus
the max relative disagreement between the two backends.
"""

import argparse
import timeit

import numpy as np

from cdlab import _accel, kernels


def cases(size):
    rng = np.random.default_rng(0)
    c = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    wa = np.sqrt((np.arange(size + 2) + 1.0) / (np.arange(size + 2) + 1.5))
    wb = np.sqrt((np.arange(size + 2) + 1.0) / (np.arange(size + 2) + 3.5))
    return {
        "log_pochhammer_table": lambda: kernels.log_pochhammer_table(2.5, size),
        "jet_coefficients": lambda: kernels.jet_coefficients(1.7, 0.4 + 0.3j, 2, size),
        "shift_recursion": lambda: kernels.shift_recursion(c, wa, wb, 2),
    }


def best_time(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=4096)
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--number", type=int, default=50)
    args = ap.parse_args(argv)
    if not _accel.NUMBA_AVAILABLE:
        print("numba is not installed; only the numpy backend can run")
    prev = _accel.backend()
    print(f"{'kernel':<22} {'numpy [us]':>11} {'numba [us]':>11} {'speedup':>8} {'max rel diff':>13}")
    try:
        for name, fn in cases(args.size).items():
            _accel.set_backend("numpy")
            ref = fn()
            t_np = best_time(fn, args.repeat, args.number)
            if _accel.NUMBA_AVAILABLE:
                _accel.set_backend("numba")
                out = fn()  # compile outside the timed region
                t_nb = best_time(fn, args.repeat, args.number)
                diff = float(np.max(np.abs(out - ref)) / max(np.max(np.abs(ref)), 1e-300))
                print(f"{name:<22} {t_np * 1e6:>11.1f} {t_nb * 1e6:>11.1f} {t_np / t_nb:>8.2f} {diff:>13.2e}")
            else:
                print(f"{name:<22} {t_np * 1e6:>11.1f} {'-':>11} {'-':>8} {'-':>13}")
    finally:
        _accel.set_backend(prev)


if __name__ == "__main__":
    main()
