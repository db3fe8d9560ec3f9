"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat 5] [--sizes 65 129 257]

Reports per-call kernel timings and the wall time of a full nonlinear slab
march on each backend, and checks that the two backends agree.
"""
import argparse
import timeit

import numpy as np

from umeit import _backend, _kernels_py
from umeit.bench import slab_scenario
from umeit.hypersolve import march_nonlinear


def kernel_table(n, repeat):
    try:
        from umeit import _kernels_ext
    except ImportError:
        return []
    rng = np.random.default_rng(0)
    lo, up = rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)
    d = 3 + rng.uniform(0, 1, n)
    b, guess = rng.standard_normal(n), rng.standard_normal(n)
    calls = {
        "tridiag_solve": (lo, d, up, b),
        "cyclic_tridiag_solve": (lo, d, up, b),
        "leapfrog_solve": (lo, d - 3, b, guess, 50.0, 0.1, False),
        "lateral_d2": (b, 0.1, False),
    }
    rows = []
    for name, args in calls.items():
        times = {}
        for label, mod in (("python", _kernels_py), ("cython", _kernels_ext)):
            fn = getattr(mod, name)
            number = 200
            times[label] = min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number
        rows.append((name, n, times["python"], times["cython"]))
    return rows


def march_table(n, repeat):
    sc = slab_scenario(n=n)
    m = sc.measure()
    before = _backend.BACKEND
    out, times = {}, {}
    try:
        for label in ("python", "cython"):
            try:
                _backend.use(label)
            except ImportError:
                continue
            times[label] = min(timeit.repeat(lambda: march_nonlinear(sc.domain, m.H[0], m.cauchy[0], sc.cfg),
                                             number=1, repeat=repeat))
            out[label] = march_nonlinear(sc.domain, m.H[0], m.cauchy[0], sc.cfg)
    finally:
        _backend.use(before)
    diff = float("nan")
    if len(out) == 2:
        mask = out["python"].valid_mask
        diff = float(np.max(np.abs(out["python"].sigma.values[mask] - out["cython"].sigma.values[mask])))
    return n, times.get("python", float("nan")), times.get("cython", float("nan")), diff


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", type=int, nargs="+", default=[65, 129, 257])
    args = ap.parse_args(argv)

    print(f"{'kernel':<22}{'n':>6}{'python [us]':>14}{'cython [us]':>14}{'speedup':>10}")
    for n in args.sizes:
        for name, nn, tp, tc in kernel_table(n, args.repeat):
            print(f"{name:<22}{nn:>6}{tp * 1e6:>14.2f}{tc * 1e6:>14.2f}{tp / tc:>10.1f}")
    print()
    print(f"{'march n':<10}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}{'max |dsigma|':>15}")
    for n in args.sizes:
        n, tp, tc, diff = march_table(n, max(1, args.repeat // 2))
        print(f"{n:<10}{tp:>12.3f}{tc:>12.3f}{tp / tc:>10.1f}{diff:>15.2e}")


if __name__ == "__main__":
    main()
