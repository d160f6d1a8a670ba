"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py --sizes 10 20 40 --repeat 5

Each kernel is timed on both backends with identical inputs; the table
reports the best time over ``--repeat`` runs and the speed-up of the
compiled version.  Results are checked for agreement before timing.
"""

import argparse
import sys
import timeit

import numpy as np

from lowrank.kernels import JACOBI_TOL, TIE_RTOL, _pykernels

try:
    from lowrank.kernels import _ckernels
except ImportError:
    _ckernels = None


def cases(n, rng):
    a = rng.standard_normal((2 * n, n))
    c = a.T @ a
    b = np.tril(rng.uniform(-1, 1, (n, n)) / n, -1) + np.eye(n)
    rhs = rng.standard_normal((n, 4))
    r = rng.standard_normal((4 * n, 4 * n))
    col, row = r[:, 0].copy(), r[0, :].copy()
    return {
        "jacobi_eigh": (lambda k: k.jacobi_eigh(c, JACOBI_TOL), lambda out: np.sort(out[0])),
        "jacobi_svd": (lambda k: k.jacobi_svd(a, JACOBI_TOL), lambda out: np.sort(out[1])),
        "forward_sub_unit": (lambda k: k.forward_sub_unit(b, rhs), lambda out: out),
        "pivot_scan": (lambda k: k.pivot_scan(r, TIE_RTOL), lambda out: np.array(out)),
        "rank1_update": (lambda k: k.rank1_update(r.copy(), col, row, 1.5),
                         lambda out: np.zeros(1)),
    }


def best_time(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05 and number < 10_000:
        number *= 4
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[10, 20, 40])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<18}{'n':>5}{'python [s]':>14}{'cython [s]':>14}{'speed-up':>10}")
    for n in args.sizes:
        for name, (call, key) in cases(n, rng).items():
            ref = key(call(_pykernels))
            got = key(call(_ckernels))
            if not np.allclose(ref, got, rtol=1e-10, atol=1e-12):
                print(f"{name}: backends disagree at n={n}", file=sys.stderr)
                return 2
            t_py = best_time(lambda: call(_pykernels), args.repeat)
            t_c = best_time(lambda: call(_ckernels), args.repeat)
            print(f"{name:<18}{n:>5}{t_py:>14.3e}{t_c:>14.3e}{t_py / t_c:>10.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
