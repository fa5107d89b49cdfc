"""Compare the compiled and numpy kernel backends.

Times each hot kernel on identical inputs and then a full Monte Carlo
propagation run end to end under each backend (in a subprocess, since the
backend is fixed at import).

Usage::

    python benchmarks/bench_kernels.py [--n 1000000] [--repeat 5]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from uqdecouple import kernels

END_TO_END = """
import time
from uqdecouple.builtin import make_builtin
from uqdecouple.propagation import CompositeMap, mc_propagate
cmap = CompositeMap(*make_builtin("heteroscedastic"))
mc_propagate(cmap, 10_000, seed=0)
t0 = time.perf_counter()
mc_propagate(cmap, {n}, seed=1, workers=1)
print(time.perf_counter() - t0)
"""


def kernel_cases(n):
    rng = np.random.default_rng(0)
    p = rng.uniform(size=n)
    x = rng.standard_normal(n)
    r = rng.uniform(-0.8, 0.8, n // 10)
    mats = np.empty((n // 10, 2, 2))
    mats[:, 0, 0] = mats[:, 1, 1] = 1.0
    mats[:, 0, 1] = mats[:, 1, 0] = r
    u = rng.standard_normal((n // 10, 2))
    return {
        "ndtr": lambda k: k.ndtr(x),
        "ndtri": lambda k: k.ndtri(p),
        "counter_normals": lambda k: k.counter_normals(7, 0, 0, n // 2, 2),
        "batch_chol_matvec": lambda k: k.batch_chol_matvec(mats, u),
        "batch_chol_solve": lambda k: k.batch_chol_solve(mats, u),
    }


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def end_to_end(n, pure):
    env = dict(os.environ, UQDECOUPLE_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", END_TO_END.format(n=n)], env=env,
                         capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not kernels.HAVE_CYTHON:
        sys.exit("compiled extension not built; reinstall with Cython available")
    py, cy = kernels.get_backend("python"), kernels.get_backend("cython")

    print(f"{'kernel':<22}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}")
    for name, fn in kernel_cases(args.n).items():
        tp = best_of(lambda: fn(py), args.repeat)
        tc = best_of(lambda: fn(cy), args.repeat)
        print(f"{name:<22}{tp * 1e3:>14.2f}{tc * 1e3:>14.2f}{tp / tc:>9.1f}x")
    tp, tc = end_to_end(args.n, True), end_to_end(args.n, False)
    print(f"{'mc_propagate (e2e)':<22}{tp * 1e3:>14.2f}{tc * 1e3:>14.2f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
