"""Time the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--sizes 129 257 513] [--repeat 5]

Each kernel is run once per backend before timing so numba compilation is not
counted.  Results from the two backends are compared and the largest
difference is printed next to the timings.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from keldysh_lab import _kernels
from keldysh_lab.geometry import build_domain
from keldysh_lab.grid import make_grid
from keldysh_lab.operators import loword
from keldysh_lab.solver import assemble, open_dirichlet
from keldysh_lab.typechange import make_power


def _time(fn, repeat: int) -> float:
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_diff(n: int, repeat: int) -> dict:
    rng = np.random.default_rng(0)
    f = rng.standard_normal((n, n))
    valid = rng.random((n, n)) > 0.05
    h = 1.0 / (n - 1)
    out = {}
    res = {}
    for backend in ("numpy", "numba"):
        for order in (1, 2):
            def call(b=backend, o=order):
                return _kernels.diff_axis(f, valid, h, 0, o, backend=b)
            out[(backend, order)] = _time(call, repeat)
            res[(backend, order)] = call()
    diff = max(float(np.max(np.abs(np.where(res[("numpy", o)][1], res[("numpy", o)][0] -
                                            res[("numba", o)][0], 0.0))))
               for o in (1, 2))
    return {"numpy": out[("numpy", 1)] + out[("numpy", 2)],
            "numba": out[("numba", 1)] + out[("numba", 2)], "max_diff": diff}


def bench_matvec(n: int, repeat: int) -> dict:
    dom = build_domain(make_power(1), 0.0, 2.0, 1.0)
    grid = make_grid(dom, n)
    sysm = assemble(loword(make_power(1)), grid, open_dirichlet(dom), 0.0)
    A = _kernels.CSR(sysm.A)
    x = np.random.default_rng(1).standard_normal(A.shape[1])
    t = {b: _time(lambda b=b: A.matvec(x, backend=b), repeat) for b in ("numpy", "numba")}
    diff = float(np.max(np.abs(A.matvec(x, "numpy") - A.matvec(x, "numba"))))
    return {**t, "max_diff": diff, "nnz": int(A.data.size)}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[129, 257, 513])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':<10}{'n':>6}{'numpy [ms]':>13}{'numba [ms]':>13}{'speed-up':>10}"
          f"{'max |diff|':>13}")
    for n in args.sizes:
        for name, fn in (("diff", bench_diff), ("matvec", bench_matvec)):
            r = fn(n, args.repeat)
            print(f"{name:<10}{n:>6}{1e3 * r['numpy']:>13.3f}{1e3 * r['numba']:>13.3f}"
                  f"{r['numpy'] / r['numba']:>10.2f}{r['max_diff']:>13.2e}")


if __name__ == "__main__":
    main()
