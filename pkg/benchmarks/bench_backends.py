#!/usr/bin/env python
"""Benchmark the compiled kernel core against the pure-numpy fallback.

Times the composed-multinomial Gram build, the rectangular kernel matrix, and
the graded monomial design matrix on a few sizes, and checks the two
implementations agree to near machine precision.  Run after an editable
install:

    python benchmarks/bench_backends.py
"""

from __future__ import annotations

import time

import numpy as np

from tds import _kernel_py
from tds._multiindex import graded_indices

try:
    from tds import _kernel_c
except ImportError:
    _kernel_c = None


def _time(fn, repeats: int = 5) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    def rng_x(n, d, _cache={}):
        key = (n, d)
        if key not in _cache:
            _cache[key] = np.random.default_rng(key).standard_normal((n, d))
        return _cache[key]

    cases = [
        ("gram 400x400 d=3 l=(3)", lambda m: m.cmk_gram(rng_x(400, 3), (3,), True)),
        ("gram 800x800 d=5 l=(4)", lambda m: m.cmk_gram(rng_x(800, 5), (4,), True)),
        ("gram 400x400 d=3 l=(2,2)", lambda m: m.cmk_gram(rng_x(400, 3), (2, 2), True)),
        ("matrix 2000x400 d=3 l=(3)",
         lambda m: m.cmk_matrix(rng_x(2000, 3), rng_x(400, 3), (3,), True)),
        ("monomials 20000 pts d=3 deg=6",
         lambda m: m.monomial_matrix(rng_x(20000, 3), *graded_indices(3, 6)[1:])),
    ]

    if _kernel_c is None:
        print("compiled backend not built (TDS_NO_EXT or missing toolchain); "
              "timing the python backend only\n")

    header = f"{'case':34s} {'python':>10s}"
    if _kernel_c is not None:
        header += f" {'compiled':>10s} {'speedup':>8s} {'max|diff|':>10s}"
    print(header)
    print("-" * len(header))
    for name, fn in cases:
        t_py = _time(lambda: fn(_kernel_py))
        line = f"{name:34s} {t_py * 1e3:9.2f}ms"
        if _kernel_c is not None:
            t_c = _time(lambda: fn(_kernel_c))
            a, b = fn(_kernel_py), fn(_kernel_c)
            scale = max(float(np.max(np.abs(a))), 1.0)
            line += (f" {t_c * 1e3:9.2f}ms {t_py / t_c:7.2f}x"
                     f" {float(np.max(np.abs(a - b))) / scale:10.2e}")
        print(line)


if __name__ == "__main__":
    main()
