"""Graded-lexicographic multi-index enumeration with incremental structure.

Indices are enumerated by ascending total degree, lexicographically within a
degree.  Every non-constant index records its parent (same index with the
last nonzero coordinate decremented) and that coordinate, so monomial columns
can be built by one multiply per index.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np

from .core import ContractViolation


def _compositions(total: int, d: int):
    # all alpha in N^d with sum == total, lexicographic ascending
    if d == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, d - 1):
            yield (first,) + rest


@lru_cache(maxsize=128)
def graded_indices(d: int, max_total_degree: int, cap: int = 10 ** 5):
    """Return (alphas, parents, varidx): the enumerated index set plus the
    incremental-product encoding.  Cached; arrays are read-only."""
    if d < 1 or max_total_degree < 0:
        raise ContractViolation("need d >= 1 and max_total_degree >= 0")
    count = comb(d + max_total_degree, max_total_degree)
    if count > cap:
        raise ContractViolation(
            f"multi-index set size {count} exceeds cap {cap} (d={d}, degree={max_total_degree})")
    alphas = []
    for total in range(max_total_degree + 1):
        alphas.extend(_compositions(total, d))
    lookup = {a: i for i, a in enumerate(alphas)}
    parents = np.zeros(len(alphas), dtype=np.int64)
    varidx = np.zeros(len(alphas), dtype=np.int64)
    for i, alpha in enumerate(alphas):
        if i == 0:
            continue
        j = max(k for k in range(d) if alpha[k] > 0)
        parent = alpha[:j] + (alpha[j] - 1,) + alpha[j + 1:]
        parents[i] = lookup[parent]
        varidx[i] = j
    alphas_arr = np.array(alphas, dtype=np.int64)
    for arr in (alphas_arr, parents, varidx):
        arr.setflags(write=False)
    return alphas_arr, parents, varidx
