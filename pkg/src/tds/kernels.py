"""Multinomial and composed-multinomial kernels.

The composed multinomial kernel of a degree vector (l_1, ..., l_t) is defined
by the recursion on inner products

    v_0 = x . y,        v_i = sum_{j=0}^{l_i} v_{i-1}^j,

so every kernel value is a univariate polynomial of the single inner product
x . y — evaluation costs O(d + sum l_i).  The corresponding feature map sends
x to all coordinate-tuple products up to length l_i at each level; the
``explicit_feature_map`` oracle materializes it for small instances and is the
ground truth the fast evaluations are tested against.

``include_constant`` selects whether each level's sum starts at j=0 (default)
or j=1; the default is the convention the algorithms and sup bounds use.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import backend
from .core import ContractViolation, DimensionMismatch

FEATURE_MAP_CAP = 10 ** 6


@dataclass(frozen=True)
class KernelSpec:
    """Degree vector (l_1, ..., l_t) plus the constant-term convention."""

    degree_vector: tuple
    include_constant: bool = True

    def __post_init__(self):
        dv = tuple(int(v) for v in self.degree_vector)
        if len(dv) < 1:
            raise ContractViolation("degree vector must have at least one level")
        if any(v < 1 for v in dv):
            raise ContractViolation("all composition degrees must be >= 1")
        total = 1
        for v in dv:
            total *= v
        if total > 2 ** 62:
            raise ContractViolation("total degree overflows machine integers")
        object.__setattr__(self, "degree_vector", dv)

    @property
    def levels(self) -> int:
        return len(self.degree_vector)

    @property
    def total_degree(self) -> int:
        total = 1
        for v in self.degree_vector:
            total *= v
        return total

    def sup_bound(self, R: float) -> float:
        """Upper bound max{1, (2R)^(2^t * prod l_i)} for K(x,x) on ||x|| <= R."""
        exponent = (2 ** self.levels) * self.total_degree
        try:
            value = (2.0 * R) ** exponent
        except OverflowError:
            value = float("inf")
        return max(1.0, value)

    def to_json(self) -> dict:
        return {"degree_vector": list(self.degree_vector),
                "include_constant": self.include_constant}

    @staticmethod
    def from_json(obj) -> "KernelSpec":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return KernelSpec(tuple(obj["degree_vector"]), bool(obj.get("include_constant", True)))


@dataclass(frozen=True)
class GramMatrix:
    """Anchor points together with their exactly-symmetric kernel matrix."""

    points: np.ndarray
    values: np.ndarray
    spec: KernelSpec = field(default=None)

    def min_eigenvalue_ratio(self) -> float:
        """min eigenvalue / spectral norm — PSD check helper (>= -1e-8 expected)."""
        w = np.linalg.eigvalsh(self.values)
        scale = max(abs(w[0]), abs(w[-1]), np.finfo(float).tiny)
        return float(w[0] / scale)


def _check_pair(x, y):
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape != y.shape:
        raise DimensionMismatch(f"vector dimensions differ: {x.shape[0]} vs {y.shape[0]}")
    return x, y


def _check_finite(value: float) -> float:
    if not np.isfinite(value):
        raise OverflowError("kernel value overflowed the float64 range")
    return float(value)


def mk_eval(x, y, ell: int, include_constant: bool = True) -> float:
    """Multinomial kernel MK_ell(x, y) = sum_j (x.y)^j."""
    if ell < 1:
        raise ContractViolation("ell must be >= 1")
    x, y = _check_pair(x, y)
    s = float(x @ y)
    return _check_finite(backend.cmk_from_dots(np.float64(s), [ell], include_constant))


def cmk_eval(x, y, spec: KernelSpec) -> float:
    """Composed multinomial kernel for an arbitrary degree vector."""
    x, y = _check_pair(x, y)
    s = float(x @ y)
    return _check_finite(
        backend.cmk_from_dots(np.float64(s), spec.degree_vector, spec.include_constant))


def kernel_matrix(points_a, points_b, spec: KernelSpec) -> np.ndarray:
    """Matrix of kernel values K[i, j] = CMK(a_i, b_j)."""
    A = np.ascontiguousarray(points_a, dtype=float)
    B = np.ascontiguousarray(points_b, dtype=float)
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"point dimensions differ: {A.shape[1]} vs {B.shape[1]}")
    return backend.cmk_matrix(A, B, spec.degree_vector, spec.include_constant)


def gram_matrix(points, spec: KernelSpec) -> GramMatrix:
    """Gram matrix over one anchor set; exact symmetry by triangle mirroring."""
    P = np.ascontiguousarray(points, dtype=float)
    if P.ndim != 2:
        raise ContractViolation("anchor points must form a 2-d array")
    values = backend.cmk_gram(P, spec.degree_vector, spec.include_constant)
    if not np.all(np.isfinite(values)):
        raise OverflowError("kernel value overflowed the float64 range")
    return GramMatrix(points=P, values=values, spec=spec)


def _feature_dim(d: int, ell: int, include_constant: bool) -> int:
    n = 1 if include_constant else 0
    p = 1
    for _ in range(ell):
        p *= d
        n += p
    return n


def explicit_feature_map(x, ell: int, include_constant: bool = True,
                         cap: int = FEATURE_MAP_CAP) -> np.ndarray:
    """Materialized feature map: all coordinate-tuple products up to length ell.

    Index blocks are the tuples in [d]^j for j = 0..ell (the empty tuple
    contributes the leading 1 when the constant term is included).  Oracle use
    only — the output has sum_j d^j entries and is capped.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    d = x.shape[0]
    if ell < 1:
        raise ContractViolation("ell must be >= 1")
    if _feature_dim(d, ell, include_constant) > cap:
        raise ContractViolation(
            f"feature map size {_feature_dim(d, ell, include_constant)} exceeds cap {cap}")
    blocks = [np.ones(1)] if include_constant else []
    level = np.ones(1)
    for _ in range(ell):
        level = np.kron(level, x)
        blocks.append(level)
    return np.concatenate(blocks)
