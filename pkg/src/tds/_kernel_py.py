"""Numpy implementation of the hot kernels (fallback backend).

The compiled extension ``tds._kernel_c`` implements the same four functions
with fused loops; ``tds.backend`` picks one at import time.  Both versions
must agree to floating-point noise — the level recursion uses the exact same
Horner ordering here and in the .pyx source.
"""

from __future__ import annotations

import numpy as np

NAME = "python"


def cmk_from_dots(s: np.ndarray, degrees, include_constant: bool) -> np.ndarray:
    """Composed-multinomial kernel values from precomputed inner products.

    Level 0 value is the inner product itself; level i maps v to
    sum_{j=0..ell_i} v^j (or from j=1 when the constant is excluded).
    """
    v = np.asarray(s, dtype=float)
    for ell in degrees:
        r = np.ones_like(v)
        for _ in range(int(ell) - 1):
            r = r * v + 1.0
        v = r * v + 1.0 if include_constant else r * v
    return v


def cmk_matrix(X: np.ndarray, Z: np.ndarray, degrees, include_constant: bool) -> np.ndarray:
    """Kernel matrix K[i, j] = CMK(x_i, z_j)."""
    S = X @ Z.T
    return cmk_from_dots(S, degrees, include_constant)


def cmk_gram(X: np.ndarray, degrees, include_constant: bool) -> np.ndarray:
    """Exactly symmetric Gram matrix: upper triangle computed, then mirrored."""
    S = X @ X.T
    iu = np.triu_indices(S.shape[0], 1)
    S[(iu[1], iu[0])] = S[iu]
    return cmk_from_dots(S, degrees, include_constant)


def monomial_matrix(X: np.ndarray, parents: np.ndarray, varidx: np.ndarray) -> np.ndarray:
    """Design matrix of monomials x^alpha, one column per multi-index.

    The multi-index set is encoded incrementally: column 0 is the constant 1;
    column j equals column ``parents[j]`` times coordinate ``varidx[j]``.
    """
    n = X.shape[0]
    out = np.empty((n, parents.shape[0]), dtype=float)
    out[:, 0] = 1.0
    for j in range(1, parents.shape[0]):
        np.multiply(out[:, parents[j]], X[:, varidx[j]], out=out[:, j])
    return out
