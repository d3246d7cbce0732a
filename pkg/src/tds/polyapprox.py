"""Uniform polynomial approximation machinery.

Univariate approximants are truncated Chebyshev series obtained by
interpolation at the degree+1 Chebyshev-Gauss nodes (near-minimax for the
analytic activations we care about), converted to the monomial basis with
extended-precision accumulation.  Networks of sigmoids are approximated layer
by layer and certified by re-measuring the composed error on a ball sample —
certificates always report measured error, never the theory bound.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import chebyshev as _cheb

from . import backend
from ._multiindex import graded_indices
from .core import ContractViolation, DimensionMismatch
from .nets import NeuralNet, net_eval_batch, net_norms, sigmoid

MONOMIAL_EXPORT_CAP = 64


class NotReachable(RuntimeError):
    """degree_for_target exhausted max_degree without hitting the target."""

    def __init__(self, max_degree: int, best_error: float):
        super().__init__(f"target not reachable by degree {max_degree} "
                         f"(best grid error {best_error:.3g})")
        self.max_degree = max_degree
        self.best_error = best_error


class DensePolynomial:
    """Polynomial as a map multi-index -> coefficient, dense evaluation."""

    __slots__ = ("dim", "coeffs", "degree")

    def __init__(self, dim: int, coeffs: dict):
        if dim < 1:
            raise ContractViolation("polynomial dimension must be >= 1")
        clean = {}
        for alpha, c in coeffs.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != dim or any(a < 0 for a in alpha):
                raise ContractViolation(f"bad multi-index {alpha} for dim {dim}")
            c = float(c)
            if not np.isfinite(c):
                raise ContractViolation("polynomial coefficients must be finite")
            clean[alpha] = c
        self.dim = dim
        self.coeffs = clean
        self.degree = max((sum(a) for a in clean), default=0)

    @staticmethod
    def univariate(coeff_ascending) -> "DensePolynomial":
        return DensePolynomial(1, {(j,): c for j, c in enumerate(coeff_ascending)})

    def coeff_vector(self):
        """Dense coefficient vector over the graded index set of self.degree."""
        alphas, parents, varidx = graded_indices(self.dim, self.degree)
        lookup = {tuple(a): i for i, a in enumerate(alphas)}
        vec = np.zeros(len(alphas))
        for alpha, c in self.coeffs.items():
            vec[lookup[alpha]] = c
        return alphas, parents, varidx, vec

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        scalar_1d = self.dim == 1 and X.ndim <= 1
        if scalar_1d:
            X = np.atleast_1d(X)[:, None]
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise DimensionMismatch(f"expected (n, {self.dim}) inputs, got {X.shape}")
        _, parents, varidx, vec = self.coeff_vector()
        out = backend.monomial_matrix(np.ascontiguousarray(X), parents, varidx) @ vec
        return out

    def __sub__(self, other: "DensePolynomial") -> "DensePolynomial":
        if self.dim != other.dim:
            raise DimensionMismatch("polynomial dims differ")
        coeffs = dict(self.coeffs)
        for alpha, c in other.coeffs.items():
            coeffs[alpha] = coeffs.get(alpha, 0.0) - c
        return DensePolynomial(self.dim, coeffs)

    @property
    def coeff_l1(self) -> float:
        return float(sum(abs(c) for c in self.coeffs.values()))

    @property
    def coeff_l2_sq(self) -> float:
        return float(sum(c * c for c in self.coeffs.values()))

    def to_json(self) -> dict:
        return {"dim": self.dim, "degree": self.degree,
                "coeffs": {",".join(map(str, a)): c for a, c in sorted(self.coeffs.items())}}

    @staticmethod
    def from_json(obj) -> "DensePolynomial":
        if isinstance(obj, str):
            obj = json.loads(obj)
        coeffs = {tuple(int(t) for t in key.split(",")): float(c)
                  for key, c in obj["coeffs"].items()}
        return DensePolynomial(int(obj["dim"]), coeffs)


def coeff_bounds(p) -> tuple:
    """(l1, l2_sq) coefficient sums of a polynomial."""
    return p.coeff_l1, p.coeff_l2_sq


class ChebyshevPolynomial:
    """Univariate approximant kept in the Chebyshev basis.

    Used above the monomial-conversion degree cap: evaluation runs through the
    numerically stable Chebyshev recurrence; monomial coefficients are exported
    only on demand (conversion conditioning degrades with degree).
    """

    __slots__ = ("cheb_coeffs", "R", "dim")

    def __init__(self, cheb_coeffs: np.ndarray, R: float):
        self.cheb_coeffs = np.asarray(cheb_coeffs, dtype=float)
        self.R = float(R)
        self.dim = 1

    @property
    def degree(self) -> int:
        return len(self.cheb_coeffs) - 1

    def __call__(self, X) -> np.ndarray:
        x = np.asarray(X, dtype=float).reshape(-1)
        return _cheb.chebval(x / self.R, self.cheb_coeffs)

    def to_monomial(self) -> DensePolynomial:
        return DensePolynomial.univariate(_cheb_to_monomial(self.cheb_coeffs, self.R))

    @property
    def coeff_l1(self) -> float:
        return self.to_monomial().coeff_l1

    @property
    def coeff_l2_sq(self) -> float:
        return self.to_monomial().coeff_l2_sq


def _cheb_to_monomial(cheb_coeffs, R: float) -> np.ndarray:
    """Chebyshev -> monomial conversion in extended precision.

    Accumulates the T_k recurrence in longdouble, then rescales from the
    normalized variable u = x/R to x.
    """
    c = np.asarray(cheb_coeffs, dtype=np.longdouble)
    n = len(c)
    mono = np.zeros(n, dtype=np.longdouble)
    t_prev = np.zeros(n, dtype=np.longdouble)
    t_prev[0] = 1.0
    mono += c[0] * t_prev
    if n > 1:
        t_cur = np.zeros(n, dtype=np.longdouble)
        t_cur[1] = 1.0
        mono += c[1] * t_cur
        for k in range(2, n):
            t_next = -t_prev
            t_next[1:] += 2.0 * t_cur[:-1]
            mono += c[k] * t_next
            t_prev, t_cur = t_cur, t_next
    powers = np.power(np.longdouble(R), np.arange(n))
    return np.asarray(mono / powers, dtype=float)


def chebyshev_approx_univariate(f: Callable, R: float, degree: int):
    """Chebyshev-Gauss interpolant of f on [-R, R].

    Returns a monomial-basis :class:`DensePolynomial` for degrees up to 64;
    higher degrees return a :class:`ChebyshevPolynomial` (same call surface)
    to avoid the ill-conditioned basis conversion.
    """
    if degree < 0:
        raise ContractViolation("degree must be >= 0")
    if R <= 0:
        raise ContractViolation("radius must be positive")
    c = _cheb.chebinterpolate(lambda u: np.asarray(f(R * np.asarray(u)), dtype=float), degree)
    if not np.all(np.isfinite(c)):
        raise ContractViolation("function returned non-finite values on the grid")
    if degree <= MONOMIAL_EXPORT_CAP:
        return DensePolynomial.univariate(_cheb_to_monomial(c, R))
    return ChebyshevPolynomial(c, R)


@dataclass(frozen=True)
class SupError:
    value: float
    argmax: np.ndarray


def _ball_sample(n: int, dim: int, R: float, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radii = R * rng.random(n) ** (1.0 / dim)
    return g * radii[:, None]


def grid_sup_error(p: Callable, f: Callable, R: float, n: int = 10 ** 4,
                   dim: int = 1, seed: int = 0, n_cheb: int = 10 ** 3) -> SupError:
    """max |p - f| over a measurement grid, with the argmax point.

    dim 1 uses n equispaced points plus n_cheb Chebyshev nodes (the latter
    catch endpoint-adjacent error peaks); dim > 1 uses n uniform ball samples
    (a Monte-Carlo lower bound on the true sup).
    """
    if n < 2:
        raise ContractViolation("need at least 2 grid points")
    if dim == 1:
        pts = np.concatenate([
            np.linspace(-R, R, n),
            R * np.cos(np.pi * (2 * np.arange(n_cheb) + 1) / (2 * n_cheb)),
        ])
        pv = np.asarray(p(pts), dtype=float).reshape(-1)
        fv = np.asarray(f(pts), dtype=float).reshape(-1)
        err = np.abs(pv - fv)
        i = int(np.argmax(err))
        return SupError(float(err[i]), np.array([pts[i]]))
    X = _ball_sample(n, dim, R, seed)
    pv = np.asarray(p(X), dtype=float).reshape(-1)
    fv = np.asarray(f(X), dtype=float).reshape(-1)
    err = np.abs(pv - fv)
    i = int(np.argmax(err))
    return SupError(float(err[i]), X[i].copy())


def degree_for_target(f: Callable, R: float, eps: float, max_degree: int = 256,
                      grid_n: int = 10 ** 4) -> int:
    """Smallest tested degree whose grid sup error is <= eps.

    Doubles the degree from 1 until the target is hit, then bisects down.
    """
    if eps <= 0:
        raise ContractViolation("eps must be positive")

    def err(deg: int) -> float:
        q = chebyshev_approx_univariate(f, R, deg)
        return grid_sup_error(q, f, R, n=grid_n).value

    best = np.inf
    lo, hi = 0, None
    deg = 1
    while deg <= max_degree:
        e = err(deg)
        best = min(best, e)
        if e <= eps:
            hi = deg
            break
        lo = deg
        deg *= 2
    if hi is None:
        if lo < max_degree:  # doubling overshot the cap; probe the cap itself
            e = err(max_degree)
            best = min(best, e)
            if e <= eps:
                lo, hi = lo, max_degree
            else:
                raise NotReachable(max_degree, best)
        else:
            raise NotReachable(max_degree, best)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if err(mid) <= eps:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class ApproxCertificate:
    """Measured quality of an approximant on its declared ball.

    ``measured_sup_error`` is the grid/sample estimate the construction
    re-measured; ``coeff_l1``/``coeff_l2_sq`` are the coefficient sums of the
    constructed polynomial (for composed approximants: the worst layer's sums,
    which is what the per-layer theory budgets constrain).
    """

    radius: float
    target_eps: float
    measured_sup_error: float
    degree: int
    coeff_l1: float
    coeff_l2_sq: float

    def to_json(self) -> dict:
        return {"radius": self.radius, "target_eps": self.target_eps,
                "measured_sup_error": self.measured_sup_error, "degree": self.degree,
                "coeff_l1": self.coeff_l1, "coeff_l2_sq": self.coeff_l2_sq}


def compose_sigmoid_net_approx(net: NeuralNet, eps: float, R: float,
                               seed: int = 0, max_degree: int = 512):
    """Layerwise polynomial approximant of a sigmoid network.

    Builds a univariate approximant q_1 of the sigmoid at radius
    R*||W1||_{2,inf} and q_i (inner layers) at radius 2W, each to accuracy
    eps/(2W)^t, then composes p_i = W_i q_{i-1}(p_{i-1}).  The per-layer
    target is tightened and the construction retried if the measured composed
    error misses eps (the certificate must reflect a measurement, not the
    theory).  Returns (evaluator, degree vector, certificate).
    """
    if net.activation.kind != "sigmoid":
        raise ContractViolation("composition targets sigmoid networks")
    if net.depth < 2:
        raise ContractViolation("composition needs depth >= 2")
    if eps <= 0 or R <= 0:
        raise ContractViolation("eps and R must be positive")
    norms = net_norms(net)
    w_eff = max(1.0, norms.w_sum_l1)
    radius_1 = max(R * norms.w1_two_inf, 1e-6)
    radius_inner = 2.0 * w_eff
    target = eps / (2.0 * w_eff) ** net.depth

    for _ in range(4):
        deg1 = degree_for_target(sigmoid, radius_1, target, max_degree)
        q1 = chebyshev_approx_univariate(sigmoid, radius_1, deg1)
        layers = [q1]
        if net.depth > 2:
            deg_inner = degree_for_target(sigmoid, radius_inner, target, max_degree)
            q_inner = chebyshev_approx_univariate(sigmoid, radius_inner, deg_inner)
            layers.extend([q_inner] * (net.depth - 2))

        def evaluator(X, _layers=tuple(layers)):
            X = np.asarray(X, dtype=float)
            if X.ndim != 2 or X.shape[1] != net.input_dim:
                raise DimensionMismatch(f"expected (n, {net.input_dim}) inputs, got {X.shape}")
            F = X @ net.weights[0].T
            for q, W in zip(_layers, net.weights[1:]):
                F = np.stack([q(F[:, j]) for j in range(F.shape[1])], axis=1) @ W.T
            return F[:, 0]

        measured = grid_sup_error(evaluator, lambda X: net_eval_batch(net, X),
                                  R, n=10 ** 4, dim=net.input_dim, seed=seed)
        if measured.value <= eps:
            degree_vector = tuple(q.degree for q in layers)
            total_degree = 1
            for q in layers:
                total_degree *= q.degree
            cert = ApproxCertificate(
                radius=R, target_eps=eps, measured_sup_error=measured.value,
                degree=total_degree,
                coeff_l1=max(q.coeff_l1 for q in layers),
                coeff_l2_sq=max(q.coeff_l2_sq for q in layers))
            return evaluator, degree_vector, cert
        target /= 4.0
    raise NotReachable(max_degree, measured.value)


class OutOfRadiusBound:
    """Growth envelope (r+eps)(2(k+l))^{3l} k^{l/2} (s/R)^l outside the ball."""

    def __init__(self, p, r: float, eps: float, R: float, ell: int):
        self.p = p
        self.r = float(r)
        self.eps = float(eps)
        self.R = float(R)
        self.ell = int(ell)
        k = p.dim
        try:
            self.scale = (r + eps) * (2.0 * (k + ell)) ** (3 * ell) * k ** (ell / 2.0)
        except OverflowError:
            self.scale = float("inf")

    def envelope(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return self.scale * (s / self.R) ** self.ell

    def check(self, n: int = 10 ** 3, seed: int = 0):
        """Sample radii in [R, 3R]; verify |p(x)| <= envelope(||x||) on all."""
        rng = np.random.default_rng(seed)
        dirs = rng.standard_normal((n, self.p.dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = rng.uniform(self.R, 3.0 * self.R, size=n)
        X = dirs * radii[:, None]
        vals = np.abs(np.asarray(self.p(X if self.p.dim > 1 else X[:, 0]), dtype=float))
        env = self.envelope(radii)
        ok = bool(np.all(vals <= env))
        ratio = float(np.max(vals / np.maximum(env, np.finfo(float).tiny)))
        return ok, ratio


def out_of_radius_bound(p, r: float, eps: float, R: float, ell: int) -> OutOfRadiusBound:
    """Envelope + checker for a certified (eps, R)-approximant with sup r."""
    return OutOfRadiusBound(p, r, eps, R, ell)
