"""Kernel-method TDS learner/tester.

End to end: draw labeled/unlabeled reference samples, reject any out-of-ball
test point, fit a norm-constrained kernel regression on the labeled reference
set, then compare second-moment matrices of the reference feature map on
fresh verification samples from both marginals through a whitened spectral
statistic.  Accept yields the clipped kernel expansion as the hypothesis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (Accept, ContractViolation, Dataset, InfeasibleScaleError,
                   NumericalFailure, Reject, TdsParams, as_seed_sequence,
                   clip_array)
from .kernels import GramMatrix, KernelSpec, gram_matrix, kernel_matrix

CONSTRAINT_SLACK = 1e-6


@dataclass(frozen=True)
class ReferenceFeatureMap:
    """phi(x) = (K(x, z))_z over the 2m reference anchors."""

    anchors: np.ndarray
    spec: KernelSpec

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return kernel_matrix(X, self.anchors, self.spec)

    @property
    def dim(self) -> int:
        return self.anchors.shape[0]


@dataclass(frozen=True)
class SpectralReport:
    rho: float
    threshold: Optional[float]
    null_violation: bool
    eig_tolerance: float
    matrix_dim: int

    def to_json(self) -> dict:
        return {"rho": self.rho, "threshold": self.threshold,
                "null_violation": self.null_violation,
                "eig_tolerance": self.eig_tolerance, "matrix_dim": self.matrix_dim}


class KernelHypothesis:
    """h(x) = clip_M( sum_z a_z K(z, x) ) over the labeled reference anchors."""

    __slots__ = ("anchors", "coeffs", "spec", "M")

    def __init__(self, anchors: np.ndarray, coeffs: np.ndarray, spec: KernelSpec, M: float):
        self.anchors = np.asarray(anchors, dtype=float)
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.anchors.shape[0] != self.coeffs.shape[0]:
            raise ContractViolation("one coefficient per anchor required")
        self.spec = spec
        self.M = float(M)

    def predict_raw(self, X: np.ndarray) -> np.ndarray:
        return kernel_matrix(np.asarray(X, dtype=float), self.anchors, self.spec) @ self.coeffs

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return clip_array(self.predict_raw(X), self.M)

    def representation_norm_sq(self) -> float:
        K = gram_matrix(self.anchors, self.spec).values
        return float(self.coeffs @ K @ self.coeffs)


def radius_check(data: Dataset, R: float) -> Optional[int]:
    """None when every ||x||_2 <= R; else the first violating row index.

    The boundary passes — the rejection condition is strictly ||x|| > R.
    """
    norms_sq = np.einsum("ij,ij->i", data.X, data.X)
    bad = np.nonzero(norms_sq > R * R)[0]
    return int(bad[0]) if bad.size else None


def _eigh_psd(K: np.ndarray, what: str):
    w, V = np.linalg.eigh(K)
    scale = max(abs(w[0]), abs(w[-1]), np.finfo(float).tiny)
    if w[0] < -1e-8 * scale:
        raise NumericalFailure(f"{what} is not PSD within tolerance "
                               f"(min eig {w[0]:.3e}, scale {scale:.3e})")
    return np.maximum(w, 0.0), V


def fit_constrained_kernel_regression(S_ref: Dataset, spec: KernelSpec, B: float,
                                      constraint_rel_tol: float = 1e-9) -> np.ndarray:
    """Kernel least squares with representation-norm constraint a^T K a <= B.

    Solved exactly on the Lagrangian path a(lam) = (K + lam I)^+ y: the
    constraint value g(lam) = a(lam)^T K a(lam) decreases monotonically in
    lam, so either the lam->0 solution is feasible (interpolation regime) or
    bisection on lam lands on the constraint boundary, which is the KKT point.
    Spectral cutoff for the pseudoinverse: 1e-12 * sigma_max(K).
    """
    if not S_ref.labeled or len(S_ref) == 0:
        raise ContractViolation("constrained regression needs a nonempty labeled dataset")
    if B <= 0:
        raise ContractViolation("norm bound B must be positive")
    K = gram_matrix(S_ref.X, spec).values
    w, V = _eigh_psd(K, "reference Gram matrix")
    sigma_max = w[-1]
    if sigma_max <= 0.0:
        return np.zeros(len(S_ref))
    cutoff = 1e-12 * sigma_max
    active = w > cutoff
    wa = w[active]
    ya = (V.T @ S_ref.y)[active]

    def coeffs_for(lam: float) -> np.ndarray:
        return V[:, active] @ (ya / (wa + lam))

    def constraint(lam: float) -> float:
        r = ya / (wa + lam)
        return float(np.sum(wa * r * r))

    if constraint(0.0) <= B:
        return coeffs_for(0.0)
    lo, hi = 0.0, sigma_max
    while constraint(hi) > B:
        hi *= 2.0
    for _ in range(200):
        if B - constraint(hi) <= constraint_rel_tol * B and constraint(hi) <= B:
            break
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if constraint(mid) > B:
            lo = mid
        else:
            hi = mid
    return coeffs_for(hi)


def empirical_second_moment(fmap: ReferenceFeatureMap, S_ver: Dataset) -> np.ndarray:
    """(1/N) sum_x phi(x) phi(x)^T — exactly symmetric by construction."""
    if len(S_ver) == 0:
        raise ContractViolation("verification sample must be nonempty")
    F = fmap(S_ver.X)
    M = F.T @ F
    iu = np.triu_indices(M.shape[0], 1)
    M[(iu[1], iu[0])] = M[iu]
    return M / len(S_ver)


def _check_symmetric(A: np.ndarray, name: str) -> None:
    scale = max(float(np.max(np.abs(A))), np.finfo(float).tiny)
    skew = float(np.max(np.abs(A - A.T)))
    if skew > 1e-10 * scale:
        raise ContractViolation(f"{name} is asymmetric beyond 1e-10 relative ({skew:.3e})")


def spectral_shift_statistic(Phi_hat: np.ndarray, Phi_hat_prime: np.ndarray,
                             eig_tolerance_rel: float = 1e-10,
                             null_tol_rel: float = 1e-8,
                             threshold: Optional[float] = None) -> SpectralReport:
    """Whitened two-sample statistic rho = max_a a^T Phi' a s.t. a^T Phi a <= 1.

    Eigendirections of Phi_hat below eig_tolerance_rel * sigma_max form the
    numerical null space; test-side mass there (beyond null_tol_rel relative
    to trace(Phi')) is a null violation and sets rho to +inf.  Otherwise rho
    is the top eigenvalue of the symmetrically whitened Phi'.
    """
    Phi_hat = np.asarray(Phi_hat, dtype=float)
    Phi_hat_prime = np.asarray(Phi_hat_prime, dtype=float)
    if Phi_hat.shape != Phi_hat_prime.shape or Phi_hat.ndim != 2:
        raise ContractViolation("second-moment matrices must share a square shape")
    _check_symmetric(Phi_hat, "Phi_hat")
    _check_symmetric(Phi_hat_prime, "Phi_hat_prime")
    w, V = _eigh_psd(Phi_hat, "Phi_hat")
    sigma_max = w[-1]
    eig_tol_abs = eig_tolerance_rel * sigma_max
    null_mask = w <= eig_tol_abs
    dim = Phi_hat.shape[0]

    null_violation = False
    if np.any(null_mask):
        Vn = V[:, null_mask]
        quad = np.einsum("ij,ij->j", Phi_hat_prime @ Vn, Vn)
        trace_prime = max(float(np.trace(Phi_hat_prime)), 0.0)
        null_violation = bool(np.any(quad > null_tol_rel * trace_prime))

    if null_violation:
        rho = float("inf")
    elif np.all(null_mask):
        rho = 0.0
    else:
        Wh = V[:, ~null_mask] / np.sqrt(w[~null_mask])
        Mw = Wh.T @ Phi_hat_prime @ Wh
        Mw = 0.5 * (Mw + Mw.T)
        rho = float(max(np.linalg.eigvalsh(Mw)[-1], 0.0))
    return SpectralReport(rho=rho, threshold=threshold, null_violation=null_violation,
                          eig_tolerance=float(eig_tol_abs), matrix_dim=dim)


def strict_kernel_sizes(params: TdsParams) -> dict:
    """Theory-grade sample-size formulas with the leading constant set to c=1.

    m = (ABM)^4/eps^4 * ln(1/delta);
    N = m^2 * (ABC/eps^4) * (4C log2(4/delta))^(4*ell_hc + 1).
    """
    eps, dl = params.epsilon, params.delta
    m = math.ceil((params.A * params.B * params.M) ** 4 / eps ** 4 * math.log(1.0 / dl))
    base = 4.0 * params.C * math.log2(4.0 / dl)
    try:
        N = float(m) * m * (params.A * params.B * params.C / eps ** 4) * base ** (4 * params.ell_hc + 1)
    except OverflowError:
        N = float("inf")
    return {"m": m, "N": N if N == float("inf") else math.ceil(N), "c": 1}


def _resolve_sizes(params: TdsParams):
    strict = strict_kernel_sizes(params)
    if params.scale_mode == "strict":
        if not (strict["m"] <= params.max_draws and strict["N"] <= params.max_draws):
            raise InfeasibleScaleError(
                f"strict-mode sizes m={strict['m']}, N={strict['N']} exceed "
                f"max_draws={params.max_draws}; use desk mode")
        return int(strict["m"]), int(strict["N"]), strict
    return params.desk.m, params.desk.N, strict


def tds_kernel_learn(train, test_unlabeled, spec: KernelSpec, params: TdsParams,
                     rng_seed) -> tuple:
    """Run the kernel TDS pipeline; returns (outcome, spectral report or None).

    ``train``/``test_unlabeled`` expose ``draw(n, rng) -> Dataset`` (labeled
    and unlabeled respectively).  All randomness derives from ``rng_seed``
    through fixed-order sub-streams, one per draw phase.
    """
    m, N, strict = _resolve_sizes(params)
    streams = [np.random.default_rng(s) for s in as_seed_sequence(rng_seed).spawn(4)]

    S_ref_bar = train.draw(m, streams[0])
    if not S_ref_bar.labeled:
        raise ContractViolation("training source must yield labeled data")
    S_ref_prime = test_unlabeled.draw(m, streams[1])

    threshold_formula = 1.0 + params.epsilon ** 2 / (50.0 * params.A * params.B)
    if params.scale_mode == "desk" and params.desk.rho_threshold is not None:
        threshold = float(params.desk.rho_threshold)
    else:
        threshold = threshold_formula
    diagnostics = {
        "pipeline": "kernel", "m": m, "N": N,
        "strict_m": strict["m"], "strict_N": strict["N"],
        "scale_mode": params.scale_mode, "spec": spec.to_json(),
        "threshold": threshold, "threshold_formula": threshold_formula,
    }

    idx = radius_check(S_ref_prime, params.R)
    if idx is not None:
        norm = float(np.linalg.norm(S_ref_prime.X[idx]))
        return Reject("RadiusViolation",
                      f"reference test point {idx} has ||x|| = {norm:.6g} > R = {params.R}"), None

    coeffs = fit_constrained_kernel_regression(S_ref_bar, spec, params.B)
    hypothesis = KernelHypothesis(S_ref_bar.X, coeffs, spec, params.M)
    norm_sq = hypothesis.representation_norm_sq()
    if norm_sq > params.B * (1.0 + CONSTRAINT_SLACK):
        raise NumericalFailure(f"fitted norm a^T K a = {norm_sq:.6g} violates B = {params.B}")
    diagnostics["representation_norm_sq"] = norm_sq
    train_loss = float(np.sqrt(np.mean((S_ref_bar.y - hypothesis(S_ref_bar.X)) ** 2)))
    diagnostics["train_loss"] = train_loss

    S_ver = train.draw(N, streams[2])
    S_ver_prime = test_unlabeled.draw(N, streams[3])
    idx = radius_check(S_ver_prime, params.R)
    if idx is not None:
        norm = float(np.linalg.norm(S_ver_prime.X[idx]))
        return Reject("RadiusViolation",
                      f"verification test point {idx} has ||x|| = {norm:.6g} > R = {params.R}"), None

    anchors = np.vstack([S_ref_bar.X, S_ref_prime.X])
    fmap = ReferenceFeatureMap(anchors, spec)
    Phi_hat = empirical_second_moment(fmap, S_ver)
    Phi_hat_prime = empirical_second_moment(fmap, S_ver_prime)
    report = spectral_shift_statistic(Phi_hat, Phi_hat_prime, threshold=threshold)

    if report.null_violation or report.rho > threshold:
        detail = ("test-side mass in the null space of Phi_hat" if report.null_violation
                  else f"rho = {report.rho:.6g} > threshold = {threshold:.6g}")
        return Reject("SpectralShift", detail), report
    diagnostics["rho"] = report.rho
    return Accept(hypothesis, diagnostics), report
