"""Moment-matching TDS learner/tester for subexponential training marginals.

Instead of a kernel two-sample test, the test marginal is screened by
comparing every low-degree empirical moment of the unlabeled test sample
against reference moments of the training marginal (analytic when available,
held-out empirical otherwise).  On pass, a box-constrained polynomial
regression is fit on the labeled training sample and returned clipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from . import backend
from .core import (Accept, ContractViolation, Dataset, InfeasibleScaleError,
                   Reject, TdsParams, as_seed_sequence, clip_array)
from ._multiindex import graded_indices
from .polyapprox import DensePolynomial

_CHUNK = 1 << 16


@dataclass(frozen=True)
class MultiIndexSet:
    """All alpha in N^d with ||alpha||_1 <= max_total_degree, graded lex order."""

    dim: int
    max_total_degree: int

    @property
    def alphas(self) -> np.ndarray:
        return graded_indices(self.dim, self.max_total_degree)[0]

    def __len__(self) -> int:
        return self.alphas.shape[0]

    def __iter__(self):
        return (tuple(int(v) for v in row) for row in self.alphas)

    def design_matrix(self, X: np.ndarray) -> np.ndarray:
        """Column j holds x^alpha_j for every row x of X, built incrementally."""
        _, parents, varidx = graded_indices(self.dim, self.max_total_degree)
        return backend.monomial_matrix(np.ascontiguousarray(X, dtype=float),
                                       parents, varidx)


@dataclass(frozen=True)
class MomentReport:
    max_abs_deviation: float
    offending_alpha: tuple
    Delta: float
    degree_checked: int
    passed: bool

    def to_json(self) -> dict:
        return {"max_abs_deviation": self.max_abs_deviation,
                "offending_alpha": list(self.offending_alpha),
                "Delta": self.Delta, "degree_checked": self.degree_checked,
                "passed": self.passed}


@dataclass(frozen=True)
class UniformApproxParams:
    """Parameter block for the uniform-approximation learner.

    ell: polynomial degree of the regression; t_mom: tail-moment degree; the
    moment test checks all alpha with ||alpha||_1 <= 2*max(ell, t_mom) at
    threshold Delta; B_coef bounds each fitted coefficient.
    """

    ell: int
    t_mom: int
    B_coef: float
    Delta: float
    eps_prime: float
    r: float
    k: int
    R: float

    def __post_init__(self):
        for name in ("ell", "t_mom", "B_coef", "Delta", "eps_prime", "r", "k", "R"):
            if not getattr(self, name) > 0:
                raise ContractViolation(f"UniformApproxParams.{name} must be positive")

    @property
    def degree_checked(self) -> int:
        return 2 * max(self.ell, self.t_mom)

    def to_json(self) -> dict:
        return {"ell": self.ell, "t_mom": self.t_mom, "B_coef": self.B_coef,
                "Delta": self.Delta, "eps_prime": self.eps_prime,
                "r": self.r, "k": self.k, "R": self.R}

    @staticmethod
    def from_json(obj: dict) -> "UniformApproxParams":
        return UniformApproxParams(ell=int(obj["ell"]), t_mom=int(obj["t_mom"]),
                                   B_coef=float(obj["B_coef"]), Delta=float(obj["Delta"]),
                                   eps_prime=float(obj["eps_prime"]), r=float(obj["r"]),
                                   k=int(obj["k"]), R=float(obj["R"]))


def strict_uniform_params(params: TdsParams, r: float, k: int, ell: int,
                          d: int) -> UniformApproxParams:
    """eps' = eps/11, t = ceil(2 ln(2M/eps')), B = r(2(k+ell))^(3 ell),
    Delta = eps'^2 / (4 B^2 d^(2 ell t)).  Delta underflows to zero already at
    moderate dimensions; that raises InfeasibleScaleError here, which is why
    desk-mode parameters are the practical default.
    """
    eps_prime = params.epsilon / 11.0
    t_mom = max(1, math.ceil(2.0 * math.log(2.0 * params.M / eps_prime)))
    try:
        B = r * (2.0 * (k + ell)) ** (3 * ell)
        denom = 4.0 * B * B * float(d) ** (2 * ell * t_mom)
    except OverflowError:
        B, denom = float("inf"), float("inf")
    Delta = eps_prime ** 2 / denom if math.isfinite(denom) else 0.0
    if not Delta > 0.0:
        raise InfeasibleScaleError(
            f"strict Delta underflows to zero at d={d}, ell={ell}, t={t_mom}; "
            "supply desk-mode UniformApproxParams instead")
    return UniformApproxParams(ell=ell, t_mom=t_mom, B_coef=B, Delta=Delta,
                               eps_prime=eps_prime, r=r, k=k, R=params.R)


def strict_uniform_sizes(approx: UniformApproxParams, params: TdsParams, d: int) -> dict:
    """Sample sizes from the subexponential moment-concentration bound (the
    unspecified universal constant set to its stated floor c=2) combined with
    the Hoeffding requirement m >= 8 M^4 ln(2/delta') / eps'^4, delta' = delta/4.
    """
    ell_eff = max(approx.ell, approx.t_mom)
    delta_prime = params.delta / 4.0
    try:
        n_mom = ((params.C * 2.0) ** (4 * ell_eff)
                 * float(ell_eff) ** (8 * ell_eff + 1)
                 * math.log(20.0 * d / params.delta) ** (4 * ell_eff + 1)
                 / approx.Delta ** 2)
    except OverflowError:
        n_mom = float("inf")
    m_hoeff = 8.0 * params.M ** 4 * math.log(2.0 / delta_prime) / approx.eps_prime ** 4
    m = max(n_mom, m_hoeff)
    return {"m_train": m if m == float("inf") else math.ceil(m),
            "m_test": m if m == float("inf") else math.ceil(m), "c": 2}


def empirical_moment(data: Dataset, alpha) -> float:
    """Sample mean of x^alpha = prod_i x_i^alpha_i."""
    alpha = np.asarray(alpha, dtype=np.int64)
    if len(data) == 0:
        raise ContractViolation("empirical moment of an empty dataset")
    if alpha.shape != (data.dim,):
        raise ContractViolation(f"alpha has shape {alpha.shape}, data dim {data.dim}")
    if np.any(alpha < 0):
        raise ContractViolation("multi-index entries must be nonnegative")
    return float(np.mean(np.prod(data.X ** alpha[None, :], axis=1)))


def empirical_moments_all(data: Dataset, index_set: MultiIndexSet) -> np.ndarray:
    """Column means of the monomial design matrix, chunked over rows so the
    full N x K matrix is never materialized; deterministic for a fixed chunk."""
    if len(data) == 0:
        raise ContractViolation("empirical moments of an empty dataset")
    if data.dim != index_set.dim:
        raise ContractViolation("dimension mismatch between data and index set")
    total = np.zeros(len(index_set))
    for start in range(0, len(data), _CHUNK):
        block = index_set.design_matrix(data.X[start:start + _CHUNK])
        total += block.sum(axis=0)
    return total / len(data)


def reference_moments(marginal, max_total_degree: int) -> dict:
    """Map alpha -> E[x^alpha] under the training marginal.

    Analytic mode for marginals exposing ``analytic_moments`` (product
    distributions with known univariate moments, and the uniform ball);
    empirical mode for held-out-sample wrappers exposing ``data``.
    """
    if hasattr(marginal, "data"):
        data = marginal.data
        index_set = MultiIndexSet(data.dim, max_total_degree)
        values = empirical_moments_all(data, index_set)
        return {alpha: float(v) for alpha, v in zip(index_set, values)}
    if hasattr(marginal, "analytic_moments"):
        index_set = MultiIndexSet(marginal.dim, max_total_degree)
        values = marginal.analytic_moments(index_set.alphas)
        return {alpha: float(v) for alpha, v in zip(index_set, values)}
    raise ContractViolation(
        f"marginal {type(marginal).__name__} supports neither analytic nor "
        "empirical reference moments")


def moment_test(test_data: Dataset, reference: Mapping, max_total_degree: int,
                Delta: float) -> MomentReport:
    """Exhaustive |M_hat_alpha - reference[alpha]| <= Delta check; the report
    carries the worst deviation and its alpha whether or not the test passed."""
    index_set = MultiIndexSet(test_data.dim, max_total_degree)
    empirical = empirical_moments_all(test_data, index_set)
    ref = np.empty(len(index_set))
    for j, alpha in enumerate(index_set):
        if alpha not in reference:
            raise ContractViolation(f"reference moments missing alpha={alpha}")
        ref[j] = reference[alpha]
    deviations = np.abs(empirical - ref)
    worst = int(np.argmax(deviations))
    max_dev = float(deviations[worst])
    alphas = index_set.alphas
    return MomentReport(max_abs_deviation=max_dev,
                        offending_alpha=tuple(int(v) for v in alphas[worst]),
                        Delta=float(Delta), degree_checked=max_total_degree,
                        passed=bool(max_dev <= Delta))


def moment_concentration_envelope(source, reference: Mapping, max_total_degree: int,
                                  N: int, seeds) -> float:
    """Max over seeds of the worst moment deviation of a fresh size-N sample —
    the calibration quantity behind desk-mode Delta choices."""
    worst = 0.0
    for seed in seeds:
        data = source.draw(N, np.random.default_rng(seed))
        report = moment_test(Dataset(data.X), reference, max_total_degree, float("inf"))
        worst = max(worst, report.max_abs_deviation)
    return worst


def fit_constrained_poly_regression(S: Dataset, ell: int, B_coef: float,
                                    eps_obj: float) -> DensePolynomial:
    """min_c mean((y - p_c(x))^2) over the coefficient box [-B, B]^K.

    Projected gradient on the convex quadratic: zero start, base step
    1/L_smooth with L_smooth = 2 lambda_max of the empirical design Gram,
    halving on the rare non-decreasing step; stops when the objective has
    decreased by less than eps_obj over the last 50 iterations, or at 1e5.
    """
    if not S.labeled or len(S) == 0:
        raise ContractViolation("constrained regression needs a nonempty labeled dataset")
    if B_coef <= 0 or eps_obj <= 0:
        raise ContractViolation("B_coef and eps_obj must be positive")
    index_set = MultiIndexSet(S.dim, ell)
    Phi = index_set.design_matrix(S.X)
    n = len(S)
    G = Phi.T @ Phi / n
    G = 0.5 * (G + G.T)
    b = Phi.T @ S.y / n
    y_sq = float(S.y @ S.y) / n

    def objective(c: np.ndarray) -> float:
        return float(c @ (G @ c) - 2.0 * (b @ c) + y_sq)

    lam_max = float(np.linalg.eigvalsh(G)[-1])
    coeffs = np.zeros(len(index_set))
    if lam_max > 0.0:
        base_step = 1.0 / (2.0 * lam_max)
        history = [objective(coeffs)]
        for _ in range(10 ** 5):
            grad = 2.0 * (G @ coeffs - b)
            step = base_step
            trial = np.clip(coeffs - step * grad, -B_coef, B_coef)
            f_trial = objective(trial)
            for _ in range(30):
                if f_trial <= history[-1] + 1e-12 * max(abs(history[-1]), 1.0):
                    break
                step *= 0.5
                trial = np.clip(coeffs - step * grad, -B_coef, B_coef)
                f_trial = objective(trial)
            coeffs = trial
            history.append(f_trial)
            if len(history) > 50 and history[-51] - history[-1] < eps_obj:
                break
    alphas = index_set.alphas
    terms = {tuple(int(v) for v in alphas[j]): float(coeffs[j])
             for j in range(len(index_set)) if coeffs[j] != 0.0}
    return DensePolynomial(S.dim, terms)


class ClippedPolynomial:
    """h(x) = clip_M(p(x)) — the accept-branch hypothesis."""

    __slots__ = ("poly", "M")

    def __init__(self, poly: DensePolynomial, M: float):
        self.poly = poly
        self.M = float(M)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return clip_array(np.asarray(self.poly(X), dtype=float), self.M)


def _resolve_uniform_sizes(params: TdsParams, approx: UniformApproxParams, d: int):
    strict = strict_uniform_sizes(approx, params, d)
    if params.scale_mode == "strict":
        if not (strict["m_train"] <= params.max_draws and strict["m_test"] <= params.max_draws):
            raise InfeasibleScaleError(
                f"strict-mode sizes m_train={strict['m_train']}, "
                f"m_test={strict['m_test']} exceed max_draws={params.max_draws}")
        return int(strict["m_train"]), int(strict["m_test"]), strict
    return params.desk.m_train, params.desk.m_test, strict


def tds_uniform_learn(train, test_unlabeled, approx_params: UniformApproxParams,
                      params: TdsParams, rng_seed) -> tuple:
    """Run the moment-matching TDS pipeline; returns (outcome, moment report).

    Reference moments come from the training marginal analytically when the
    training source exposes one (``train.marginal``), otherwise from a fresh
    held-out training sample of 10x the test size.
    """
    probe_dim = getattr(train, "dim", None)
    if probe_dim is None:
        raise ContractViolation("training source must expose its dimension")
    m_train, m_test, strict = _resolve_uniform_sizes(params, approx_params, probe_dim)
    streams = [np.random.default_rng(s) for s in as_seed_sequence(rng_seed).spawn(3)]

    S = train.draw(m_train, streams[0])
    if not S.labeled:
        raise ContractViolation("training source must yield labeled data")
    S_prime = test_unlabeled.draw(m_test, streams[1])
    degree = approx_params.degree_checked

    marginal = getattr(train, "marginal", None)
    if marginal is not None and hasattr(marginal, "analytic_moments"):
        try:
            reference = reference_moments(marginal, degree)
            reference_mode = {"mode": "analytic"}
        except ContractViolation:
            marginal = None
    if marginal is None or not hasattr(marginal, "analytic_moments"):
        held_out = train.draw(10 * m_test, streams[2])
        reference = reference_moments(_HeldOut(Dataset(held_out.X)), degree)
        reference_mode = {"mode": "empirical", "sample_size": 10 * m_test}

    diagnostics = {
        "pipeline": "moment", "m_train": m_train, "m_test": m_test,
        "strict_m_train": strict["m_train"], "strict_m_test": strict["m_test"],
        "scale_mode": params.scale_mode, "approx_params": approx_params.to_json(),
        "degree_checked": degree, "reference": reference_mode,
        "delta_underflow": bool(approx_params.Delta < 1e-300),
    }

    report = moment_test(S_prime, reference, degree, approx_params.Delta)
    diagnostics["max_abs_deviation"] = report.max_abs_deviation
    if not report.passed:
        return Reject("MomentShift",
                      f"moment alpha={report.offending_alpha} deviates by "
                      f"{report.max_abs_deviation:.6g} > Delta = {report.Delta:.6g}"), report

    p_hat = fit_constrained_poly_regression(S, approx_params.ell, approx_params.B_coef,
                                            eps_obj=approx_params.eps_prime ** 2)
    hypothesis = ClippedPolynomial(p_hat, params.M)
    train_loss = float(np.sqrt(np.mean((S.y - hypothesis(S.X)) ** 2)))
    diagnostics["train_loss"] = train_loss
    return Accept(hypothesis, diagnostics), report


class _HeldOut:
    """Internal wrapper marking a dataset as an empirical reference marginal."""

    __slots__ = ("data",)

    def __init__(self, data: Dataset):
        self.data = data
