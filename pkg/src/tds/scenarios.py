"""Synthetic marginals, targets, and shift scenarios.

Everything here is generator-side plumbing: marginal families with seeded
samplers (and analytic moments where the family admits them), scenario specs
tying a train/test marginal pair to a ground-truth target with label noise
and agnostic corruption, and the adversarial labeled-point-mass pair used to
exhibit the necessity of a test-label moment bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .core import ContractViolation, Dataset, clip_array
from .nets import NeuralNet
from .polyapprox import DensePolynomial


def _double_factorial_odd(j: int) -> float:
    # (j-1)!! for even j >= 0: product of the odd numbers below j.
    return float(math.prod(range(j - 1, 0, -2))) if j > 0 else 1.0


def _as_vector(value, d: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(d, float(arr))
    if arr.shape != (d,):
        raise ContractViolation(f"{name} must be scalar or length-{d}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class UniformBall:
    """Uniform on the solid ball {||x||_2 <= R} in R^d."""

    R: float
    d: int
    tail_gamma: Optional[float] = field(default=1.0, init=False)

    def __post_init__(self):
        if self.R <= 0 or self.d < 1:
            raise ContractViolation("UniformBall needs R > 0 and d >= 1")

    @property
    def dim(self) -> int:
        return self.d

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        g = rng.standard_normal((n, self.d))
        g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), np.finfo(float).tiny)
        radii = self.R * rng.random(n) ** (1.0 / self.d)
        return g * radii[:, None]

    def analytic_moments(self, alphas: np.ndarray) -> np.ndarray:
        """E[x^alpha] = R^|a| * d/(d+|a|) * prod (a_i-1)!! / prod_{j<=|a|/2} (d+2j-2)
        for even alpha (zero otherwise), via the sphere-moment formula and the
        r^d radial law."""
        out = np.zeros(alphas.shape[0])
        for i, alpha in enumerate(alphas):
            if np.any(alpha % 2):
                continue
            total = int(alpha.sum())
            if total == 0:
                out[i] = 1.0
                continue
            half = total // 2
            num = math.prod(_double_factorial_odd(int(a)) for a in alpha)
            den = math.prod(self.d + 2 * j - 2 for j in range(1, half + 1))
            out[i] = self.R ** total * (self.d / (self.d + total)) * num / den
        return out

    def to_json(self) -> dict:
        return {"variant": "uniform_ball", "R": self.R, "d": self.d}


@dataclass(frozen=True)
class UniformCube:
    """Product of uniform[-a_i, a_i]; ``a`` may be a scalar or per-axis vector."""

    a: tuple
    d: int
    tail_gamma: Optional[float] = field(default=1.0, init=False)

    def __init__(self, a, d: int):
        object.__setattr__(self, "d", int(d))
        vec = _as_vector(a, self.d, "a")
        if np.any(vec <= 0):
            raise ContractViolation("cube half-widths must be positive")
        object.__setattr__(self, "a", tuple(float(v) for v in vec))
        object.__setattr__(self, "tail_gamma", 1.0)

    @property
    def dim(self) -> int:
        return self.d

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, size=(n, self.d)) * np.asarray(self.a)

    def analytic_moments(self, alphas: np.ndarray) -> np.ndarray:
        a = np.asarray(self.a)
        out = np.ones(alphas.shape[0])
        for i, alpha in enumerate(alphas):
            if np.any(alpha % 2):
                out[i] = 0.0
            else:
                out[i] = math.prod(a[j] ** int(alpha[j]) / (alpha[j] + 1.0)
                                   for j in range(self.d))
        return out

    def to_json(self) -> dict:
        return {"variant": "uniform_cube", "a": list(self.a), "d": self.d}


@dataclass(frozen=True)
class Gaussian:
    """Product Gaussian with per-coordinate mean and standard deviation."""

    mean: tuple
    scale: tuple
    d: int
    tail_gamma: Optional[float] = field(default=1.0, init=False)

    def __init__(self, mean, scale, d: Optional[int] = None):
        if d is None:
            for v in (mean, scale):
                arr = np.asarray(v, dtype=float)
                if arr.ndim == 1:
                    d = arr.shape[0]
                    break
            else:
                raise ContractViolation("Gaussian needs d when mean and scale are scalars")
        object.__setattr__(self, "d", int(d))
        mean_v = _as_vector(mean, self.d, "mean")
        scale_v = _as_vector(scale, self.d, "scale")
        if np.any(scale_v <= 0):
            raise ContractViolation("Gaussian scales must be positive")
        object.__setattr__(self, "mean", tuple(float(v) for v in mean_v))
        object.__setattr__(self, "scale", tuple(float(v) for v in scale_v))
        object.__setattr__(self, "tail_gamma", 1.0)

    @property
    def dim(self) -> int:
        return self.d

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return (rng.standard_normal((n, self.d)) * np.asarray(self.scale)
                + np.asarray(self.mean))

    def analytic_moments(self, alphas: np.ndarray) -> np.ndarray:
        """Product over coordinates of E[(mu + s Z)^p]
        = sum_{j even} C(p,j) s^j (j-1)!! mu^(p-j)."""
        out = np.ones(alphas.shape[0])
        for i, alpha in enumerate(alphas):
            value = 1.0
            for j in range(self.d):
                p = int(alpha[j])
                if p == 0:
                    continue
                mu, s = self.mean[j], self.scale[j]
                acc = 0.0
                for k in range(0, p + 1, 2):
                    acc += (math.comb(p, k) * s ** k * _double_factorial_odd(k)
                            * mu ** (p - k))
                value *= acc
            out[i] = value
        return out

    def to_json(self) -> dict:
        return {"variant": "gaussian", "mean": list(self.mean),
                "scale": list(self.scale), "d": self.d}


@dataclass(frozen=True)
class StudentT:
    """Coordinate-wise Student-t: heavy-tailed, deliberately not subexponential.

    scale = sqrt((dof-2)/dof) matches the unit-variance Gaussian up to second
    moments while inflating the fourth.
    """

    dof: float
    scale: tuple
    d: int
    tail_gamma: Optional[float] = field(default=None, init=False)

    def __init__(self, dof: float, scale, d: int):
        if dof <= 0:
            raise ContractViolation("StudentT dof must be positive")
        object.__setattr__(self, "dof", float(dof))
        object.__setattr__(self, "d", int(d))
        scale_v = _as_vector(scale, self.d, "scale")
        if np.any(scale_v <= 0):
            raise ContractViolation("StudentT scales must be positive")
        object.__setattr__(self, "scale", tuple(float(v) for v in scale_v))
        object.__setattr__(self, "tail_gamma", None)

    @property
    def dim(self) -> int:
        return self.d

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_t(self.dof, size=(n, self.d)) * np.asarray(self.scale)

    def analytic_moments(self, alphas: np.ndarray) -> np.ndarray:
        raise ContractViolation("Student-t reference moments are not available "
                                "analytically here; use an empirical reference")

    def to_json(self) -> dict:
        return {"variant": "student_t", "dof": self.dof,
                "scale": list(self.scale), "d": self.d}


@dataclass(frozen=True)
class PointMassMixture:
    """Finite mixture of point masses."""

    points: tuple
    weights: tuple
    tail_gamma: Optional[float] = field(default=1.0, init=False)

    def __init__(self, points, weights):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ContractViolation("points must be a nonempty (k, d) array")
        wts = np.asarray(weights, dtype=float)
        if wts.shape != (pts.shape[0],) or np.any(wts < 0):
            raise ContractViolation("weights must be nonnegative, one per point")
        if abs(float(wts.sum()) - 1.0) > 1e-12:
            raise ContractViolation("weights must sum to 1")
        object.__setattr__(self, "points", tuple(tuple(float(v) for v in row) for row in pts))
        object.__setattr__(self, "weights", tuple(float(w) for w in wts))
        object.__setattr__(self, "tail_gamma", 1.0)

    @property
    def dim(self) -> int:
        return len(self.points[0])

    @property
    def d(self) -> int:
        return self.dim

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(len(self.points), size=n, p=np.asarray(self.weights))
        return np.asarray(self.points, dtype=float)[idx]

    def analytic_moments(self, alphas: np.ndarray) -> np.ndarray:
        pts = np.asarray(self.points)
        wts = np.asarray(self.weights)
        out = np.empty(alphas.shape[0])
        for i, alpha in enumerate(alphas):
            out[i] = float(wts @ np.prod(pts ** alpha[None, :], axis=1))
        return out

    def to_json(self) -> dict:
        return {"variant": "point_mass_mixture",
                "points": [list(p) for p in self.points],
                "weights": list(self.weights)}


MarginalSpec = Union[UniformBall, UniformCube, Gaussian, StudentT, PointMassMixture]

_VARIANTS = {"uniform_ball": lambda o: UniformBall(R=float(o["R"]), d=int(o["d"])),
             "uniform_cube": lambda o: UniformCube(a=o["a"], d=int(o["d"])),
             "gaussian": lambda o: Gaussian(mean=o["mean"], scale=o["scale"], d=int(o["d"])),
             "student_t": lambda o: StudentT(dof=float(o["dof"]), scale=o["scale"],
                                             d=int(o["d"])),
             "point_mass_mixture": lambda o: PointMassMixture(points=o["points"],
                                                              weights=o["weights"])}


def marginal_from_json(obj: dict) -> MarginalSpec:
    variant = obj.get("variant")
    if variant not in _VARIANTS:
        raise ContractViolation(f"unknown marginal variant {variant!r}")
    return _VARIANTS[variant](obj)


@dataclass(frozen=True)
class ScenarioSpec:
    train_marginal: MarginalSpec
    test_marginal: MarginalSpec
    target: Union[NeuralNet, DensePolynomial]
    label_noise_sd: float = 0.0
    label_corruption_rate: float = 0.0
    M: float = 1.0
    seed: int = 0

    def __post_init__(self):
        d = self.train_marginal.dim
        if self.test_marginal.dim != d:
            raise ContractViolation("train and test marginals must share a dimension")
        target_dim = (self.target.input_dim if isinstance(self.target, NeuralNet)
                      else self.target.dim)
        if target_dim != d:
            raise ContractViolation(f"target dimension {target_dim} != marginal dimension {d}")
        if self.label_noise_sd < 0 or not 0.0 <= self.label_corruption_rate <= 1.0:
            raise ContractViolation("invalid label noise or corruption rate")
        if self.M <= 0:
            raise ContractViolation("label clip M must be positive")

    @property
    def dim(self) -> int:
        return self.train_marginal.dim

    def to_json(self) -> dict:
        kind = "net" if isinstance(self.target, NeuralNet) else "poly"
        return {"train_marginal": self.train_marginal.to_json(),
                "test_marginal": self.test_marginal.to_json(),
                "target": {"kind": kind, "value": self.target.to_json()},
                "label_noise_sd": self.label_noise_sd,
                "label_corruption_rate": self.label_corruption_rate,
                "M": self.M, "seed": self.seed}

    @staticmethod
    def from_json(obj: dict) -> "ScenarioSpec":
        tgt = obj["target"]
        if tgt["kind"] == "net":
            target = NeuralNet.from_json(tgt["value"])
        elif tgt["kind"] == "poly":
            target = DensePolynomial.from_json(tgt["value"])
        else:
            raise ContractViolation(f"unknown target kind {tgt['kind']!r}")
        return ScenarioSpec(train_marginal=marginal_from_json(obj["train_marginal"]),
                            test_marginal=marginal_from_json(obj["test_marginal"]),
                            target=target,
                            label_noise_sd=float(obj.get("label_noise_sd", 0.0)),
                            label_corruption_rate=float(obj.get("label_corruption_rate", 0.0)),
                            M=float(obj.get("M", 1.0)), seed=int(obj.get("seed", 0)))


def sample(spec: MarginalSpec, n: int, seed) -> Dataset:
    if n < 1:
        raise ContractViolation("need n >= 1")
    return Dataset(spec.sample(n, np.random.default_rng(seed)))


def _labels_with_rng(X: np.ndarray, scenario: ScenarioSpec,
                     rng: np.random.Generator) -> np.ndarray:
    """y = cl_M(f(x) + noise), then a corruption fraction resampled uniformly.

    Draw order is fixed (noise, mask, replacements) so a given generator state
    yields identical labels.
    """
    y = np.asarray(scenario.target(X), dtype=float).copy()
    if scenario.label_noise_sd > 0:
        y += scenario.label_noise_sd * rng.standard_normal(X.shape[0])
    if scenario.label_corruption_rate > 0:
        mask = rng.random(X.shape[0]) < scenario.label_corruption_rate
        y[mask] = rng.uniform(-scenario.M, scenario.M, size=int(mask.sum()))
    return clip_array(y, scenario.M)


@dataclass(frozen=True)
class LabelRecord:
    """Residual statistics of the generator target on one labeled dataset.

    ``opt_empirical`` is the target's own root-mean-square loss — an upper
    bound on the class optimum; summing the train-side and test-side values
    upper-bounds the joint benchmark lambda.
    """

    opt_empirical: float
    lambda_component: float
    n: int

    def to_json(self) -> dict:
        return {"opt_empirical": self.opt_empirical,
                "lambda_component": self.lambda_component, "n": self.n}


def label(data: Dataset, scenario: ScenarioSpec):
    """Label a dataset with the scenario target; deterministic in scenario.seed."""
    rng = np.random.default_rng(scenario.seed)
    y = _labels_with_rng(data.X, scenario, rng)
    clean = np.asarray(scenario.target(data.X), dtype=float)
    loss = float(np.sqrt(np.mean((y - clean) ** 2)))
    return Dataset(data.X, y), LabelRecord(opt_empirical=loss, lambda_component=loss,
                                           n=len(data))


class TrainSource:
    """Labeled sampler for the pipelines: draw(n, rng) -> labeled Dataset."""

    __slots__ = ("scenario",)

    def __init__(self, scenario: ScenarioSpec):
        self.scenario = scenario

    @property
    def dim(self) -> int:
        return self.scenario.dim

    @property
    def marginal(self) -> MarginalSpec:
        return self.scenario.train_marginal

    def draw(self, n: int, rng: np.random.Generator) -> Dataset:
        X = self.scenario.train_marginal.sample(n, rng)
        return Dataset(X, _labels_with_rng(X, self.scenario, rng))


class TestSource:
    """Unlabeled sampler from the test marginal."""

    __test__ = False        # not a pytest collection target
    __slots__ = ("scenario",)

    def __init__(self, scenario: ScenarioSpec):
        self.scenario = scenario

    @property
    def dim(self) -> int:
        return self.scenario.dim

    @property
    def marginal(self) -> MarginalSpec:
        return self.scenario.test_marginal

    def draw(self, n: int, rng: np.random.Generator) -> Dataset:
        return Dataset(self.scenario.test_marginal.sample(n, rng))


class LabeledTestSource:
    """Labeled sampler from the test marginal — harness-side holdout only;
    the pipelines never see test labels."""

    __slots__ = ("scenario",)

    def __init__(self, scenario: ScenarioSpec):
        self.scenario = scenario

    @property
    def dim(self) -> int:
        return self.scenario.dim

    def draw(self, n: int, rng: np.random.Generator) -> Dataset:
        X = self.scenario.test_marginal.sample(n, rng)
        return Dataset(X, _labels_with_rng(X, self.scenario, rng))


def sources(scenario: ScenarioSpec):
    return TrainSource(scenario), TestSource(scenario)


@dataclass(frozen=True)
class AdversarialInstancePair:
    """Two TDS instances sharing the training distribution (point mass at the
    origin, label zero) whose test distributions plant one far-out labeled
    point each, with incompatible labels.

    Any single hypothesis pays at least Y/4 squared error against one of the
    two planted labels, while each instance separately is realizable by a
    unit-norm linear function — so a tester that accepts both runs cannot
    certify excess error below Y/4.
    """

    instance_consistent: ScenarioSpec
    instance_zero: ScenarioSpec
    Y: float
    p: float
    planted_point: tuple
    planted_label: float

    def test_label_second_moment(self) -> float:
        return self.p * self.planted_label ** 2

    def worst_excess_sq(self, h_value: float) -> float:
        """max over the two instances of p * (h(planted) - y)^2."""
        return max(self.p * (h_value - self.planted_label) ** 2,
                   self.p * h_value ** 2)


def adversarial_label_scenario(Y: float, p: float, m_expected: int,
                               d: int = 2) -> AdversarialInstancePair:
    if not 0.0 < p < 1.0:
        raise ContractViolation("p must lie in (0, 1)")
    if Y <= 0:
        raise ContractViolation("Y must be positive")
    if p >= 1.0 / (2.0 * m_expected):
        raise ContractViolation(
            f"p = {p} is too large for m_expected = {m_expected}; need p < 1/(2m)")
    label_value = math.sqrt(Y / p)
    planted = np.zeros(d)
    planted[0] = label_value
    origin = np.zeros(d)
    train = PointMassMixture(points=[origin], weights=[1.0])
    test = PointMassMixture(points=[origin, planted], weights=[1.0 - p, p])
    # Realizing targets: w.x with w = e_1 fits the consistent instance, the
    # zero function fits the other; both are unit-norm linear.
    linear = DensePolynomial(d, {tuple(1 if j == 0 else 0 for j in range(d)): 1.0})
    zero = DensePolynomial(d, {})
    M = label_value
    consistent = ScenarioSpec(train_marginal=train, test_marginal=test, target=linear,
                              M=M, seed=0)
    zero_labels = ScenarioSpec(train_marginal=train, test_marginal=test, target=zero,
                               M=M, seed=0)
    return AdversarialInstancePair(instance_consistent=consistent,
                                   instance_zero=zero_labels, Y=float(Y), p=float(p),
                                   planted_point=tuple(float(v) for v in planted),
                                   planted_label=label_value)
