"""Shared domain types: datasets, parameters, outcomes, loss and clipping.

Everything downstream (kernel pipeline, moment pipeline, scenarios, harness)
consumes the types defined here.  All numeric state is float64; datasets are
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np


class ContractViolation(ValueError):
    """An operation was called outside its stated preconditions."""


class DimensionMismatch(ContractViolation):
    """Vectors/rows of inconsistent dimension."""


class NumericalFailure(RuntimeError):
    """A numerical routine left its validated regime (non-PSD Gram, ...)."""


class InfeasibleScaleError(ContractViolation):
    """Strict-mode sample sizes exceed the configured feasibility cap."""


@dataclass(frozen=True)
class LabeledSample:
    """A feature vector in R^d with an optional real label."""

    x: np.ndarray
    y: Optional[float] = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1:
            raise ContractViolation("sample features must be a 1-d vector")
        if not np.all(np.isfinite(x)):
            raise ContractViolation("sample features must be finite")
        if self.y is not None and not np.isfinite(self.y):
            raise ContractViolation("sample label must be finite")
        object.__setattr__(self, "x", x)


class Dataset:
    """A fixed-dimension collection of samples, optionally labeled.

    Stored densely: ``X`` is an (n, d) float64 array and ``y`` is either an
    (n,) float64 array (labeled) or ``None`` (unlabeled).
    """

    __slots__ = ("X", "y")

    def __init__(self, X, y=None):
        X = np.array(X, dtype=float)
        if X.ndim != 2:
            raise ContractViolation("dataset features must be a 2-d array")
        if not np.all(np.isfinite(X)):
            raise ContractViolation("dataset features must be finite")
        if y is not None:
            y = np.array(y, dtype=float)
            if y.shape != (X.shape[0],):
                raise DimensionMismatch(
                    f"labels shape {y.shape} does not match {X.shape[0]} samples")
            if not np.all(np.isfinite(y)):
                raise ContractViolation("dataset labels must be finite")
            y.setflags(write=False)
        X.setflags(write=False)
        self.X = X
        self.y = y

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def labeled(self) -> bool:
        return self.y is not None

    def __len__(self) -> int:
        return self.X.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.labeled != other.labeled or self.X.shape != other.X.shape:
            return False
        same_x = np.array_equal(self.X, other.X)
        same_y = (self.y is None) or np.array_equal(self.y, other.y)
        return same_x and same_y

    def samples(self) -> Iterable[LabeledSample]:
        for i in range(len(self)):
            yield LabeledSample(self.X[i], None if self.y is None else float(self.y[i]))

    @staticmethod
    def from_samples(samples: Sequence[LabeledSample]) -> "Dataset":
        if not samples:
            raise ContractViolation("cannot build a dataset from zero samples")
        dims = {s.x.shape[0] for s in samples}
        if len(dims) != 1:
            raise DimensionMismatch(f"inconsistent sample dimensions {sorted(dims)}")
        labeled_flags = {s.y is not None for s in samples}
        if len(labeled_flags) != 1:
            raise ContractViolation("samples are inconsistently labeled")
        X = np.stack([s.x for s in samples])
        y = np.array([s.y for s in samples], dtype=float) if samples[0].y is not None else None
        return Dataset(X, y)


@dataclass(frozen=True)
class DeskOverrides:
    """Desk-scale replacements for the theory-sized quantities.

    ``rho_threshold`` replaces the spectral acceptance threshold
    1 + eps^2/(50AB), which is unattainably tight at desk sample sizes; the
    formula value is still reported for comparison.  The default 3.0 was
    calibrated at m=200/N=2000, d=3: matched marginals measure rho in
    [1.2, 1.7] while a single direction scaled x2 measures rho > 200.  Set it
    to ``None`` to apply the formula threshold even in desk mode.
    """

    m: int = 200
    N: int = 2000
    rho_threshold: Optional[float] = 3.0
    m_train: int = 2000
    m_test: int = 2000

    def to_json(self) -> dict:
        return {"m": self.m, "N": self.N, "rho_threshold": self.rho_threshold,
                "m_train": self.m_train, "m_test": self.m_test}

    @staticmethod
    def from_json(obj: dict) -> "DeskOverrides":
        return DeskOverrides(**obj)


@dataclass(frozen=True)
class TdsParams:
    """Problem parameters shared by both pipelines.

    epsilon/delta are the excess-error and failure-probability targets; M the
    label bound, R the radius, B the representation norm bound, A the kernel
    sup bound, (C, ell_hc) the hypercontractivity constants, gamma the
    subexponential tail exponent.  ``scale_mode`` selects between the
    theory-grade sample-size formulas ("strict") and desk-scale overrides
    ("desk").
    """

    epsilon: float
    delta: float
    M: float = 1.0
    R: float = 1.0
    B: float = 1.0
    A: float = 1.0
    C: float = 1.0
    ell_hc: int = 1
    gamma: float = 1.0
    scale_mode: str = "desk"
    desk: DeskOverrides = field(default_factory=DeskOverrides)
    max_draws: int = 10 ** 7

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ContractViolation("epsilon must lie in (0,1)")
        if not (0.0 < self.delta < 1.0):
            raise ContractViolation("delta must lie in (0,1)")
        for name in ("M", "R", "B", "A", "C"):
            if getattr(self, name) < 1.0:
                raise ContractViolation(f"{name} must be >= 1")
        if self.ell_hc < 1:
            raise ContractViolation("ell_hc must be a positive integer")
        if not (0.0 < self.gamma <= 1.0):
            raise ContractViolation("gamma must lie in (0,1]")
        if self.scale_mode not in ("strict", "desk"):
            raise ContractViolation("scale_mode must be 'strict' or 'desk'")

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon, "delta": self.delta, "M": self.M,
            "R": self.R, "B": self.B, "A": self.A, "C": self.C,
            "ell_hc": self.ell_hc, "gamma": self.gamma,
            "scale_mode": self.scale_mode, "desk": self.desk.to_json(),
            "max_draws": self.max_draws,
        }

    @staticmethod
    def from_json(obj: dict) -> "TdsParams":
        obj = dict(obj)
        if "desk" in obj:
            obj["desk"] = DeskOverrides.from_json(obj["desk"])
        return TdsParams(**obj)


@dataclass(frozen=True)
class Reject:
    """Outcome: the tester detected a shift (or a radius violation)."""

    reason: str  # RadiusViolation | SpectralShift | MomentShift
    detail: str = ""

    REASONS = ("RadiusViolation", "SpectralShift", "MomentShift")

    def __post_init__(self):
        if self.reason not in self.REASONS:
            raise ContractViolation(f"unknown reject reason {self.reason!r}")

    @property
    def accepted(self) -> bool:
        return False


@dataclass(frozen=True)
class Accept:
    """Outcome: no shift detected; ``hypothesis`` is the clipped predictor."""

    hypothesis: Callable[[np.ndarray], np.ndarray]
    diagnostics: object = None

    @property
    def accepted(self) -> bool:
        return True


TdsOutcome = Reject | Accept


def as_seed_sequence(seed) -> np.random.SeedSequence:
    """Normalize a seed argument: raw entropy (int or sequence of ints) is
    wrapped, an already-spawned SeedSequence passes through unchanged so
    callers can hand sub-streams to the pipelines."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def clip(t: float, M: float) -> float:
    """Project ``t`` onto [-M, M]."""
    if M < 0:
        raise ContractViolation("clip level M must be >= 0")
    return float(min(max(t, -M), M))


def clip_array(t: np.ndarray, M: float) -> np.ndarray:
    if M < 0:
        raise ContractViolation("clip level M must be >= 0")
    return np.clip(t, -M, M)


def clip_labels(data: Dataset, M: float) -> Dataset:
    """Replace each label by its clipped value; features unchanged."""
    if not data.labeled:
        raise ContractViolation("clip_labels requires a labeled dataset")
    return Dataset(data.X, clip_array(data.y, M))


def squared_loss(h: Callable[[np.ndarray], np.ndarray], data: Dataset) -> float:
    """Root-mean-square loss sqrt(mean (y - h(x))^2) of ``h`` on ``data``.

    ``h`` maps an (n, d) array of rows to an (n,) vector of predictions.
    """
    if not data.labeled:
        raise ContractViolation("squared_loss requires a labeled dataset")
    if len(data) == 0:
        raise ContractViolation("squared_loss requires a nonempty dataset")
    pred = np.asarray(h(data.X), dtype=float).reshape(-1)
    if pred.shape != data.y.shape:
        raise DimensionMismatch("hypothesis returned wrong-shaped predictions")
    resid = data.y - pred
    return float(np.sqrt(np.mean(resid * resid)))


# ---------------------------------------------------------------------------
# dataset serialization: CSV (x1..xd[,y], header auto-detected) and JSON-lines
# ---------------------------------------------------------------------------

def _float_str(v: float) -> str:
    # repr round-trips float64 exactly
    return repr(float(v))


def save_dataset(data: Dataset, path, format: str = "csv") -> None:
    """Write ``data`` to ``path``; formats: csv (with header) or json-lines."""
    if format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = [f"x{i + 1}" for i in range(data.dim)]
            if data.labeled:
                header.append("y")
            writer.writerow(header)
            for i in range(len(data)):
                row = [_float_str(v) for v in data.X[i]]
                if data.labeled:
                    row.append(_float_str(data.y[i]))
                writer.writerow(row)
    elif format == "json-lines":
        with open(path, "w") as fh:
            for i in range(len(data)):
                rec = {"x": [float(v) for v in data.X[i]]}
                if data.labeled:
                    rec["y"] = float(data.y[i])
                fh.write(json.dumps(rec) + "\n")
    else:
        raise ContractViolation(f"unknown dataset format {format!r}")


def _is_float(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def load_dataset(path, format: str = "csv", labeled: Optional[bool] = None) -> Dataset:
    """Read a dataset written by :func:`save_dataset` (or hand-made).

    CSV: an optional header row is auto-detected (non-numeric first row); a
    header ending in ``y`` marks the file labeled.  Headerless CSV uses the
    ``labeled`` flag (default unlabeled).  JSON-lines: labeledness follows the
    presence of the ``"y"`` key.
    """
    if format == "csv":
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row]
        if not rows:
            raise ContractViolation(f"{path}: empty dataset file")
        if not all(_is_float(tok) for tok in rows[0]):
            header, rows = rows[0], rows[1:]
            if labeled is None:
                labeled = header[-1].strip().lower() == "y"
        if labeled is None:
            labeled = False
        if not rows:
            raise ContractViolation(f"{path}: no data rows")
        width = len(rows[0])
        parsed = []
        for lineno, row in enumerate(rows, start=1):
            if len(row) != width:
                raise DimensionMismatch(
                    f"{path}: row {lineno} has {len(row)} fields, expected {width}")
            try:
                parsed.append([float(tok) for tok in row])
            except ValueError as exc:
                raise ContractViolation(f"{path}: row {lineno}: {exc}") from None
        arr = np.array(parsed, dtype=float)
        if labeled:
            if width < 2:
                raise DimensionMismatch(f"{path}: labeled csv needs >= 2 columns")
            return Dataset(arr[:, :-1], arr[:, -1])
        return Dataset(arr)
    if format == "json-lines":
        xs, ys = [], []
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ContractViolation(f"{path}: line {lineno}: {exc}") from None
                xs.append(rec["x"])
                ys.append(rec.get("y"))
        if not xs:
            raise ContractViolation(f"{path}: empty dataset file")
        widths = {len(x) for x in xs}
        if len(widths) != 1:
            raise DimensionMismatch(f"{path}: inconsistent record dimensions {sorted(widths)}")
        has_label = {y is not None for y in ys}
        if len(has_label) != 1:
            raise ContractViolation(f"{path}: records inconsistently labeled")
        return Dataset(np.array(xs, dtype=float),
                       np.array(ys, dtype=float) if ys[0] is not None else None)
    raise ContractViolation(f"unknown dataset format {format!r}")
