"""Experiment orchestration and report emission.

Runs repeated TDS trials against a synthetic scenario, measures accept rates
and holdout excess errors, and writes reports.  The JSON and CSV outputs are
byte-stable functions of (config, seed, backend); wall-clock timings go only
to the text summary and a separate timings sidecar so they never perturb the
reproducible artifacts.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import backend
from .core import ContractViolation, Dataset, TdsParams
from .kernels import KernelSpec
from .kernel_pipeline import tds_kernel_learn
from .moment_pipeline import UniformApproxParams, tds_uniform_learn
from .scenarios import (LabeledTestSource, ScenarioSpec, TestSource, TrainSource)

HOLDOUT_DEFAULT = 10 ** 4
EXCESS_SLACK_EPS_MULTIPLIER = 5.0


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioSpec
    pipeline: str
    params: TdsParams
    trials: int
    seed: int
    kernel_spec: Optional[KernelSpec] = None
    approx: Optional[UniformApproxParams] = None
    holdout: int = HOLDOUT_DEFAULT

    def __post_init__(self):
        if self.pipeline not in ("kernel", "moment"):
            raise ContractViolation(f"pipeline must be 'kernel' or 'moment', "
                                    f"got {self.pipeline!r}")
        if self.pipeline == "kernel" and self.kernel_spec is None:
            raise ContractViolation("kernel pipeline requires kernel_spec")
        if self.pipeline == "moment" and self.approx is None:
            raise ContractViolation("moment pipeline requires approx parameters")
        if self.trials < 1 or self.holdout < 1:
            raise ContractViolation("trials and holdout must be >= 1")

    def to_json(self) -> dict:
        return {"scenario": self.scenario.to_json(), "pipeline": self.pipeline,
                "params": self.params.to_json(), "trials": self.trials,
                "seed": self.seed,
                "kernel_spec": self.kernel_spec.to_json() if self.kernel_spec else None,
                "approx": self.approx.to_json() if self.approx else None,
                "holdout": self.holdout}

    @staticmethod
    def from_json(obj: dict) -> "ExperimentConfig":
        try:
            kernel_spec = (KernelSpec.from_json(obj["kernel_spec"])
                           if obj.get("kernel_spec") else None)
            approx = (UniformApproxParams.from_json(obj["approx"])
                      if obj.get("approx") else None)
            return ExperimentConfig(scenario=ScenarioSpec.from_json(obj["scenario"]),
                                    pipeline=str(obj["pipeline"]),
                                    params=TdsParams.from_json(obj["params"]),
                                    trials=int(obj["trials"]), seed=int(obj["seed"]),
                                    kernel_spec=kernel_spec, approx=approx,
                                    holdout=int(obj.get("holdout", HOLDOUT_DEFAULT)))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ContractViolation):
                raise
            raise ContractViolation(f"bad experiment config: {exc}") from exc


@dataclass
class ExperimentReport:
    config: dict
    trials: list
    aggregate: dict
    backend_name: str
    timings: dict

    def to_json(self) -> dict:
        # Timings deliberately excluded: they are not reproducible bytes.
        return {"config": self.config, "aggregate": self.aggregate,
                "trials": self.trials, "backend": self.backend_name}


def _rms(residuals: np.ndarray) -> float:
    return float(np.sqrt(np.mean(residuals ** 2)))


def _loss_and_se(y: np.ndarray, preds: np.ndarray) -> tuple:
    sq = (y - preds) ** 2
    mean_sq = float(np.mean(sq))
    loss = float(np.sqrt(mean_sq))
    se_mean_sq = float(np.std(sq)) / math.sqrt(len(sq))
    se = se_mean_sq / (2.0 * loss) if loss > 0 else math.sqrt(se_mean_sq)
    return loss, se


def _run_trial(config: ExperimentConfig, index: int, trial_ss) -> dict:
    scenario = config.scenario
    train_src, test_src = TrainSource(scenario), TestSource(scenario)
    pipe_ss, holdout_train_ss, holdout_test_ss = trial_ss.spawn(3)

    if config.pipeline == "kernel":
        outcome, rep = tds_kernel_learn(train_src, test_src, config.kernel_spec,
                                        config.params, pipe_ss)
        statistic = rep.rho if rep is not None else None
    else:
        outcome, rep = tds_uniform_learn(train_src, test_src, config.approx,
                                         config.params, pipe_ss)
        statistic = rep.max_abs_deviation if rep is not None else None

    row = {"trial": index, "outcome": "accept" if outcome.accepted else "reject",
           "reason": None if outcome.accepted else outcome.reason,
           "detail": None if outcome.accepted else outcome.detail,
           "statistic": statistic, "test_loss": None, "holdout_se": None,
           "opt_hat": None, "lambda_hat": None, "bound": None, "excess": None,
           "within_bound": None}
    if not outcome.accepted:
        return row

    target = scenario.target
    train_holdout = train_src.draw(config.holdout, np.random.default_rng(holdout_train_ss))
    opt_hat = _rms(train_holdout.y - np.asarray(target(train_holdout.X), dtype=float))
    test_holdout = LabeledTestSource(scenario).draw(config.holdout,
                                                    np.random.default_rng(holdout_test_ss))
    fstar_test = _rms(test_holdout.y - np.asarray(target(test_holdout.X), dtype=float))
    lambda_hat = opt_hat + fstar_test

    preds = np.asarray(outcome.hypothesis(test_holdout.X), dtype=float)
    test_loss, se = _loss_and_se(test_holdout.y, preds)
    bound = opt_hat + lambda_hat + EXCESS_SLACK_EPS_MULTIPLIER * config.params.epsilon
    row.update(test_loss=test_loss, holdout_se=se, opt_hat=opt_hat,
               lambda_hat=lambda_hat, bound=bound, excess=test_loss - bound,
               within_bound=bool(test_loss <= bound + 2.0 * se))
    return row


def _aggregate(rows: list, config: ExperimentConfig) -> dict:
    n = len(rows)
    accepted = [r for r in rows if r["outcome"] == "accept"]
    reasons = {}
    for r in rows:
        if r["reason"] is not None:
            reasons[r["reason"]] = reasons.get(r["reason"], 0) + 1
    agg = {"n_trials": n, "n_accepted": len(accepted),
           "accept_rate": len(accepted) / n if n else 0.0,
           "reject_reasons": dict(sorted(reasons.items())),
           "mean_test_loss": None, "mean_excess": None, "p95_excess": None,
           "within_bound_rate": None}
    if accepted:
        losses = [r["test_loss"] for r in accepted]
        excesses = [r["excess"] for r in accepted]
        agg["mean_test_loss"] = float(np.mean(losses))
        agg["mean_excess"] = float(np.mean(excesses))
        agg["p95_excess"] = float(np.percentile(excesses, 95))
        agg["within_bound_rate"] = float(np.mean([r["within_bound"] for r in accepted]))
    return agg


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Independent seeded trials; aggregation is by trial index, so thread
    count never changes the report."""
    t_start = time.perf_counter()
    children = np.random.SeedSequence(config.seed).spawn(config.trials)

    def timed(i: int) -> tuple:
        t0 = time.perf_counter()
        row = _run_trial(config, i, children[i])
        return row, time.perf_counter() - t0

    threads = int(os.environ.get("TDS_THREADS", "1") or "1")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(timed, range(config.trials)))
    else:
        results = [timed(i) for i in range(config.trials)]
    rows = [r for r, _ in results]
    per_trial = [dt for _, dt in results]

    timings = {"total_s": time.perf_counter() - t_start, "per_trial_s": per_trial,
               "threads": threads}
    return ExperimentReport(config=config.to_json(), trials=rows,
                            aggregate=_aggregate(rows, config),
                            backend_name=backend.NAME, timings=timings)


_CSV_COLUMNS = ["trial", "outcome", "reason", "statistic", "test_loss", "holdout_se",
                "opt_hat", "lambda_hat", "bound", "excess", "within_bound"]


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def report_json_bytes(report: ExperimentReport) -> bytes:
    return (json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n").encode()


def report_csv_bytes(report: ExperimentReport) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for row in report.trials:
        writer.writerow([_csv_cell(row[c]) for c in _CSV_COLUMNS])
    return buf.getvalue().encode()


def _text_summary(report: ExperimentReport) -> str:
    agg = report.aggregate
    lines = [f"pipeline: {report.config['pipeline']}   backend: {report.backend_name}",
             f"trials: {agg['n_trials']}   accepted: {agg['n_accepted']}   "
             f"accept rate: {agg['accept_rate']:.3f}"]
    if agg["reject_reasons"]:
        parts = ", ".join(f"{k}: {v}" for k, v in agg["reject_reasons"].items())
        lines.append(f"reject reasons: {parts}")
    if agg["n_accepted"]:
        lines.append(f"mean test loss: {agg['mean_test_loss']:.6g}   "
                     f"mean excess vs bound: {agg['mean_excess']:.6g}   "
                     f"p95 excess: {agg['p95_excess']:.6g}")
        lines.append(f"within-bound rate: {agg['within_bound_rate']:.3f}")
    lines.append(f"wall clock: {report.timings['total_s']:.2f} s over "
                 f"{report.timings['threads']} thread(s)")
    return "\n".join(lines) + "\n"


def emit_report(report: ExperimentReport, paths) -> dict:
    """Write report artifacts; returns the path map actually written.

    ``paths`` is either a base path (suffixes .json/.csv/.txt/.timings.json are
    derived) or a mapping with any of the keys json/csv/text/timings.
    """
    if isinstance(paths, (str, Path)):
        base = str(paths)
        if base.endswith(".json"):
            base = base[:-5]
        paths = {"json": base + ".json", "csv": base + ".csv", "text": base + ".txt",
                 "timings": base + ".timings.json"}
    written = {}
    if "json" in paths:
        Path(paths["json"]).write_bytes(report_json_bytes(report))
        written["json"] = str(paths["json"])
    if "csv" in paths:
        Path(paths["csv"]).write_bytes(report_csv_bytes(report))
        written["csv"] = str(paths["csv"])
    if "text" in paths:
        Path(paths["text"]).write_text(_text_summary(report))
        written["text"] = str(paths["text"])
    if "timings" in paths:
        payload = json.dumps(report.timings, sort_keys=True, indent=2) + "\n"
        Path(paths["timings"]).write_text(payload)
        written["timings"] = str(paths["timings"])
    return written
