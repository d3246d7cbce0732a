"""Command-line interface.

Subcommands: gen, kernel-run, moment-run, experiment, approx-report.  Flags
that mirror config-file fields (seed, trials, holdout) defer to the config on
conflict, with a warning on stderr.  Exit codes: 0 run completed (accept or
reject alike), 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import ContractViolation, InfeasibleScaleError, NumericalFailure, TdsParams
from .harness import ExperimentConfig, emit_report, run_experiment
from .kernels import KernelSpec
from .kernel_pipeline import strict_kernel_sizes, tds_kernel_learn
from .moment_pipeline import (UniformApproxParams, strict_uniform_sizes,
                              tds_uniform_learn)
from .nets import NeuralNet, sigmoid
from .polyapprox import (chebyshev_approx_univariate, compose_sigmoid_net_approx,
                         degree_for_target, grid_sup_error)
from .scenarios import (LabeledTestSource, ScenarioSpec, TestSource, TrainSource)


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ContractViolation(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ContractViolation(f"{path}: invalid JSON: {exc}") from exc


def _config_wins(config_value, flag_value, name: str):
    """Config files take precedence over mirrored flags, loudly."""
    if flag_value is not None and config_value is not None and flag_value != config_value:
        print(f"warning: --{name}={flag_value} conflicts with config value "
              f"{config_value}; config wins", file=sys.stderr)
        return config_value
    return config_value if config_value is not None else flag_value


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _load_scenario(obj_or_config: dict) -> ScenarioSpec:
    if "scenario_path" in obj_or_config:
        return ScenarioSpec.from_json(_load_json(obj_or_config["scenario_path"]))
    if "scenario" in obj_or_config:
        return ScenarioSpec.from_json(obj_or_config["scenario"])
    raise ContractViolation("config needs 'scenario' (inline) or 'scenario_path'")


def _cmd_gen(args) -> int:
    scenario = ScenarioSpec.from_json(_load_json(args.scenario))
    seed = scenario.seed if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    labeled = args.labeled if args.labeled is not None else (args.which == "train")
    if args.which == "train":
        data = TrainSource(scenario).draw(args.n, rng)
        if not labeled:
            from .core import Dataset
            data = Dataset(data.X)
    else:
        src = LabeledTestSource(scenario) if labeled else TestSource(scenario)
        data = src.draw(args.n, rng)
    fmt = args.format
    if fmt is None:
        fmt = "json-lines" if str(args.out).endswith(".jsonl") else "csv"
    from .core import save_dataset
    save_dataset(data, args.out, format=fmt)
    print(f"wrote {len(data)} samples ({'labeled' if data.labeled else 'unlabeled'}, "
          f"{args.which} marginal) to {args.out}")
    return 0


def _single_run_report(config: dict, flag_seed, pipeline: str) -> dict:
    scenario = _load_scenario(config)
    params = TdsParams.from_json(config["params"])
    seed = _config_wins(config.get("seed"), flag_seed, "seed")
    if seed is None:
        seed = 0
    train_src, test_src = TrainSource(scenario), TestSource(scenario)

    if pipeline == "kernel":
        spec = KernelSpec.from_json(config["kernel_spec"])
        outcome, rep = tds_kernel_learn(train_src, test_src, spec, params, int(seed))
        strict = strict_kernel_sizes(params)
        sizes = {"m": params.desk.m if params.scale_mode == "desk" else strict["m"],
                 "N": params.desk.N if params.scale_mode == "desk" else strict["N"],
                 "strict_m": strict["m"], "strict_N": strict["N"]}
        test_report = {"spectral": rep.to_json() if rep is not None else None}
    else:
        approx = UniformApproxParams.from_json(config["approx"])
        outcome, rep = tds_uniform_learn(train_src, test_src, approx, params, int(seed))
        strict = strict_uniform_sizes(approx, params, scenario.dim)
        sizes = {"m_train": (params.desk.m_train if params.scale_mode == "desk"
                             else strict["m_train"]),
                 "m_test": (params.desk.m_test if params.scale_mode == "desk"
                            else strict["m_test"]),
                 "strict_m_train": strict["m_train"], "strict_m_test": strict["m_test"]}
        test_report = {"moments": rep.to_json() if rep is not None else None}

    report = {"pipeline": pipeline, "seed": int(seed), "scale_mode": params.scale_mode,
              "sizes": sizes, **test_report,
              "outcome": "accept" if outcome.accepted else "reject",
              "reason": None if outcome.accepted else outcome.reason,
              "detail": None if outcome.accepted else outcome.detail,
              "diagnostics": outcome.diagnostics if outcome.accepted else None}
    return report


def _cmd_run(args, pipeline: str) -> int:
    config = _load_json(args.config)
    report = _single_run_report(config, args.seed, pipeline)
    _write_json(args.out, report)
    print(f"{pipeline} run: {report['outcome']}"
          + ("" if report["outcome"] == "accept" else f" ({report['reason']})"))
    return 0


def _cmd_experiment(args) -> int:
    raw = _load_json(args.config)
    if "scenario_path" in raw and "scenario" not in raw:
        raw = dict(raw)
        raw["scenario"] = _load_json(raw["scenario_path"])
    raw["trials"] = _config_wins(raw.get("trials"), args.trials, "trials")
    raw["seed"] = _config_wins(raw.get("seed"), args.seed, "seed")
    raw["holdout"] = _config_wins(raw.get("holdout"), args.holdout, "holdout")
    if raw.get("holdout") is None:
        raw.pop("holdout")
    for key in ("trials", "seed"):
        if raw.get(key) is None:
            raise ContractViolation(f"experiment config needs '{key}' (or the flag)")
    config = ExperimentConfig.from_json(raw)
    report = run_experiment(config)
    written = emit_report(report, args.out)
    agg = report.aggregate
    print(f"experiment: {agg['n_accepted']}/{agg['n_trials']} accepted "
          f"(rate {agg['accept_rate']:.3f}); wrote {', '.join(sorted(written.values()))}")
    return 0


def _cmd_approx_report(args) -> int:
    if args.net is not None:
        net = NeuralNet.from_json(_load_json(args.net))
        evaluator, degree_vector, cert = compose_sigmoid_net_approx(
            net, eps=args.eps, R=args.R, seed=args.seed, max_degree=args.max_degree)
        payload = {"mode": "net", "input_dim": net.input_dim, "depth": net.depth,
                   "degree_vector": list(degree_vector),
                   "certificate": cert.to_json()}
    else:
        degree = degree_for_target(sigmoid, args.R, args.eps, max_degree=args.max_degree)
        poly = chebyshev_approx_univariate(sigmoid, args.R, degree)
        measured = grid_sup_error(poly, sigmoid, args.R)
        payload = {"mode": "sigmoid", "degree": degree, "radius": args.R,
                   "target_eps": args.eps,
                   "measured_sup_error": measured.value,
                   "argmax": [float(v) for v in measured.argmax]}
    _write_json(args.out, payload)
    print(f"approx report written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tds", description="Testable distribution-shift regression toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="sample a dataset from a scenario")
    p.add_argument("--scenario", required=True, help="scenario JSON path")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--which", choices=("train", "test"), default="train")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--labeled", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--format", choices=("csv", "json-lines"), default=None)

    for name in ("kernel-run", "moment-run"):
        p = sub.add_parser(name, help=f"single {name.split('-')[0]} pipeline run")
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("experiment", help="repeated trials with aggregate report")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output base path or report.json path")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--holdout", type=int, default=None)

    p = sub.add_parser("approx-report", help="polynomial approximation certificate")
    p.add_argument("--net", default=None, help="network JSON path (composed mode)")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--R", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-degree", type=int, default=512)
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen":
            return _cmd_gen(args)
        if args.command == "kernel-run":
            return _cmd_run(args, "kernel")
        if args.command == "moment-run":
            return _cmd_run(args, "moment")
        if args.command == "experiment":
            return _cmd_experiment(args)
        if args.command == "approx-report":
            return _cmd_approx_report(args)
        parser.error(f"unknown command {args.command!r}")
    except (ContractViolation, InfeasibleScaleError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
