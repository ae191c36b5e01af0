"""Command-line interface: data generation, calibration, curves, experiments.

Exit codes: 0 on success, 1 on configuration errors (bad arguments, bad
config files, unknown keys, bad paths), 2 on numerical failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import datasets as dsets
from .core import NumericalError
from .harness import (
    ConfigError,
    ExperimentConfig,
    build_model,
    config_from_json,
    parse_bounds,
    parse_strategy_cfg,
    risk_curve,
    run_experiment,
    write_curve,
    write_results,
)
from .strategies import STRATEGIES, timed_strategy

_MODELS = ("linreg_known", "linreg_unknown", "logistic_jaakkola", "logistic_bbb")


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; remap to the config-error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="tempcal", description=__doc__)
    parser.add_argument("--version", action="version", version=f"tempcal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen-data", help="generate a synthetic dataset (CSV + JSON sidecar)")
    gen.add_argument(
        "--setting",
        required=True,
        choices=["linreg", "gaussian_mean", "polynomial", "gmm", "uniform", "logistic"],
    )
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--d", type=int, default=1)
    gen.add_argument("--sigma2", type=float, default=None, help="noise variance (setting-dependent default)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--theta", type=float, default=None, help="gaussian_mean: true mean (default: drawn)")
    gen.add_argument("--f", default="parabola", help="polynomial: built-in function name")
    gen.add_argument("--delta2", type=float, default=0.1, help="gmm: small-component variance")
    gen.add_argument("--p", type=float, default=0.5, help="gmm: small-component probability")
    gen.add_argument("--half-width", type=float, default=4.5, help="uniform: noise half-width")

    cal = sub.add_parser("calibrate", help="run one strategy on a dataset, print alpha as JSON")
    cal.add_argument("--model", required=True, choices=_MODELS)
    cal.add_argument("--strategy", required=True, choices=list(STRATEGIES))
    cal.add_argument("--data", required=True)
    cal.add_argument("--config", default=None, help="JSON with bounds/strategy_cfg/model_params")
    cal.add_argument("--seed", type=int, default=0)

    cur = sub.add_parser("curve", help="risk-estimate and oracle curves over the alpha grid")
    cur.add_argument("--model", required=True, choices=_MODELS)
    cur.add_argument("--strategy", required=True, choices=[s for s in STRATEGIES if s != "bayes"])
    cur.add_argument("--data", required=True)
    cur.add_argument("--grid", type=int, default=50)
    cur.add_argument("--out", required=True)
    cur.add_argument("--config", default=None)
    cur.add_argument("--seed", type=int, default=0)

    exp = sub.add_parser("experiment", help="run a full experiment from a JSON config")
    exp.add_argument("--config", required=True)
    exp.add_argument("--out-dir", required=True)
    return parser


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _auxiliary_config(path: str | None):
    """bounds / strategy_cfg / model_params for calibrate and curve."""
    obj = _load_json(path) if path else {}
    unknown = set(obj) - {"bounds", "strategy_cfg", "model_params"}
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {path}")
    bounds = parse_bounds(obj.get("bounds"))
    strategy_cfg = parse_strategy_cfg(obj.get("strategy_cfg"), bounds)
    return bounds, strategy_cfg, obj.get("model_params", {})


def _model_for_data(model_name: str, data, model_params: dict):
    # reuse the experiment-side validation/construction with a stub config
    stub = ExperimentConfig(
        model=model_name,
        dataset={
            "setting": "logistic" if model_name.startswith("logistic") else "linreg",
            "n": data.n,
            "d": data.d,
            **({} if model_name.startswith("logistic") else {"sigma2": model_params.get("sigma2", 1.0)}),
        },
        strategies=("bayes",),
        model_params=model_params,
    )
    return build_model(stub, data.d)


def _cmd_gen_data(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.setting == "linreg":
        theta = rng.standard_normal(args.d)
        data, truth = dsets.gen_linreg(args.n, args.d, theta, args.sigma2 if args.sigma2 is not None else 1.0, rng)
    elif args.setting == "gaussian_mean":
        theta = args.theta if args.theta is not None else float(rng.standard_normal())
        data, truth = dsets.gen_gaussian_mean(args.n, theta, rng)
    elif args.setting == "polynomial":
        data, truth = dsets.gen_polynomial(args.n, args.d, args.f, args.sigma2 if args.sigma2 is not None else 0.5, rng)
    elif args.setting == "gmm":
        theta = rng.standard_normal(args.d)
        data, truth = dsets.gen_gmm_noise(args.n, args.d, theta, args.sigma2 if args.sigma2 is not None else 12.0, args.delta2, args.p, rng)
    elif args.setting == "uniform":
        theta = rng.standard_normal(args.d)
        data, truth = dsets.gen_uniform_noise(args.n, args.d, theta, args.half_width, rng)
    else:  # logistic
        theta = rng.standard_normal(args.d)
        data, truth = dsets.gen_logistic(args.n, args.d, theta, rng)
    dsets.write_dataset(data, args.out, truth)
    print(json.dumps({"out": str(args.out), "sidecar": str(dsets.sidecar_path(args.out)), "n": data.n, "d": data.d, "kind": data.kind}))
    return 0


def _cmd_calibrate(args) -> int:
    data, _ = dsets.read_dataset(args.data)
    bounds, strategy_cfg, model_params = _auxiliary_config(args.config)
    model = _model_for_data(args.model, data, model_params)
    alpha, ms = timed_strategy(
        args.strategy, data, model, strategy_cfg, np.random.default_rng(args.seed)
    )
    print(
        json.dumps(
            {
                "strategy": args.strategy,
                "alpha": alpha,
                "alpha_over_n": alpha / data.n,
                "wall_time_ms": ms,
            }
        )
    )
    return 0


def _cmd_curve(args) -> int:
    data, truth = dsets.read_dataset(args.data)
    if truth is None:
        raise ConfigError(
            f"{args.data} has no ground-truth sidecar; the oracle column needs one"
        )
    bounds, strategy_cfg, model_params = _auxiliary_config(args.config)
    # rebuild an experiment-style config around the stored ground truth
    from .harness import _OracleEvaluator, _STAR_TAG  # local: shares CRN conventions
    from .strategies import backend_for, estimate_curve
    from .datasets import draw_from_truth

    model = _model_for_data(args.model, data, model_params)
    backend = backend_for(model, strategy_cfg)
    test = draw_from_truth(truth, 100 * data.n, np.random.default_rng([args.seed, 101]))
    lo, hi = bounds.scaled(data.n)
    alphas = np.linspace(lo, hi, args.grid)
    estimates = estimate_curve(
        args.strategy, data, model, alphas, strategy_cfg, np.random.default_rng([args.seed, 77])
    )
    evaluator = _OracleEvaluator(model, test, 2000, [args.seed, _STAR_TAG])
    rows = []
    for alpha, est in zip(alphas, estimates):
        post = backend.fit(data, alpha, np.random.default_rng([args.seed, _STAR_TAG, 1]))
        rows.append((alpha / data.n, float(est), evaluator(post)[0]))
    write_curve(rows, args.out)
    print(json.dumps({"out": str(args.out), "rows": len(rows)}))
    return 0


def _cmd_experiment(args) -> int:
    config = config_from_json(_load_json(args.config))
    result = run_experiment(config)
    paths = write_results(result, args.out_dir)
    print(
        json.dumps(
            {
                "results": str(paths["results"]),
                "summary": str(paths["summary"]),
                "failures": str(paths["failures"]),
                "cells": sum(len(rep.outcomes) for rep in result.repetitions),
                "failed_cells": len(result.failures),
            }
        )
    )
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "calibrate": _cmd_calibrate,
    "curve": _cmd_curve,
    "experiment": _cmd_experiment,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"tempcal: config error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"tempcal: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"tempcal: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
