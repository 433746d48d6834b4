"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 I/O failure.
Every command writes JSON (to --output, or stdout) and, where it makes
sense, a plot-ready CSV (--plot-csv).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from typing import Optional

import numpy as np

from . import backtest as bt
from . import models
from .dq import dq_es, dq_ex, dq_report, dq_var, dr
from .optimize import (
    LpError,
    OptimizeError,
    default_cushion_grid,
    max_omega_lp,
    min_dq_ex_frontier,
    min_dq_ex_gradient_descent,
    min_dq_ex_lp,
)
from .risk_core import LossSample

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
DEFAULT_SEED = 20240101
SIG_DIGITS = 12

DEFAULTS = {
    "compute": {"alpha": 0.05, "measure": "expectile", "sign": "losses"},
    "optimize": {"alpha": 0.1, "strategy": "min_dq_ex", "sign": "losses", "threshold_multiple": 1.0},
    "frontier": {"alpha": 0.1, "sign": "losses", "grid_size": 40},
    "backtest": {
        "alpha": 0.1,
        "sign": "returns",
        "window": 500,
        "rebalance": "monthly",
        "strategy": "min_dq_ex",
        "threshold_multiple": 1.0,
        "risk_free": 0.0,
        "dq_series": False,
    },
    "simulate": {
        "alpha": 0.02,
        "model": "equicorrelated_normal",
        "n": 5,
        "r": "0,0.2,0.4,0.6,0.8",
        "count": 49,
        "reps": 1000,
        "nu": 4.0,
        "gamma": 3.0,
    },
}


class UsageError(ValueError):
    pass


def _round(x: float) -> Optional[float]:
    if not math.isfinite(x):
        return None
    return float(f"{x:.{SIG_DIGITS}g}")


def clean(obj):
    """Round floats to 12 significant digits and map non-finite values to null."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _round(float(obj))
    return obj


def write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(args, payload: dict) -> None:
    text = json.dumps(clean(payload), indent=2) + "\n"
    if args.output:
        write_atomic(args.output, text)
    else:
        sys.stdout.write(text)


def _emit_csv(path: Optional[str], header: list, rows) -> None:
    if not path:
        return
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else (f"{v:.{SIG_DIGITS}g}" if isinstance(v, float) else v) for v in row])
    write_atomic(path, buf.getvalue())


def _require_input(args) -> str:
    if not args.input:
        raise UsageError("input: a CSV path is required for this command")
    return args.input


def _load_losses(args) -> LossSample:
    _, labels, X = bt.read_matrix_csv(_require_input(args))
    if args.sign == "returns":
        X = -X
    return LossSample(X, labels=labels)


def cmd_compute(args) -> dict:
    ls = _load_losses(args)
    report = dq_report(ls, args.alpha)
    out = report.to_dict()
    out["labels"] = list(ls.labels)
    out["n_obs"] = ls.n_obs
    out["measure"] = args.measure
    out["dr_measure"] = dr(ls, args.alpha, args.measure)
    return out


def cmd_optimize(args) -> dict:
    ls = _load_losses(args)
    if args.strategy == "min_dq_ex":
        res = min_dq_ex_lp(ls, args.alpha, M=args.big_m)
        out = res.to_dict()
        out["dq_direct"] = dq_ex(ls.weighted(res.weights), args.alpha)
    elif args.strategy == "gradient":
        out = min_dq_ex_gradient_descent(ls, args.alpha).to_dict()
    elif args.strategy == "max_omega":
        t0 = float(np.mean(-ls.observations.mean(axis=1)))
        res = max_omega_lp(ls, args.threshold_multiple * t0)
        out = res.to_dict()
        out["threshold"] = args.threshold_multiple * t0
    else:
        raise UsageError(f"strategy: unknown optimize strategy {args.strategy!r}")
    out["labels"] = list(ls.labels)
    out["strategy"] = args.strategy
    return out


def cmd_frontier(args) -> dict:
    ls = _load_losses(args)
    grid = default_cushion_grid(ls, args.alpha, int(args.grid_size))
    res = min_dq_ex_frontier(ls, args.alpha, grid)
    rows = [(p.m, p.upside, p.ratio) for p in res.frontier]
    _emit_csv(args.plot_csv, ["m", "upside", "ratio"], rows)
    return {
        "best": {"m": res.best.m, "upside": res.best.upside, "ratio": res.best.ratio, "weights": res.best.weights},
        "dq": res.dq,
        "frontier": [{"m": m, "upside": u} for m, u, _ in rows],
        "labels": list(ls.labels),
    }


def _parse_rebalance(value) -> object:
    if isinstance(value, int) or value == "monthly":
        return value
    try:
        k = int(value)
    except (TypeError, ValueError):
        raise UsageError(f"rebalance: expected 'monthly' or a positive integer, got {value!r}") from None
    return k


def cmd_backtest(args) -> dict:
    panel = bt.load_returns_csv(_require_input(args))
    if args.sign == "losses":
        panel = bt.ReturnPanel(panel.dates, -panel.returns, panel.tickers)
    config = bt.BacktestConfig(
        window=int(args.window),
        rebalance=_parse_rebalance(args.rebalance),
        alpha=args.alpha,
        strategy=args.strategy,
        threshold_multiple=float(args.threshold_multiple),
        risk_free_rate=float(args.risk_free),
        seed=args.seed,
        record_dq=bool(args.dq_series),
    )
    res = bt.run_backtest(panel, config)
    _emit_csv(args.plot_csv, ["date", "wealth"], [(str(d), float(w)) for d, w in zip(res.dates, res.wealth)])
    out = res.to_dict()
    out["tickers"] = list(panel.tickers)
    return out


def _build_model(args, r: float):
    name = args.model
    n = int(args.n)
    if name == "equicorrelated_normal":
        return models.EquicorrelatedNormal(n, r)
    if name == "multivariate_t":
        sigma = models.equicorrelated(n, r)
        return models.MultivariateT(float(args.nu), tuple(map(tuple, sigma)))
    if name == "iid_t":
        return models.IidT(float(args.nu), n)
    if name == "iid_pareto":
        return models.IidPareto(float(args.gamma), n)
    raise UsageError(f"model: unknown model {name!r}")


def cmd_simulate(args) -> dict:
    """Mean empirical DQs over repeated samples, one block per correlation r."""
    try:
        rs = [float(x) for x in str(args.r).split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"r: expected a comma-separated list of numbers, got {args.r!r}") from None
    reps, count = int(args.reps), int(args.count)
    if reps < 1 or count < 1:
        raise UsageError("reps/count: must be positive")
    children = np.random.SeedSequence(args.seed).spawn(len(rs) * reps)
    results = []
    for k, r in enumerate(rs):
        model = _build_model(args, r)
        acc = np.zeros(3)
        for rep in range(reps):
            ls = models.sample_model(model, count, children[k * reps + rep])
            acc += (dq_ex(ls, args.alpha), dq_var(ls, args.alpha), dq_es(ls, args.alpha))
        mean = acc / reps
        results.append({"r": r, "mean_dq_ex": mean[0], "mean_dq_var": mean[1], "mean_dq_es": mean[2]})
    _emit_csv(
        args.plot_csv,
        ["r", "dq_ex", "dq_var", "dq_es"],
        [(p["r"], p["mean_dq_ex"], p["mean_dq_var"], p["mean_dq_es"]) for p in results],
    )
    return {
        "model": args.model,
        "n": int(args.n),
        "count": count,
        "reps": reps,
        "alpha": args.alpha,
        "seed": args.seed,
        "results": results,
    }


COMMANDS = {
    "compute": cmd_compute,
    "optimize": cmd_optimize,
    "frontier": cmd_frontier,
    "backtest": cmd_backtest,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; explicit flags win")
    common.add_argument("--input", help="CSV input path")
    common.add_argument("--output", help="JSON output path (default: stdout)")
    common.add_argument("--plot-csv", dest="plot_csv", help="plot-data CSV output path")
    common.add_argument("--alpha", type=float)
    common.add_argument("--seed", type=int)
    sign = common.add_mutually_exclusive_group()
    sign.add_argument("--losses", dest="sign", action="store_const", const="losses", help="input cells are losses")
    sign.add_argument("--returns", dest="sign", action="store_const", const="returns", help="input cells are returns")

    parser = argparse.ArgumentParser(prog="dqex", description="Expectile-based diversification quotients.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", parents=[common], help="DQ report for a loss sample")
    p.add_argument("--measure", choices=["expectile", "var", "es"])

    p = sub.add_parser("optimize", parents=[common], help="optimal portfolio weights")
    p.add_argument("--strategy", choices=["min_dq_ex", "gradient", "max_omega"])
    p.add_argument("--big-m", dest="big_m", type=float)
    p.add_argument("--threshold-multiple", dest="threshold_multiple", type=float)

    p = sub.add_parser("frontier", parents=[common], help="cushion/upside frontier")
    p.add_argument("--grid-size", dest="grid_size", type=int)

    p = sub.add_parser("backtest", parents=[common], help="rolling-window backtest on a returns panel")
    p.add_argument("--window", type=int)
    p.add_argument("--rebalance", help="'monthly' or a period in rows")
    p.add_argument("--strategy", choices=["min_dq_ex", "max_omega", "equal_weight"])
    p.add_argument("--threshold-multiple", dest="threshold_multiple", type=float)
    p.add_argument("--risk-free", dest="risk_free", type=float, help="annual risk-free rate (decimal)")
    p.add_argument("--dq-series", dest="dq_series", action="store_const", const=True, help="include rolling DQ reports")

    p = sub.add_parser("simulate", parents=[common], help="mean empirical DQs on synthetic models")
    p.add_argument("--model", choices=["equicorrelated_normal", "multivariate_t", "iid_t", "iid_pareto"])
    p.add_argument("--n", type=int)
    p.add_argument("--r", help="comma-separated correlations")
    p.add_argument("--nu", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--reps", type=int)
    p.add_argument("--count", type=int, help="sample size per repetition")
    return parser


def _read_config(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"config: line {lineno} is not key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _coerce(action: argparse.Action, key: str, value: str):
    if action.const is not None and action.nargs == 0:
        lowered = value.lower()
        if action.dest == "sign":
            if lowered not in ("losses", "returns"):
                raise UsageError(f"{key}: expected losses or returns")
            return lowered
        if lowered in ("1", "true", "yes"):
            return True
        if lowered in ("0", "false", "no"):
            return False
        raise UsageError(f"{key}: expected a boolean, got {value!r}")
    try:
        result = action.type(value) if action.type else value
    except ValueError:
        raise UsageError(f"{key}: cannot parse {value!r}") from None
    if action.choices is not None and result not in action.choices:
        raise UsageError(f"{key}: {value!r} is not one of {sorted(action.choices)}")
    return result


def resolve(args: argparse.Namespace, parser: argparse.ArgumentParser) -> argparse.Namespace:
    """Merge config-file values under explicit flags, then apply defaults."""
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    actions = {a.dest: a for a in sub.choices[args.command]._actions}
    if args.config:
        for key, value in _read_config(args.config).items():
            if key not in actions or key in ("config", "help"):
                raise UsageError(f"config: unknown key {key!r} for command {args.command}")
            if getattr(args, key) is None:
                setattr(args, key, _coerce(actions[key], key, value))
    for key, value in DEFAULTS[args.command].items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    if args.seed is None:
        args.seed = DEFAULT_SEED
    return args


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = resolve(args, parser)
        payload = COMMANDS[args.command](args)
        _emit(args, payload)
    except (LpError, OptimizeError) as exc:
        print(f"dqex: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"dqex: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"dqex: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
