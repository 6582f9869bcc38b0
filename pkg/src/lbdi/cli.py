"""``lbdi`` command line: estimate, experiment, simulate.

Exit codes: 0 success, 1 estimation failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys

from . import hmm
from .errors import DomainError, GapError, LBDIError, ParseError
from .experiment import (
    MODES,
    SYNTHETIC_GRID,
    TYPHOID_GRID,
    ExperimentConfig,
    estimate_counts,
    parse_grid,
    run_experiment,
    write_rows_csv,
)
from .io import load_counts
from .model import Params, TruncationConfig
from .simulate import discretize, make_rng, sample_stationary, simulate_path

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# config-file key -> (argparse dest, type)
_CONFIG_KEYS = {
    "mode": ("mode", str),
    "dt": ("dt", float),
    "delta_t": ("dt", float),
    "horizon": ("horizon", float),
    "reps": ("reps", int),
    "n_replications": ("reps", int),
    "n_states": ("n_states", int),
    "seed": ("seed", int),
    "grid": ("grid", str),
    "grid_layout": ("grid_layout", str),
    "threads": ("threads", int),
    "max_iters": ("max_iters", int),
    "tol": ("tol", float),
    "aggregation": ("aggregation", str),
    "lambda": ("lam", float),
    "lam": ("lam", float),
    "mu": ("mu", float),
    "nu": ("nu", float),
    "x0": ("x0", str),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def read_config(path) -> dict:
    """Flat ``key = value`` file (``#`` comments, optional ``[section]`` headers)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    try:
        cp.read_string("[__top__]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"bad config file: {exc}") from None
    out = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            key = key.replace("-", "_")
            if key not in _CONFIG_KEYS:
                raise UsageError(f"unknown config key {key!r}")
            dest, typ = _CONFIG_KEYS[key]
            try:
                out[dest] = typ(raw)
            except ValueError:
                raise UsageError(f"bad value for {key}: {raw!r}") from None
    return out


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file; command-line flags take precedence")
    p.add_argument("--dt", type=float, help="observation period (default 1)")
    p.add_argument("--n-states", type=int, help="truncation level N")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_fit(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid", help='initial-rate grid, e.g. "lambda:0.05..0.08:20,mu:0.11..0.25:20,nu:0.015..0.03:20"')
    p.add_argument("--grid-layout", choices=("diagonal", "product"))
    p.add_argument("--max-iters", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--aggregation", choices=hmm.AGGREGATIONS)
    p.add_argument("--trace-csv", help="per-iteration log-likelihood trace")


def _add_truth(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lbdi", description="Birth-death-immigration rate estimation from isolated counts.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    est = sub.add_parser("estimate", help="multi-start EM on a count file")
    est.add_argument("data", help="CSV with 'date,count' header or one integer per line")
    _add_common(est)
    _add_fit(est)

    exp = sub.add_parser("experiment", help="replicated synthetic study")
    _add_common(exp)
    _add_fit(exp)
    _add_truth(exp)
    exp.add_argument("--mode", choices=MODES)
    exp.add_argument("--reps", type=int)
    exp.add_argument("--threads", type=int)
    exp.add_argument("--rows-csv", help="per-replication estimates")

    sim = sub.add_parser("simulate", help="simulate one path and emit its observation series")
    _add_common(sim)
    _add_truth(sim)
    sim.add_argument("--x0", help="initial state, or 'stationary' (default)")
    sim.add_argument("--path-csv", help="full jump record (time, state, event)")
    sim.add_argument("--counts-csv", help="death counts per period, loadable by 'estimate'")
    return parser


def _settings(args, defaults: dict) -> dict:
    merged = dict(defaults)
    if getattr(args, "config", None):
        merged.update(read_config(args.config))
    merged.update({k: v for k, v in vars(args).items() if v is not None})
    return merged


def _grid(s: dict, default):
    if s.get("grid"):
        return parse_grid(s["grid"], s.get("grid_layout"))
    if s.get("grid_layout") and s["grid_layout"] != default.layout:
        raise UsageError("--grid-layout needs --grid")
    return default


def _emit(report: dict, out) -> None:
    text = json.dumps(report, indent=2, allow_nan=False) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_estimate(args) -> int:
    s = _settings(args, {"dt": 1.0, "n_states": 4, "max_iters": 500, "tol": 1e-9, "aggregation": "weighted"})
    grid = _grid(s, TYPHOID_GRID)
    try:
        y = load_counts(args.data)
    except OSError as exc:
        raise UsageError(f"cannot read data: {exc}") from None
    report, res = estimate_counts(y, s["dt"], TruncationConfig(s["n_states"]), grid,
                                  s["max_iters"], s["tol"], s["aggregation"])
    if s.get("trace_csv"):
        hmm.write_trace_csv(res, s["trace_csv"])
    _emit(report, s.get("out"))
    return EXIT_OK


def _cmd_experiment(args) -> int:
    s = _settings(args, {
        "dt": 1.0, "n_states": 5, "max_iters": 500, "tol": 1e-9, "aggregation": "weighted",
        "lam": 0.03, "mu": 0.1, "nu": 0.01, "horizon": 5000.0, "reps": 100, "seed": 0,
        "mode": "hmm-analytic", "threads": 1,
    })
    config = ExperimentConfig(
        params_true=Params(s["lam"], s["mu"], s["nu"]),
        delta_t=s["dt"],
        horizon=s["horizon"],
        n_replications=s["reps"],
        trunc=TruncationConfig(s["n_states"]),
        grid=_grid(s, SYNTHETIC_GRID),
        seed=s["seed"],
        mode=s["mode"],
        max_iters=s["max_iters"],
        tol=s["tol"],
        aggregation=s["aggregation"],
        threads=s["threads"],
    )
    report = run_experiment(config)
    if s.get("rows_csv"):
        write_rows_csv(report, s["rows_csv"])
    _emit(report.to_json_dict(), s.get("out"))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    s = _settings(args, {"dt": 1.0, "lam": 0.03, "mu": 0.1, "nu": 0.01, "horizon": 5000.0, "seed": 0,
                         "x0": "stationary"})
    params = Params(s["lam"], s["mu"], s["nu"])
    rng = make_rng(s["seed"])
    if str(s["x0"]) == "stationary":
        x0 = sample_stationary(params, rng)
    else:
        try:
            x0 = int(s["x0"])
        except ValueError:
            raise UsageError(f"x0 must be an integer or 'stationary', got {s['x0']!r}") from None
    path = simulate_path(params, x0, s["horizon"], rng)
    obs = discretize(path, s["dt"])
    if s.get("path_csv"):
        path.to_csv(s["path_csv"])
    if s.get("counts_csv"):
        with open(s["counts_csv"], "w") as fh:
            fh.writelines(f"{int(v)}\n" for v in obs.y_series)
    _emit({
        "params": list(params.as_tuple()),
        "x0": x0,
        "delta_t": s["dt"],
        "horizon": s["horizon"],
        "seed": s["seed"],
        "n_jumps": int(path.jump_times.size),
        "x_series": obs.x_series.tolist(),
        "y_series": obs.y_series.tolist(),
    }, s.get("out"))
    return EXIT_OK


_COMMANDS = {"estimate": _cmd_estimate, "experiment": _cmd_experiment, "simulate": _cmd_simulate}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        _emit({"error": "usage", "message": str(exc)}, None)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, ParseError, GapError, DomainError) as exc:
        # bad input or configuration, not a failed fit
        _emit({"error": type(exc).__name__, "message": str(exc)}, None)
        return EXIT_USAGE
    except LBDIError as exc:
        _emit({"error": type(exc).__name__, "message": str(exc)}, None)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
