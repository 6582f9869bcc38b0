"""Replicated synthetic experiments and single-dataset estimation runs."""
from __future__ import annotations

import csv
import datetime as dt
import itertools
import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import hmm
from .errors import DomainError, LBDIError
from .estimators import CountMatrix, asymptotic_covariance, least_squares_fit, mle_triple, plugin_estimate
from .io import load_counts
from .model import Params, TruncationConfig
from .simulate import discretize, make_rng, sample_stationary, simulate_path

MODES = ("mle-observed", "hmm-analytic", "hmm-least-squares")
MAX_FAILURE_RATE = 0.2

_AXIS_NAMES = {
    "λ": "lam", "lambda": "lam", "lam": "lam",
    "μ": "mu", "mu": "mu",
    "ν": "nu", "nu": "nu",
}
_AXIS_RE = re.compile(r"^\s*([^:\s]+)\s*:\s*([^.:\s]+(?:\.[^.:\s]+)?)\s*\.\.\s*([^:\s]+)\s*:\s*(\d+)\s*$")


class ExperimentFailed(LBDIError):
    """Too many replications failed for the batch statistics to be trusted."""


@dataclass(frozen=True)
class GridSpec:
    """Ranges of initial rates for multi-start EM.

    With equal counts the ``diagonal`` layout walks all three ranges
    together (k points); ``product`` takes the Cartesian product.
    """

    lam: tuple[float, float, int]
    mu: tuple[float, float, int]
    nu: tuple[float, float, int]
    layout: str = "diagonal"

    def __post_init__(self):
        if self.layout not in ("diagonal", "product"):
            raise DomainError(f"unknown grid layout {self.layout!r}")
        for lo, hi, k in (self.lam, self.mu, self.nu):
            if k < 1 or not (0 < lo <= hi):
                raise DomainError("grid ranges must be positive with lo <= hi and count >= 1")
        if self.layout == "diagonal" and len({self.lam[2], self.mu[2], self.nu[2]}) != 1:
            raise DomainError("diagonal grid needs the same count on every axis")

    def points(self) -> list[Params]:
        axes = [np.linspace(lo, hi, k) for lo, hi, k in (self.lam, self.mu, self.nu)]
        combos = zip(*axes) if self.layout == "diagonal" else itertools.product(*axes)
        return [Params(float(a), float(b), float(c)) for a, b, c in combos]

    def to_string(self) -> str:
        return ",".join(f"{n}:{lo!r}..{hi!r}:{k}" for n, (lo, hi, k) in
                        (("lambda", self.lam), ("mu", self.mu), ("nu", self.nu)))


def parse_grid(text: str, layout: str | None = None) -> GridSpec:
    """Parse ``"lambda:a..b:k,mu:a..b:k,nu:a..b:k"`` (Greek names accepted)."""
    axes = {}
    for part in text.split(","):
        m = _AXIS_RE.match(part)
        if not m:
            raise DomainError(f"malformed grid axis {part!r}; expected name:lo..hi:count")
        name = _AXIS_NAMES.get(m.group(1).lower() if m.group(1).isascii() else m.group(1))
        if name is None or name in axes:
            raise DomainError(f"unknown or repeated grid axis {m.group(1)!r}")
        try:
            axes[name] = (float(m.group(2)), float(m.group(3)), int(m.group(4)))
        except ValueError:
            raise DomainError(f"bad number in grid axis {part!r}") from None
    if set(axes) != {"lam", "mu", "nu"}:
        raise DomainError("grid needs lambda, mu and nu axes")
    if layout is None:
        layout = "diagonal" if len({v[2] for v in axes.values()}) == 1 else "product"
    return GridSpec(axes["lam"], axes["mu"], axes["nu"], layout)


# starting boxes used for the synthetic study and for the typhoid data
SYNTHETIC_GRID = GridSpec((0.028, 0.034, 5), (0.08, 0.15, 5), (0.008, 0.015, 5))
TYPHOID_GRID = GridSpec((0.05, 0.08, 20), (0.11, 0.25, 20), (0.015, 0.03, 20))


@dataclass
class ExperimentConfig:
    params_true: Params = field(default_factory=lambda: Params(0.03, 0.1, 0.01))
    delta_t: float = 1.0
    horizon: float = 5000.0
    n_replications: int = 100
    trunc: TruncationConfig = field(default_factory=TruncationConfig)
    grid: GridSpec = SYNTHETIC_GRID
    seed: int = 0
    mode: str = "hmm-analytic"
    max_iters: int = 500
    tol: float = 1e-9
    aggregation: str = "weighted"
    threads: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}")
        if self.n_replications < 1:
            raise DomainError("n_replications must be at least 1")
        if not (self.delta_t > 0 and self.horizon >= self.delta_t):
            raise DomainError("need 0 < delta_t <= horizon")
        if self.aggregation not in hmm.AGGREGATIONS:
            raise DomainError(f"aggregation must be one of {hmm.AGGREGATIONS}")

    def describe(self) -> dict:
        return {
            "mode": self.mode,
            "params_true": list(self.params_true.as_tuple()),
            "delta_t": self.delta_t,
            "horizon": self.horizon,
            "n_replications": self.n_replications,
            "n_states": self.trunc.n_states,
            "grid": self.grid.to_string(),
            "grid_layout": self.grid.layout,
            "seed": self.seed,
            "max_iters": self.max_iters,
            "tol": self.tol,
            "aggregation": self.aggregation,
        }


@dataclass
class FitReport:
    mode: str
    config: dict
    replications: list
    summary: dict
    n_failed: int
    runtime: float

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "config": self.config,
            "summary": self.summary,
            "n_failed": self.n_failed,
            "replications": self.replications,
            "timing": {"finished": dt.datetime.now(dt.timezone.utc).isoformat(), "runtime_s": self.runtime},
        }


def _fmt(params: Params | None):
    return None if params is None else list(params.as_tuple())


def run_replication(config: ExperimentConfig, rep: int) -> dict:
    """One simulated dataset and its estimate(s); failures are returned, not raised."""
    rng = make_rng(config.seed, rep)
    p = config.params_true
    row = {"replication": rep}
    try:
        if config.mode == "mle-observed":
            path = simulate_path(p, 0, config.horizon, rng)
            obs = discretize(path, config.delta_t)
            triple, n0, n1 = mle_triple(CountMatrix.from_series(obs.x_series))
            est = plugin_estimate(triple, config.delta_t, n0, n1)
            row.update(estimates=_fmt(est.params), asymptotic_se=est.std_errors.tolist(),
                       n_obs=len(obs.x_series), triple=list(triple.as_array()))
            return row

        x0 = sample_stationary(p, rng)
        obs = discretize(simulate_path(p, x0, config.horizon, rng), config.delta_t)
        analytic_only = config.mode == "hmm-analytic"
        res = hmm.fit(obs.y_series, config.grid.points(), config.delta_t, config.trunc,
                      config.max_iters, config.tol, config.aggregation, require_inversion=analytic_only)
        row.update(analytic=_fmt(res.params), n_iters=res.n_iters, converged=res.converged,
                   loglik=res.final_loglik, chosen_start=res.chosen, n_obs=len(obs.y_series))
        if analytic_only:
            row["estimates"] = row["analytic"]
            return row
        if res.params is None:
            row["analytic_error"] = res.starts[res.chosen].error
        good_init = res.params is not None and res.params.is_positive_recurrent
        init = res.params if good_init else res.start_params
        ls = least_squares_fit(res.model.p_matrix, config.delta_t, config.trunc, init)
        row.update(estimates=_fmt(ls.params), ls_converged=ls.converged)
    except (LBDIError, ValueError, FloatingPointError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _column_stats(values: np.ndarray, truth: np.ndarray) -> dict:
    n = values.shape[0]
    mean = values.mean(axis=0)
    # spread is undefined for a single replication
    sd = values.std(axis=0, ddof=1) if n > 1 else None
    return {
        "mean": mean.tolist(),
        "sd": None if sd is None else sd.tolist(),
        "se": None if sd is None else (sd / math.sqrt(n)).tolist(),
        "mse": ((values - truth) ** 2).mean(axis=0).tolist(),
        "n": n,
    }


def summarize(config: ExperimentConfig, rows: list) -> dict:
    truth = np.array(config.params_true.as_tuple())
    ok = [r for r in rows if "error" not in r]
    summary = {"parameters": ["lambda", "mu", "nu"]}
    if ok:
        summary["estimates"] = _column_stats(np.array([r["estimates"] for r in ok]), truth)
    if config.mode == "hmm-least-squares":
        with_analytic = [r for r in ok if r.get("analytic") is not None]
        if with_analytic:
            summary["analytic"] = _column_stats(np.array([r["analytic"] for r in with_analytic]), truth)
    if config.mode == "mle-observed":
        if ok:
            summary["asymptotic_se_mean"] = np.mean([r["asymptotic_se"] for r in ok], axis=0).tolist()
        if config.params_true.is_positive_recurrent:
            n_obs = int(math.floor(config.horizon / config.delta_t + 1e-9)) + 1
            sd = asymptotic_covariance(config.params_true, config.delta_t).std_devs
            summary["asymptotic_sd_theory"] = sd.tolist()
            summary["asymptotic_se_theory"] = (sd / math.sqrt(n_obs)).tolist()
    return summary


def run_experiment(config: ExperimentConfig) -> FitReport:
    start = time.perf_counter()
    reps = range(config.n_replications)
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            rows = list(pool.map(run_replication, [config] * config.n_replications, reps))
    else:
        rows = [run_replication(config, r) for r in reps]
    rows.sort(key=lambda r: r["replication"])
    n_failed = sum("error" in r for r in rows)
    if n_failed > MAX_FAILURE_RATE * config.n_replications:
        raise ExperimentFailed(f"{n_failed} of {config.n_replications} replications failed")
    return FitReport(config.mode, config.describe(), rows, summarize(config, rows), n_failed,
                     time.perf_counter() - start)


def write_rows_csv(report: FitReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replication", "lambda", "mu", "nu", "error"])
        for r in report.replications:
            est = r.get("estimates") or [None] * 3
            w.writerow([r["replication"], *est, r.get("error", "")])


def estimate_counts(
    y,
    delta_t: float = 1.0,
    trunc: TruncationConfig | None = None,
    grid: GridSpec = TYPHOID_GRID,
    max_iters: int = 500,
    tol: float = 1e-9,
    aggregation: str = "weighted",
):
    """Multi-start fit on one count series.  Returns ``(report_dict, BaumWelchFit)``."""
    trunc = trunc or TruncationConfig(4)
    y = np.asarray(y, dtype=np.int64)
    res = hmm.fit(y, grid.points(), delta_t, trunc, max_iters, tol, aggregation)
    per_start = [
        {
            "init": list(s.start_params.as_tuple()),
            "estimates": _fmt(s.params),
            "loglik": None if not math.isfinite(s.final_loglik) else s.final_loglik,
            "n_iters": s.n_iters,
            "converged": s.converged,
            "error": s.error,
            "flags": s.flags,
        }
        for s in res.starts
    ]
    report = {
        "estimates": {"lambda": res.params.lam, "mu": res.params.mu, "nu": res.params.nu},
        "p_triple": list(res.p_triple.as_array()),
        "per_start": per_start,
        "chosen_start": res.chosen,
        "diagnostics": {
            "n_obs": int(y.size),
            "total_count": int(y.sum()),
            "max_count": int(y.max()),
            "delta_t": delta_t,
            "n_states": trunc.n_states,
            "y_max": res.model.y_max,
            "grid": grid.to_string(),
            "grid_layout": grid.layout,
            "max_iters": max_iters,
            "tol": tol,
            "aggregation": aggregation,
            "converged": res.converged,
            "n_iters": res.n_iters,
            "final_loglik": res.final_loglik,
            "n_failed_starts": sum(not s.ok for s in res.starts),
        },
    }
    return report, res


def estimate_command(data_path, **kwargs):
    return estimate_counts(load_counts(data_path), **kwargs)
