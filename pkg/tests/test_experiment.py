import json

import numpy as np
import pytest

from lbdi.errors import DomainError
from lbdi.experiment import (
    ExperimentConfig,
    ExperimentFailed,
    GridSpec,
    estimate_counts,
    parse_grid,
    run_experiment,
    run_replication,
)
from lbdi.model import Params, TruncationConfig
from lbdi.simulate import discretize, sample_stationary, simulate_path


def test_parse_grid_names_and_layouts():
    g = parse_grid("λ:0.05..0.08:20,μ:0.11..0.25:20,ν:0.015..0.03:20")
    assert g.layout == "diagonal"
    pts = g.points()
    assert len(pts) == 20
    assert pts[0].as_tuple() == pytest.approx((0.05, 0.11, 0.015))
    assert pts[-1].as_tuple() == pytest.approx((0.08, 0.25, 0.03))
    g2 = parse_grid("lambda:0.01..0.02:2,mu:0.1..0.2:3,nu:0.01..0.01:1")
    assert g2.layout == "product" and len(g2.points()) == 6
    g3 = parse_grid("lam:0.01..0.02:2,mu:0.1..0.2:2,nu:0.01..0.02:2", layout="product")
    assert len(g3.points()) == 8
    assert parse_grid(g.to_string()) == g


@pytest.mark.parametrize("text", [
    "foo",
    "lambda:0.1..0.2:3,mu:0.1..0.3:3",
    "lambda:0.1..0.2:3,mu:0.1..0.3:3,nu:0.2..0.1:3",
    "lambda:0.1..0.2:3,mu:0.1..0.3:3,mu:0.1..0.3:3",
    "lambda:a..0.2:3,mu:0.1..0.3:3,nu:0.1..0.2:3",
])
def test_parse_grid_errors(text):
    with pytest.raises(DomainError):
        parse_grid(text)


def test_diagonal_needs_equal_counts():
    with pytest.raises(DomainError):
        GridSpec((0.01, 0.02, 2), (0.1, 0.2, 3), (0.01, 0.02, 2), layout="diagonal")


def test_config_validation():
    with pytest.raises(DomainError):
        ExperimentConfig(mode="bogus")
    with pytest.raises(DomainError):
        ExperimentConfig(n_replications=0)


def test_mle_observed_small_batch():
    cfg = ExperimentConfig(mode="mle-observed", horizon=30000.0, n_replications=4, seed=1)
    rep = run_experiment(cfg)
    assert len(rep.replications) == 4 and rep.n_failed == 0
    s = rep.summary["estimates"]
    assert np.all(np.array(s["mse"]) >= 0)
    assert s["se"] == pytest.approx(list(np.array(s["sd"]) / 2.0))
    assert len(rep.summary["asymptotic_se_theory"]) == 3


def test_report_deterministic_and_thread_independent():
    cfg = ExperimentConfig(mode="mle-observed", horizon=30000.0, n_replications=3, seed=5)
    a = run_experiment(cfg).to_json_dict()
    b = run_experiment(ExperimentConfig(mode="mle-observed", horizon=30000.0, n_replications=3, seed=5, threads=2)).to_json_dict()
    a.pop("timing"), b.pop("timing")
    b["config"] = a["config"]
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_failures_recorded_and_abort():
    # tiny horizon: states 0 and 1 are rarely both left, so most replications fail
    cfg = ExperimentConfig(mode="mle-observed", horizon=5.0, delta_t=1.0, n_replications=5)
    row = run_replication(cfg, 0)
    assert "error" in row
    with pytest.raises(ExperimentFailed):
        run_experiment(cfg)


def test_hmm_modes_run():
    p = Params(0.3, 0.5, 0.2)
    grid = GridSpec((0.25, 0.3, 2), (0.5, 0.6, 2), (0.15, 0.2, 2))
    for mode in ("hmm-analytic", "hmm-least-squares"):
        cfg = ExperimentConfig(params_true=p, mode=mode, horizon=300.0, n_replications=1,
                               trunc=TruncationConfig(6), grid=grid, max_iters=10, seed=3)
        row = run_replication(cfg, 0)
        assert "error" not in row, row
        assert len(row["estimates"]) == 3
        if mode == "hmm-least-squares":
            assert row["analytic"] is not None


def test_estimate_counts_report_shape():
    p = Params(0.3, 0.5, 0.2)
    y = discretize(simulate_path(p, sample_stationary(p, 3), 300.0, 3), 1.0).y_series
    grid = GridSpec((0.25, 0.3, 3), (0.5, 0.6, 3), (0.15, 0.2, 3))
    report, res = estimate_counts(y, 1.0, TruncationConfig(6), grid, max_iters=10)
    assert set(report) == {"estimates", "p_triple", "per_start", "chosen_start", "diagnostics"}
    assert len(report["per_start"]) == 3
    lls = [s["loglik"] if s["loglik"] is not None else -np.inf for s in report["per_start"]]
    assert report["chosen_start"] == int(np.argmax(lls))
    json.dumps(report, allow_nan=False)
