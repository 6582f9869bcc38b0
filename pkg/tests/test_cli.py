import json

import pytest

from lbdi.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main, read_config

FAST_GRID = "lambda:0.25..0.3:2,mu:0.5..0.6:2,nu:0.15..0.2:2"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


def test_simulate_then_estimate(tmp_path, capsys):
    counts = tmp_path / "y.csv"
    code, sim = run(capsys, "simulate", "--lambda", "0.3", "--mu", "0.5", "--nu", "0.2", "--horizon", "300",
                    "--seed", "3", "--counts-csv", str(counts), "--path-csv", str(tmp_path / "p.csv"))
    assert code == EXIT_OK
    assert len(sim["y_series"]) == 300 and len(sim["x_series"]) == 301
    trace = tmp_path / "t.csv"
    code, rep = run(capsys, "estimate", str(counts), "--grid", FAST_GRID, "--n-states", "6",
                    "--max-iters", "10", "--trace-csv", str(trace))
    assert code == EXIT_OK
    assert len(rep["per_start"]) == 2
    assert set(rep["estimates"]) == {"lambda", "mu", "nu"}
    assert trace.read_text().startswith("start,iteration,loglik,p00,p01,p10")


def test_experiment_out_and_rows(tmp_path, capsys):
    out, rows = tmp_path / "r.json", tmp_path / "rows.csv"
    code, _ = run(capsys, "experiment", "--mode", "mle-observed", "--horizon", "30000", "--reps", "2",
                  "--seed", "2", "--out", str(out), "--rows-csv", str(rows))
    assert code == EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["config"]["n_replications"] == 2 and "timing" in rep
    assert rows.read_text().splitlines()[0] == "replication,lambda,mu,nu,error"


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# study\nmode = mle-observed\nhorizon = 30000\nreps = 2\nseed = 9\n")
    assert read_config(cfg)["reps"] == 2
    code, rep = run(capsys, "experiment", "--config", str(cfg), "--reps", "1")
    assert code == EXIT_OK
    assert rep["config"]["mode"] == "mle-observed" and rep["config"]["n_replications"] == 1


def test_deterministic_output(capsys):
    args = ("experiment", "--mode", "mle-observed", "--horizon", "20000", "--reps", "2", "--seed", "4")
    _, a = run(capsys, *args)
    _, b = run(capsys, *args)
    a.pop("timing"), b.pop("timing")
    assert a == b


@pytest.mark.parametrize("argv", [
    ["estimate", "missing.csv"],
    ["experiment", "--grid", "lambda:1..2"],
    ["experiment", "--mode", "nope"],
    ["experiment", "--reps", "0"],
    ["frobnicate"],
])
def test_usage_errors(argv, capsys):
    code, err = run(capsys, *argv)
    assert code == EXIT_USAGE
    assert "error" in err


def test_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    code, err = run(capsys, "experiment", "--config", str(cfg))
    assert code == EXIT_USAGE and "colour" in err["message"]


def test_gap_in_data_is_usage_error(tmp_path, capsys):
    f = tmp_path / "d.csv"
    f.write_text("date,count\n2020-01-01,1\n2020-01-03,0\n")
    code, err = run(capsys, "estimate", str(f))
    assert code == EXIT_USAGE and err["error"] == "GapError"


def test_estimation_failure_exit_code(tmp_path, capsys):
    f = tmp_path / "zeros.csv"
    f.write_text("0\n" * 40)
    code, err = run(capsys, "estimate", str(f), "--grid", "lambda:0.03..0.03:1,mu:0.1..0.1:1,nu:0.01..0.01:1",
                    "--max-iters", "20")
    assert code == EXIT_FAIL
    assert "every start failed" in err["message"]
