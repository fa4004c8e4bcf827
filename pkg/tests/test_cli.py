import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from iflasso.cli import EXIT_MALFORMED, EXIT_NONCONVERGED, EXIT_OK, load_config, main
from iflasso.core import RegressionPanel, read_panel_csv, write_panel_csv
from iflasso.ifl import read_fit_json
from iflasso.portfolio import read_price_csv
from iflasso.simulate import ScenarioSpec, generate_instance


@pytest.fixture
def panel_csv(tmp_path):
    inst = generate_instance(ScenarioSpec(p=3, q=1, R=2, n_per_regime=15, noise_sd=0.1), 0)
    path = tmp_path / "panel.csv"
    write_panel_csv(inst.panel, path)
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- fit


@pytest.mark.parametrize("estimator", ["ifl", "genlasso"])
def test_fit_writes_artifacts(tmp_path, panel_csv, estimator):
    out = tmp_path / "out"
    assert main(["fit", str(panel_csv), "--estimator", estimator, "--out", str(out)]) == EXIT_OK
    fit = read_fit_json(out / "fit.json")
    assert fit["estimator"] == estimator and fit["beta_hat"].shape == (30, 3)
    rows = read_rows(out / "beta_hat.csv")
    assert rows[0] == ["t", "beta_1", "beta_2", "beta_3"]
    beta = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    assert np.array_equal(beta, fit["beta_hat"])


def test_fit_non_numeric_cell(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("t,y,x1\n1,1.0,2.0\n2,0.5,oops\n3,1.0,1.0\n")
    assert main(["fit", str(path), "--out", str(tmp_path / "o")]) == EXIT_MALFORMED
    err = capsys.readouterr().err
    assert "line 3" in err and "x1" in err


def test_fit_missing_file(tmp_path):
    assert main(["fit", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")]) == EXIT_MALFORMED


def test_fit_is_byte_deterministic(tmp_path, panel_csv):
    blobs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        main(["fit", str(panel_csv), "--seed", "3", "--out", str(out)])
        blobs.append((out / "fit.json").read_bytes())
    assert blobs[0] == blobs[1]


def test_fit_nonconverged_exit_code(tmp_path, panel_csv):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"max_iter": 1, "tol": 1e-300}))
    out = tmp_path / "o"
    assert main(["fit", str(panel_csv), "--config", str(cfg), "--out", str(out)]) == EXIT_NONCONVERGED
    assert read_fit_json(out / "fit.json")["diagnostics"]["converged"] is False


def test_fit_rejects_unknown_config_key(tmp_path, panel_csv):
    cfg = tmp_path / "cfg.ini"
    cfg.write_text("not_a_setting = 3\n")
    assert main(["fit", str(panel_csv), "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_MALFORMED


# -- config


def test_config_ini_and_json_agree(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("n_reps = 2\np = [20, 30]\n[ifl]\nnu = 2.0\n")
    js = tmp_path / "c.json"
    js.write_text(json.dumps({"n_reps": 2, "p": [20, 30], "ifl": {"nu": 2.0}}))
    a, b = load_config(ini, "simulate"), load_config(js, "simulate")
    assert a == b
    assert a["simulate"] == {"n_reps": 2, "p": [20, 30]} and a["ifl"] == {"nu": 2.0}


# -- simulate


def test_simulate_smoke(tmp_path):
    out = tmp_path / "sim"
    argv = ["simulate", "--reps", "1", "--p", "20", "--q", "2", "--n-per-regime", "30", "--out", str(out)]
    assert main(argv) == EXIT_OK
    rows = read_rows(out / "tables.csv")
    assert rows[0][:3] == ["n_per_regime", "q", "p"] and len(rows) == 2
    report = json.loads((out / "report.json").read_text())
    assert report["n_failed"] == 0 and len(report["records"]) == 3
    assert len(read_rows(out / "bias_hist.csv")) == 4


def test_simulate_paper_grid_has_18_rows(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--reps", "1", "--estimators", "oracle", "--out", str(out)]) == EXIT_OK
    assert len(read_rows(out / "tables.csv")) == 19


def test_simulate_rejects_bad_estimator(tmp_path):
    assert main(["simulate", "--reps", "1", "--estimators", "ols", "--out", str(tmp_path)]) == EXIT_MALFORMED


def test_simulate_rerun_identical(tmp_path):
    blobs = []
    for k in range(2):
        out = tmp_path / f"s{k}"
        main(["simulate", "--reps", "2", "--p", "20", "--q", "2", "--n-per-regime", "30", "--seed", "5", "--out", str(out)])
        blobs.append((out / "tables.csv").read_bytes())
    assert blobs[0] == blobs[1]


# -- portfolio


def test_portfolio_paper_shape_artifacts(tmp_path):
    out = tmp_path / "pf"
    code = main(["portfolio", "--synth", "--paper-shape", "--n-per-regime", "100", "--out", str(out)])
    assert code in (EXIT_OK, EXIT_NONCONVERGED)
    rows = read_rows(out / "holdings.csv")
    assert rows[0] == ["date"] + [f"N_{i}" for i in range(1, 21)] and len(rows) == 201
    assert read_rows(out / "breaks.csv")[0] == ["date", "asset"]
    assert read_fit_json(out / "fit.json")["p"] == 20
    table = read_price_csv(out / "prices.csv")
    assert table.K == 20 and table.T == 200


def test_portfolio_zero_fund_value(tmp_path):
    path = tmp_path / "prices.csv"
    path.write_text("date,fund,asset_1\n2020-01-01,1.0,1.0\n2020-01-02,0,1.0\n2020-01-03,1.0,1.0\n")
    assert main(["portfolio", "--prices", str(path), "--out", str(tmp_path / "o")]) == EXIT_MALFORMED


def test_portfolio_synth_break_date(tmp_path):
    out = tmp_path / "pf"
    argv = ["portfolio", "--synth", "--K", "3", "--weights", "0.5,0.5;0.9,0.1", "--break-times", "41", "--n-per-regime", "40", "--out", str(out)]
    main(argv)
    table = read_price_csv(out / "prices.csv")
    dates = {r[0] for r in read_rows(out / "breaks.csv")[1:]}
    assert table.dates[41] in dates


def test_portfolio_synth_needs_shape(tmp_path):
    assert main(["portfolio", "--synth", "--out", str(tmp_path)]) == EXIT_MALFORMED


# -- bench


def test_bench_on_simulated_instance(tmp_path):
    out = tmp_path / "b"
    assert main(["bench", "--p", "5", "--q", "1", "--n-per-regime", "15", "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "bench.json").read_text())
    assert set(summary["estimators"]) == {"ifl", "genlasso"}
    assert summary["runtime_ratio_ifl_over_genlasso"] > 0
    assert "bias" in summary["estimators"]["ifl"]
    for name in ("ifl", "genlasso"):
        assert (out / name / "fit.json").exists()
    panel = read_panel_csv(out / "panel.csv")
    assert isinstance(panel, RegressionPanel) and panel.T == 60


def test_module_entry_point(tmp_path, panel_csv):
    out = tmp_path / "o"
    proc = subprocess.run([sys.executable, "-m", "iflasso.cli", "fit", str(panel_csv), "--out", str(out)], capture_output=True)
    assert proc.returncode == 0 and (out / "fit.json").exists()
