import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from fpca_predict.artifact import load_model, save_model
from fpca_predict.harness.cli import cli_main
from fpca_predict.harness.simulate import SimConfig


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = SimConfig(n=200, m0=8, seed=4)
    (d / "sim.json").write_text(json.dumps(cfg.to_dict()))
    assert cli_main(["simulate", "--config", str(d / "sim.json"), "--out", str(d / "data.csv")]) == 0
    assert cli_main(["fit", "--data", str(d / "data.csv"), "--out", str(d / "model.json")]) == 0
    return d


def test_pipeline_predict(workdir):
    out = workdir / "pred.csv"
    assert cli_main(["predict", "--model", str(workdir / "model.json"), "--data", str(workdir / "data.csv"),
                     "--out", str(out), "--K", "2"]) == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:5] == ["id", "score_1", "score_2", "var_11", "var_22"]
    assert len(rows) == 201
    vals = np.array(rows[1][1:], dtype=float)
    G = (vals.size - 4) // 2
    lo, hi = vals[4 : 4 + G], vals[4 + G :]
    assert np.all(lo <= hi)


def test_pipeline_flm(workdir):
    out = workdir / "flm.json"
    pred = workdir / "y.csv"
    assert cli_main(["flm", "--data", str(workdir / "data.csv"), "--model", str(workdir / "model.json"),
                     "--out", str(out), "--predictions", str(pred)]) == 0
    summary = json.loads(out.read_text())
    assert summary["discrepancy"] == pytest.approx(
        summary["discrepancy_error_term"] + summary["discrepancy_variance_term"])
    assert len(summary["beta_curve"]) == len(summary["grid"])
    with open(pred) as fh:
        rows = list(csv.DictReader(fh))
    assert all(float(r["lo"]) <= float(r["mean"]) <= float(r["hi"]) for r in rows)


def test_flm_without_model_fits_one(workdir, tmp_path):
    out = tmp_path / "flm.json"
    (tmp_path / "fit.json").write_text(json.dumps({"K": 3, "grid_size": 41}))
    assert cli_main(["flm", "--data", str(workdir / "data.csv"), "--config", str(tmp_path / "fit.json"),
                     "--out", str(out)]) == 0
    assert json.loads(out.read_text())["K"] == 3


def test_model_artifact_round_trip(workdir, tmp_path):
    model = load_model(workdir / "model.json")
    path = tmp_path / "again.json"
    save_model(model, path)
    again = load_model(path)
    np.testing.assert_array_equal(again.eigen.eigenfunctions, model.eigen.eigenfunctions)
    np.testing.assert_array_equal(again.mean.values, model.mean.values)
    assert again.K == model.K and again.sigma2 == model.sigma2


def test_rates_json(tmp_path):
    out = tmp_path / "rates.json"
    assert cli_main(["rates", "--quantity", "sigma_norm", "--m-list", "10,20,40,100", "--replicates", "20",
                     "--out", str(out)]) == 0
    res = json.loads(out.read_text())
    assert "slope" in res and res["m"] == [10, 20, 40, 100]


def test_shrinkage_csv(tmp_path):
    out = tmp_path / "fig.csv"
    assert cli_main(["shrinkage", "--oracle", "--out", str(out)]) == 0
    with open(out) as fh:
        kinds = {r["kind"] for r in csv.DictReader(fh)}
    assert kinds == {"truth", "center", "contour"}


def test_usage_errors_exit_2(capsys):
    assert cli_main(["bogus"]) == 2
    assert cli_main(["fit"]) == 2
    assert cli_main(["rates", "--quantity", "nope", "--out", "x"]) == 2


def test_runtime_errors_exit_1(tmp_path, capsys):
    assert cli_main(["fit", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "m.json")]) == 1
    (tmp_path / "bad.json").write_text(json.dumps({"bogus": 1}))
    assert cli_main(["simulate", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path / "d.csv")]) == 1
    assert "error:" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fpca_predict", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "table1" in proc.stdout
