import json
import subprocess
import sys

import numpy as np
import pytest

from toporeg.cli import main
from toporeg.harness import ingest_csv
from toporeg.persistence import read_diagram_csv


@pytest.fixture
def config(tmp_path):
    def write(**kw):
        base = dict(kind="torus", n=120, sigma=0.3, p=25, repeats=2, cv_size=5, cv_folds=3, steps=10)
        base.update(kw)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(base))
        return str(path)
    return write


def test_gen(tmp_path, config, capsys):
    out = tmp_path / "d.csv"
    assert main(["gen", "--config", config(), "--seed", "3", "--out", str(out)]) == 0
    assert capsys.readouterr().out.strip() == str(out)
    cloud = ingest_csv(out)
    assert cloud.n == 120 and cloud.points.shape[1] == 3 and cloud.response is not None


def test_persist(tmp_path, config):
    out, filt = tmp_path / "dg.csv", tmp_path / "f.txt"
    assert main(["persist", "--config", config(kind="pyramid", grid=4, sigma=0.0), "--field", "clean",
                 "--out", str(out), "--filtration", str(filt)]) == 0
    d = read_diagram_csv(out)
    assert set(d.dim.tolist()) <= {0, 1}
    assert filt.read_text().count("\n") > 0


def test_fit_writes_coefficients(tmp_path, config):
    out = tmp_path / "fit.csv"
    assert main(["fit", "--config", config(), "--method", "omega1", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "j,theta_j,weight_j" and len(lines) == 25 + 2
    summary = json.loads(lines[-1][2:])
    assert summary["method"] == "omega1" and summary["rmse"] > 0


def test_fit_baseline(tmp_path, config):
    out = tmp_path / "fit.csv"
    assert main(["fit", "--config", config(), "--method", "knn", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 120 + 2


def test_bench_is_byte_identical(tmp_path, config):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cfg = config()
    assert main(["bench", "--config", cfg, "--method", "lasso,omega1", "--out", str(a)]) == 0
    assert main(["bench", "--config", cfg, "--method", "lasso,omega1", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert sum(l.startswith("run,") for l in a.read_text().splitlines()) == 4


def test_cv(tmp_path, config):
    out = tmp_path / "cv.csv"
    assert main(["cv", "--config", config(), "--method", "lasso", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "mu,cv_mse,selected" and len(rows) == 6
    assert sum(int(r.split(",")[2]) for r in rows[1:]) == 1


def test_config_errors_exit_one(tmp_path, config, capsys):
    assert main(["bench", "--config", config(bogus=1)]) == 1
    assert main(["bench", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["bench", "--config", config(), "--method", "svm"]) == 1
    assert main(["bench", "--repeats", "0"]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["gen", "--seed", "abc"]) == 1
    assert "config error" in capsys.readouterr().err


def test_runtime_errors_exit_two(tmp_path, config, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x0,y\n1,2\n1\n")
    assert main(["fit", "--config", config(kind="csv", csv_path=str(bad))]) == 2
    assert "CsvFormatError" in capsys.readouterr().err
    noy = tmp_path / "noy.csv"
    noy.write_text("x0,x1\n0,1\n1,0\n2,2\n")
    assert main(["fit", "--config", config(kind="csv", csv_path=str(noy))]) == 2


def test_console_script(tmp_path, config):
    out = tmp_path / "d.csv"
    proc = subprocess.run([sys.executable, "-m", "toporeg.cli", "gen", "--config", config(), "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and out.exists()
    proc = subprocess.run([sys.executable, "-m", "toporeg.cli", "gen", "--config", config(kind="nope")],
                          capture_output=True, text=True)
    assert proc.returncode == 1
