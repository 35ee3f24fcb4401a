import csv
import json
import os

import numpy as np
import pytest
import scipy.io as sio

from optidamp import cli
from optidamp.cli import EXIT_CHECK_FAILED, EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK, main
from optidamp.objective import DampingObjective

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


def cfg(name):
    return os.path.join(CONFIGS, name)


def write_yaml(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestSolve:
    def test_toy(self, tmp_path, capsys):
        trace = tmp_path / "t.csv"
        code = main(["solve", "--config", cfg("toy.yaml"), "--out", str(tmp_path),
                     "--trace", str(trace)])
        assert code == EXIT_OK
        rep = json.loads((tmp_path / "report.json").read_text())
        assert rep["converged"] and rep["active_set"] == [1]
        assert rep["nu_star"][0] <= 1e-6
        assert rep["nu_star"][1] == pytest.approx(2.72, abs=0.05)
        assert rep["f_star"] == pytest.approx(0.73, abs=0.02)
        rows = list(csv.DictReader(open(trace)))
        assert len(rows) == rep["iterations"] + 1
        assert json.loads(capsys.readouterr().out) == rep

    def test_damp1a(self, capsys):
        assert main(["solve", "--config", cfg("damp1-a.yaml")]) == EXIT_OK
        rep = json.loads(capsys.readouterr().out)
        assert rep["nu_star"][0] == pytest.approx(4.4, abs=0.2)
        assert rep["f_star"] == pytest.approx(3.6, abs=0.1)
        assert rep["converged"] and rep["strict_min"]

    def test_stopping_override(self, capsys):
        assert main(["solve", "--config", cfg("damp1-a.yaml"), "--stopping", "foda"]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["stopping"] == "foda"

    def test_not_converged(self, tmp_path, capsys):
        p = write_yaml(tmp_path, "problem: {preset: damp1-a}\noptimizer: {iter_max: 2}\n")
        assert main(["solve", "--config", p]) == EXIT_NOT_CONVERGED

    def test_never_stable(self, capsys):
        assert main(["solve", "--config", cfg("never_stable.yaml")]) == EXIT_ERROR
        err = capsys.readouterr().err
        assert "never stable" in err and ": 1" in err

    def test_bad_config(self, tmp_path, capsys):
        p = write_yaml(tmp_path, "problem: {preset: toy}\noptimizer: {method: x}\n")
        assert main(["solve", "--config", p]) == EXIT_ERROR
        assert "optimizer" in capsys.readouterr().err

    def test_unwritable_output(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("")
        code = main(["solve", "--config", cfg("toy.yaml"), "--out", str(blocker / "sub")])
        assert code == EXIT_ERROR


class TestCheck:
    @pytest.mark.parametrize("name", ["toy.yaml", "damp1-a.yaml"])
    def test_passes(self, name, capsys):
        assert main(["check", "--config", cfg(name)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "FAIL" not in out and "all checks passed" in out

    def test_corrupted_gradient(self, monkeypatch, capsys):
        orig = DampingObjective.eval_grad
        monkeypatch.setattr(DampingObjective, "eval_grad", lambda self, nu: 1.01 * orig(self, nu))
        assert main(["check", "--config", cfg("damp1-a.yaml")]) == EXIT_CHECK_FAILED
        out = capsys.readouterr().out
        assert "FAIL  gradient_fd" in out


class TestBench:
    def test_empty_suite(self, capsys):
        assert main(["bench", "--suite", ""]) == EXIT_ERROR
        assert "usage" in capsys.readouterr().err

    def test_unknown_suite(self, capsys):
        assert main(["bench", "--suite", "table9"]) == EXIT_ERROR

    def test_small_table3(self, tmp_path, capsys):
        code = main(["bench", "--suite", "table3", "--out", str(tmp_path), "--max-n", "20"])
        assert code == EXIT_OK
        rows = list(csv.DictReader(open(tmp_path / "bench_table3.csv")))
        ok = [r for r in rows if r["status"] == "ok"]
        assert ok and all(r["reconciled"] == "True" for r in ok)
        row = next(r for r in ok if r["problem"] == "damp1-b")
        assert float(row["f_star"]) == pytest.approx(21, abs=1)
        assert float(row["nu_star"].strip("[]")) == pytest.approx(18.9, abs=1)


class TestExport:
    def test_toy_round_trip(self, tmp_path, capsys):
        assert main(["export", "--config", cfg("toy.yaml"), "--out", str(tmp_path)]) == EXIT_OK
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["k_d"] == 2 and man["n"] == 2
        K = sio.mmread(str(tmp_path / man["files"]["K"]["file"]))
        np.testing.assert_array_equal(K, [[1.0, -1.0], [-1.0, 201.0]])

    def test_unwritable(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert main(["export", "--config", cfg("toy.yaml"), "--out", str(blocker)]) == EXIT_ERROR

    def test_missing_dir(self, capsys):
        assert main(["export", "--config", cfg("toy.yaml")]) == EXIT_ERROR


class TestUsage:
    def test_no_command(self, capsys):
        assert main([]) == EXIT_ERROR

    def test_unknown_command(self, capsys):
        assert main(["fly"]) == EXIT_ERROR

    def test_help(self, capsys):
        assert main(["--help"]) == EXIT_OK
        assert "solve" in capsys.readouterr().out
