import json

import numpy as np
import pytest

from wci.cli import main
from wci.measures import Dataset, write_csv


@pytest.fixture
def uniform_csv(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "u.csv"
    write_csv(Dataset(*rng.random((3, 300))), path)
    return path


@pytest.fixture
def dependent_csv(tmp_path):
    rng = np.random.default_rng(1)
    v = np.where(rng.random(300) < 0.5, 0.25, 0.75)
    path = tmp_path / "dep.csv"
    write_csv(Dataset(v, v, rng.random(300)), path)
    return path


def report_of(capsys):
    return json.loads(capsys.readouterr().out)["report"]


class TestTestCommand:
    def test_accept(self, uniform_csv, capsys):
        assert main(["test", str(uniform_csv), "--zeta", "0.05"]) == 0
        rep = report_of(capsys)
        assert rep["reject"] is False and rep["d"] == 10

    def test_reject(self, dependent_csv, capsys):
        assert main(["test", str(dependent_csv), "--zeta", "0.05"]) == 1
        assert report_of(capsys)["reject"] is True

    def test_bad_value_names_row(self, tmp_path, capsys):
        f = tmp_path / "bad.csv"
        f.write_text("x,y,z\n0.1,0.2,0.3\n0.2,1.5,0.1\n")
        assert main(["test", str(f)]) == 2
        assert "row 2" in capsys.readouterr().err

    def test_too_few_rows(self, uniform_csv, capsys):
        assert main(["test", str(uniform_csv), "--n", "500"]) == 2

    def test_missing_file(self, tmp_path):
        assert main(["test", str(tmp_path / "none.csv")]) == 2

    def test_no_poissonize_deterministic(self, uniform_csv, capsys):
        args = ["test", str(uniform_csv), "--no-poissonize", "--n", "100", "--seed", "3"]
        main(args)
        first = report_of(capsys)
        main(args)
        assert report_of(capsys) == first and first["N"] == 100

    def test_env_seed_and_flag_priority(self, uniform_csv, capsys, monkeypatch):
        monkeypatch.setenv("WCI_SEED", "17")
        main(["test", str(uniform_csv), "--eta-subsample", "4"])
        env_run = json.loads(capsys.readouterr().out)
        assert env_run["metadata"]["seed"] == 17
        main(["test", str(uniform_csv), "--eta-subsample", "4", "--seed", "18"])
        assert json.loads(capsys.readouterr().out)["metadata"]["seed"] == 18

    def test_out_dir(self, uniform_csv, tmp_path, capsys):
        main(["test", str(uniform_csv), "--out", str(tmp_path / "o")])
        assert json.loads((tmp_path / "o" / "report.json").read_text())["command"] == "test"

    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["test"])
        assert exc.value.code == 2


class TestExperiments:
    def test_risk_files(self, tmp_path, capsys):
        out = tmp_path / "risk"
        code = main(["risk", "--model", "null_independent_uniform", "--n", "100,200", "--reps", "10",
                     "--calib-reps", "100", "--seed", "1", "--out", str(out)])
        assert code == 0
        assert {p.name for p in out.iterdir()} >= {"result.csv", "report.json", "rejection_rate.png", "rejection_rate.csv"}
        assert capsys.readouterr().out.startswith("model,n,")

    def test_risk_jobs_identical(self, tmp_path):
        base = ["risk", "--model", "alt_deterministic_dependence", "--model", "null_four_corner", "--n", "100,150",
                "--reps", "12", "--zeta", "0.02", "--seed", "5"]
        main(base + ["--jobs", "1", "--out", str(tmp_path / "a")])
        main(base + ["--jobs", "4", "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "result.csv").read_bytes() == (tmp_path / "b" / "result.csv").read_bytes()
        assert (tmp_path / "a" / "rejection_rate.csv").read_bytes() == (tmp_path / "b" / "rejection_rate.csv").read_bytes()

    def test_risk_alt_needs_theta(self, capsys):
        assert main(["risk", "--model", "alt_four_corner", "--n", "100", "--reps", "5"]) == 2

    def test_risk_alt_model(self, capsys):
        code = main(["risk", "--model", "alt_four_corner", "--d", "4", "--theta", "0.3", "--nu-seed", "7",
                     "--n", "100", "--reps", "5", "--zeta", "0.05"])
        assert code == 0
        assert "alt_four_corner(d=4,theta=0.3,nu_seed=7)" in capsys.readouterr().out

    def test_empty_grid(self, capsys):
        assert main(["risk", "--n", "", "--reps", "5"]) == 2

    def test_calibrate(self, tmp_path, capsys):
        out = tmp_path / "cal"
        assert main(["calibrate", "--n", "100", "--reps", "100", "--seed", "2", "--out", str(out)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["zeta"] > 0 and payload["d"] == 7
        assert (out / "calibration.csv").exists()

    def test_rate(self, tmp_path, capsys):
        code = main(["rate", "--n", "100,200", "--reps", "10", "--iterations", "2", "--calib-reps", "100",
                     "--eta-subsample", "4", "--out", str(tmp_path / "r")])
        assert code == 0
        assert "slope" in capsys.readouterr().out


class TestVerify:
    def test_ustat(self, capsys):
        assert main(["verify", "ustat"]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_unknown(self, capsys):
        assert main(["verify", "nope"]) == 2

    def test_lowerbound_json(self, tmp_path, capsys):
        assert main(["verify", "lowerbound", "--out", str(tmp_path)]) == 0
        suites = json.loads((tmp_path / "report.json").read_text())["suites"]
        assert all(s["ok"] for s in suites)
