import csv
import io
import math

import numpy as np
import pytest

from agnc import cli


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def parse_fitloss(text):
    return {line.split()[0]: float(line.split()[1]) for line in text.splitlines()}


class TestCurves:
    def test_cauchy_and_welsch_weights_at_one(self, capsys):
        code, out, _ = run(["curves", "--kernel", "adaptive", "--alpha", "0", "--alpha=-inf", "--points", "6"], capsys)
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        assert len(rows) == 12
        at_one = {float(r["alpha"]): float(r["weight"]) for r in rows if float(r["eps"]) == 1.0}
        assert at_one[0.0] == pytest.approx(2.0 / 3.0, abs=1e-12)
        assert at_one[-math.inf] == pytest.approx(math.exp(-0.5), abs=1e-12)

    def test_writes_file(self, tmp_path, capsys):
        path = tmp_path / "curves.csv"
        code, out, _ = run(["curves", "--kernel", "amb", "--alpha=-2", "--out", str(path)], capsys)
        assert code == 0 and out == ""
        rows = list(csv.DictReader(path.open()))
        assert len(rows) == 501
        # inside the mode the amb kernel is plain least squares
        assert all(float(r["weight"]) == 1.0 for r in rows if float(r["eps"]) <= math.sqrt(2.0))

    def test_bad_grid_exits_2(self, capsys):
        code, _, err = run(["curves", "--points", "1"], capsys)
        assert code == 2 and "points" in err


class TestFitloss:
    def test_recovers_mb_mode(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        eps = np.linalg.norm(rng.normal(size=(20_000, 3)), axis=1)
        path = tmp_path / "res.txt"
        np.savetxt(path, eps)
        code, out, _ = run(["fitloss", str(path), "--n-e", "3", "--tau", "5"], capsys)
        assert code == 0
        fit = parse_fitloss(out)
        assert abs(fit["mode"] - math.sqrt(2.0)) <= 0.05 * math.sqrt(2.0)
        assert abs(fit["a_star"] - 1.0) <= 0.05
        assert fit["alpha_star"] <= 2.0

    def test_bad_number_reports_line(self, tmp_path, capsys):
        path = tmp_path / "res.txt"
        path.write_text("# residuals\n1.0\nabc\n")
        code, _, err = run(["fitloss", str(path)], capsys)
        assert code == 2 and f"{path}:3:" in err


class TestBenchCommands:
    def test_missing_config_exits_2(self, tmp_path, capsys):
        code, _, err = run(["linreg", "--config", str(tmp_path / "nope.toml")], capsys)
        assert code == 2 and ":0:" in err

    def test_unknown_key_exits_2_with_line(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text("N = 100\ntrials = 1\nbogus = 3\n")
        code, _, err = run(["linreg", "--config", str(path)], capsys)
        assert code == 2 and f"{path}:3:" in err and "bogus" in err

    def test_bad_value_exits_2(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text("N = 100\noutlier_rates = [1.5]\n")
        code, _, _ = run(["linreg", "--config", str(path)], capsys)
        assert code == 2

    def test_bad_argument_exits_2(self, capsys):
        assert run(["linreg", "--seed", "-1"], capsys)[0] == 2
        assert run(["nosuch"], capsys)[0] == 2

    def test_linreg_run(self, tmp_path, capsys):
        path = tmp_path / "small.toml"
        path.write_text('N = 150\ntrials = 2\noutlier_rates = [0.3]\nmethods = ["Welsch", "GNC-AMB"]\nseed = 4\n')
        code, out, _ = run(["linreg", "--config", str(path), "--out", str(tmp_path / "out"), "--methods", "GNC-AMB"], capsys)
        assert code == 0
        rows = list(csv.DictReader((tmp_path / "out" / "rows.csv").open()))
        assert {r["method"] for r in rows} == {"GNC-AMB"} and len(rows) == 2
        assert (tmp_path / "out" / "summary.csv").exists() and (tmp_path / "out" / "stages.csv").exists()
        assert "GNC-AMB" in out

    def test_runtime_failure_exits_1(self, tmp_path, capsys, monkeypatch):
        def boom(cfg):
            raise RuntimeError("disk on fire")

        monkeypatch.setattr(cli, "run_linreg_mc", boom)
        code, _, err = run(["linreg", "--out", str(tmp_path)], capsys)
        assert code == 1 and "disk on fire" in err
