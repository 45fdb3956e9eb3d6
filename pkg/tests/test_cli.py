import json

import numpy as np
import pytest

from vsbt import cli


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def series(tmp_path):
    path = tmp_path / "e1.csv"
    assert run("generate", "--experiment1", "--seed", 7, "-o", path) == 0
    return path


class TestGenerate:
    def test_experiment1_rows(self, series):
        lines = series.read_text().splitlines()
        assert lines[0] == "x" and len(lines) == 76

    def test_sine_rows(self, tmp_path):
        path = tmp_path / "s.csv"
        assert run("generate", "--sine", "--n", 100, "--seed", 3, "-o", path) == 0
        assert len(cli.read_series(path)) == 100

    def test_same_seed_same_file(self, tmp_path, series):
        again = tmp_path / "again.csv"
        run("generate", "--experiment1", "--seed", 7, "-o", again)
        assert again.read_bytes() == series.read_bytes()

    def test_env_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "out"))
        assert run("generate", "--sine", "--seed", 1) == 0
        assert (tmp_path / "out" / "sine_seed1.csv").is_file()


class TestReadSeries:
    def test_header_optional(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("1.5\n2\n\n-3e0\n")
        np.testing.assert_array_equal(cli.read_series(path), [1.5, 2.0, -3.0])

    @pytest.mark.parametrize("text", ["x\n1\nfoo\n", "x\n", "1,2\n3,4\n", "1\nnan\n"])
    def test_malformed(self, tmp_path, text):
        path = tmp_path / "bad.csv"
        path.write_text(text)
        with pytest.raises(cli.InputError):
            cli.read_series(path)


class TestFit:
    def test_writes_results_and_reports(self, tmp_path, series):
        out = tmp_path / "r.json"
        code = run("fit", series, "-o", out, "--d-max", 3, "--max-sweeps", 20, "--report-dir", tmp_path / "rep")
        assert code in (cli.EXIT_OK, cli.EXIT_MAX_SWEEPS)
        data = json.loads(out.read_text())
        assert data["schema_version"] == 1
        assert data["manifest"]["settings"]["d_max"] == 3
        assert data["manifest"]["input_sha256"]
        assert len(data["trace"]) <= 20
        assert (tmp_path / "rep" / "segmentation.svg").is_file()

    def test_exit_code_tracks_convergence(self, tmp_path, series):
        assert run("fit", series, "-o", tmp_path / "a.json", "--d-max", 2, "--max-sweeps", 1, "--tol", 1e-12) == cli.EXIT_MAX_SWEEPS
        assert run("fit", series, "-o", tmp_path / "b.json", "--d-max", 2, "--tol", "inf") == cli.EXIT_OK

    def test_deterministic(self, tmp_path, series):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run("fit", series, "-o", a, "--d-max", 3, "--max-sweeps", 30)
        run("fit", series, "-o", b, "--d-max", 3, "--max-sweeps", 30)
        assert a.read_bytes() == b.read_bytes()

    def test_precedence(self, tmp_path, series):
        config = tmp_path / "c.json"
        config.write_text(json.dumps({"d_max": 3, "split_prob": 0.3, "max_sweeps": 2}))
        out = tmp_path / "r.json"
        run("fit", series, "--config", config, "--d-max", 2, "-o", out)
        data = json.loads(out.read_text())
        assert data["hyper"]["d_max"] == 2
        assert data["hyper"]["split_prob"][0] == 0.3
        assert len(data["trace"]) == 2

    def test_full_hyper_config(self, tmp_path, series):
        from vsbt.model import Hyperparameters

        hyper = Hyperparameters.default(75, d_max=2, alpha=0.9).to_dict()
        hyper["gate_mean"][0] = [1.0, -30.0]
        config = tmp_path / "h.json"
        config.write_text(json.dumps({**hyper, "max_sweeps": 2}))
        out = tmp_path / "r.json"
        run("fit", series, "--config", config, "--alpha", 0.6, "-o", out)
        data = json.loads(out.read_text())
        assert data["hyper"]["gate_mean"][0] == [1.0, -30.0]
        assert data["hyper"]["alpha"] == [0.6] * 4

    def test_too_short_for_depth(self, series, capsys):
        assert run("fit", series, "--d-max", 7) == cli.EXIT_INPUT
        assert "needs at least 128" in capsys.readouterr().err

    def test_fixed_splitting_deep_tree_allowed(self, tmp_path, series):
        out = tmp_path / "f.json"
        code = run("fit", series, "--fixed-splitting", "--d-max", 10, "--n-models", 32, "--max-sweeps", 3, "-o", out)
        assert code in (cli.EXIT_OK, cli.EXIT_MAX_SWEEPS)
        assert json.loads(out.read_text())["mode"] == "fsbt-emulation"

    def test_missing_input(self, tmp_path):
        assert run("fit", tmp_path / "nope.csv") == cli.EXIT_INPUT


class TestReport:
    @pytest.fixture
    def results(self, tmp_path, series):
        out = tmp_path / "r.json"
        run("fit", series, "-o", out, "--d-max", 3, "--max-sweeps", 10)
        return out

    def test_rerun_is_byte_identical(self, tmp_path, results):
        run("report", results, "--out-dir", tmp_path / "a")
        run("report", results, "--out-dir", tmp_path / "b")
        for name in ("segmentation.csv", "segmentation.svg"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_schema_mismatch(self, tmp_path, results, capsys):
        data = json.loads(results.read_text())
        data["schema_version"] = 99
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(data))
        assert run("report", bad, "--out-dir", tmp_path) == cli.EXIT_INPUT
        assert "schema_version" in capsys.readouterr().err


class TestNumericalFailure:
    def test_exit_code(self, tmp_path, series, monkeypatch):
        from vsbt.inference import DivergenceError

        def boom(*args, **kwargs):
            raise DivergenceError("sweep 1: synthetic failure")

        monkeypatch.setattr("vsbt.estimator.fit", boom)
        assert run("fit", series, "--d-max", 2, "-o", tmp_path / "r.json") == cli.EXIT_NUMERICAL
