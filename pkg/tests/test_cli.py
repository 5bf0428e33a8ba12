import json
import math

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from app import commands as cli_commands, create_app


@pytest.fixture
def app(monkeypatch, tmp_path):
    monkeypatch.setenv("ENTDAG_OUTPUT_DIR", str(tmp_path / "outputs"))
    monkeypatch.setenv("ENTDAG_SEED", "123")
    return create_app()


@pytest.fixture
def runner():
    return CliRunner()


def last_json(result):
    return json.loads(result.output.strip().splitlines()[-1])


def read(path):
    return json.loads(path.read_text(encoding="utf-8"))


# --- gen ---
def test_gen_linear_defaults(app, runner, tmp_path):
    out = tmp_path / "data"
    result = runner.invoke(app, ["gen", "--kind", "linear", "--d", "15", "--m", "600", "--noise", "uniform",
                                 "--seed", "123", "--out", str(out)])
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out / "dataset.csv")
    assert frame.shape == (600, 15)
    truth = read(out / "truth.json")
    assert truth["d"] == 15
    assert 15 <= len(truth["edges"]) <= 45
    spec = read(out / "spec.json")
    assert spec["noise_family"] == "uniform" and spec["m"] == 600


def test_gen_is_reproducible(app, runner, tmp_path):
    for name in ("a", "b"):
        runner.invoke(app, ["gen", "--d", "5", "--m", "50", "--seed", "7", "--out", str(tmp_path / name)])
    assert (tmp_path / "a" / "dataset.csv").read_text() == (tmp_path / "b" / "dataset.csv").read_text()


def test_gen_bivariate_default_instance(app, runner, tmp_path):
    out = tmp_path / "biv"
    result = runner.invoke(app, ["gen", "--kind", "bivariate", "--alpha", "0.5", "--sigma-nx", "2",
                                 "--sigma-ny", "1", "--m", "400", "--out", str(out)])
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out / "dataset.csv")
    assert list(frame.columns) == ["X", "Y"]
    assert len(frame) == 400
    assert read(out / "truth.json") == {"d": 2, "edges": [[0, 1]]}
    assert read(out / "spec.json")["seed"] == 123


def test_gen_nonlinear_pinned_variance(app, runner, tmp_path):
    out = tmp_path / "nl"
    result = runner.invoke(app, ["gen", "--kind", "nonlinear", "--noise-variance", "3", "--d", "15", "--m", "600",
                                 "--out", str(out)])
    assert result.exit_code == 0, result.output
    spec = read(out / "spec.json")
    assert spec["kind"] == "nonlinear"
    assert np.allclose(spec["noise_scales"], math.sqrt(3.0))


def test_gen_rejects_bad_combinations_before_writing(app, runner, tmp_path):
    out = tmp_path / "bad"
    result = runner.invoke(app, ["gen", "--kind", "bivariate", "--noise-variance", "2", "--out", str(out)])
    assert result.exit_code == 1
    result = runner.invoke(app, ["gen", "--d", "3", "--in-degree", "5", "--out", str(out)])
    assert result.exit_code == 1
    assert not out.exists()


def test_unknown_choice_is_usage_error(app, runner):
    result = runner.invoke(app, ["gen", "--kind", "cubic"])
    assert result.exit_code == 1


# --- fit / eval ---
@pytest.fixture
def generated(app, runner, tmp_path):
    out = tmp_path / "data"
    result = runner.invoke(app, ["gen", "--d", "4", "--m", "300", "--seed", "1", "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


@pytest.mark.parametrize("loss", ["ls", "entropy"])
def test_fit_writes_outputs(app, runner, generated, tmp_path, loss):
    out = tmp_path / "fit"
    result = runner.invoke(app, ["fit", "--data", str(generated / "dataset.csv"), "--loss", loss, "--out", str(out)])
    assert result.exit_code == 0, result.output
    west = pd.read_csv(out / "west.csv", index_col=0)
    assert west.shape == (4, 4)
    graph = read(out / "graph.json")
    assert graph["d"] == 4
    report = read(out / "report.json")
    assert report["status"] == "ok"
    assert report["acyclic"] is True
    assert report["trace"]


def test_fit_then_eval(app, runner, generated, tmp_path):
    out = tmp_path / "fit"
    runner.invoke(app, ["fit", "--data", str(generated / "dataset.csv"), "--loss", "entropy", "--out", str(out)])
    result = runner.invoke(app, ["eval", "--graph", str(out / "graph.json"), "--truth", str(generated / "truth.json")])
    assert result.exit_code == 0, result.output
    metrics = last_json(result)
    assert set(metrics) == {"shd", "fdr", "tpr", "predicted_edges", "true_edges"}
    assert 0.0 <= metrics["fdr"] <= 1.0 and 0.0 <= metrics["tpr"] <= 1.0
    assert metrics["shd"] >= 0


def test_eval_identity_and_empty(app, runner, tmp_path):
    truth = tmp_path / "truth.json"
    empty = tmp_path / "empty.json"
    truth.write_text(json.dumps({"d": 3, "edges": [[0, 1], [1, 2]]}))
    empty.write_text(json.dumps({"d": 3, "edges": []}))
    same = last_json(runner.invoke(app, ["eval", "--graph", str(truth), "--truth", str(truth)]))
    assert (same["shd"], same["fdr"], same["tpr"]) == (0, 0.0, 1.0)
    none = last_json(runner.invoke(app, ["eval", "--graph", str(empty), "--truth", str(truth)]))
    assert (none["shd"], none["fdr"], none["tpr"]) == (2, 0.0, 0.0)


def test_eval_dimension_mismatch(app, runner, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    a.write_text(json.dumps({"d": 2, "edges": []}))
    b.write_text(json.dumps({"d": 3, "edges": []}))
    assert runner.invoke(app, ["eval", "--graph", str(a), "--truth", str(b)]).exit_code == 2


def test_fit_on_constant_column(app, runner, tmp_path):
    data = tmp_path / "flat.csv"
    rng = np.random.default_rng(0)
    pd.DataFrame({"a": rng.uniform(size=50), "b": rng.uniform(size=50), "const": 1.0}).to_csv(data, index=False)
    out = tmp_path / "fit"
    result = runner.invoke(app, ["fit", "--data", str(data), "--loss", "entropy", "--out", str(out)])
    assert result.exit_code == 2
    report = last_json(result)
    assert report["status"] == "error"
    assert "const" in report["error"]
    assert report["column"] == 2
    assert read(out / "report.json")["status"] == "error"


@pytest.mark.parametrize("error", [ArithmeticError("step overflow"),
                                   OverflowError(34, "Numerical result out of range"),
                                   np.linalg.LinAlgError("singular matrix")])
def test_fit_unexpected_solver_error_writes_report(app, runner, generated, tmp_path, monkeypatch, error):
    def failing_solve(*args, **kwargs):
        raise error

    monkeypatch.setattr(cli_commands, "solve", failing_solve)
    out = tmp_path / "fit"
    result = runner.invoke(app, ["fit", "--data", str(generated / "dataset.csv"), "--out", str(out)])
    assert result.exit_code == 2
    report = read(out / "report.json")
    assert report["status"] == "error"
    assert report["type"] == type(error).__name__
    assert last_json(result)["status"] == "error"


def test_eval_unexpected_error_exits_with_runtime_code(app, runner, tmp_path, monkeypatch):
    graph = tmp_path / "g.json"
    graph.write_text(json.dumps({"d": 2, "edges": [[0, 1]]}))

    def failing_evaluate(*args):
        raise ArithmeticError("boom")

    monkeypatch.setattr(cli_commands, "evaluate", failing_evaluate)
    assert runner.invoke(app, ["eval", "--graph", str(graph), "--truth", str(graph)]).exit_code == 2


def test_fit_missing_file(app, runner, tmp_path):
    result = runner.invoke(app, ["fit", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "fit")])
    assert result.exit_code == 2


def test_fit_invalid_config_is_usage_error(app, runner, generated, tmp_path):
    result = runner.invoke(app, ["fit", "--data", str(generated / "dataset.csv"), "--omega", "-1",
                                 "--out", str(tmp_path / "fit")])
    assert result.exit_code == 1


# --- theory ---
def test_theory_default_instance(app, runner):
    result = runner.invoke(app, ["theory", "--alpha", "0.5", "--sigma-nx", "2", "--sigma-ny", "1"])
    assert result.exit_code == 0, result.output
    verdict = last_json(result)
    assert verdict["ls_causal"] == pytest.approx(5.0)
    assert verdict["ls_anticausal"] == pytest.approx(4.0)
    assert verdict["failure"] is True


def test_theory_equal_variances(app, runner):
    verdict = last_json(runner.invoke(app, ["theory", "--alpha", "0.9", "--sigma-nx", "1", "--sigma-ny", "1"]))
    assert verdict["failure"] is False


def test_theory_consistency_gaussian(app, runner):
    result = runner.invoke(app, ["theory", "--consistency", "--noise", "gaussian", "--m", "100000", "--seed", "3"])
    assert result.exit_code == 0, result.output
    assert last_json(result)["consistency"]["gap"] <= 0.02


def test_theory_invalid_sigma(app, runner):
    assert runner.invoke(app, ["theory", "--sigma-nx", "0"]).exit_code == 1


# --- bench ---
def test_bench_single_cell(app, runner, tmp_path):
    out = tmp_path / "bench"
    result = runner.invoke(app, ["bench", "--kind", "bivariate", "--axis", "alpha", "--values", "0.5",
                                 "--methods", "entropy", "--trials", "1", "--m", "200", "--no-progress",
                                 "--out", str(out)])
    assert result.exit_code == 0, result.output
    results = pd.read_csv(out / "results.csv")
    assert len(results) == 1
    assert {"axis", "trial", "method", "shd", "fdr", "tpr", "seconds", "status"} <= set(results.columns)
    assert results.loc[0, "status"] == "ok"
    summary = read(out / "summary.json")
    assert summary["cells"][0]["n_ok"] == 1


def test_bench_rows_cover_values_trials_methods(app, runner, tmp_path):
    out = tmp_path / "bench"
    result = runner.invoke(app, ["bench", "--axis", "samples", "--values", "100,150", "--d", "4",
                                 "--methods", "ls,entropy", "--trials", "2", "--no-progress", "--out", str(out)])
    assert result.exit_code == 0, result.output
    results = pd.read_csv(out / "results.csv")
    assert len(results) == 2 * 2 * 2
    assert sorted(results["value"].unique()) == [100.0, 150.0]
    assert len(read(out / "summary.json")["cells"]) == 4


def test_bench_config_file(app, runner, tmp_path):
    config = tmp_path / "experiment.json"
    config.write_text(json.dumps({"axis": "sigma_ny", "values": [1.0], "kind": "bivariate", "methods": ["ls"],
                                  "trials": 1, "m": 150}))
    out = tmp_path / "bench"
    result = runner.invoke(app, ["bench", "--config", str(config), "--no-progress", "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert pd.read_csv(out / "results.csv").loc[0, "axis"] == "sigma_ny"


def test_bench_rejects_axis_for_kind(app, runner, tmp_path):
    result = runner.invoke(app, ["bench", "--kind", "linear", "--axis", "alpha", "--out", str(tmp_path / "b")])
    assert result.exit_code == 1


def test_bench_rejects_zero_trials(app, runner, tmp_path):
    result = runner.invoke(app, ["bench", "--trials", "0", "--out", str(tmp_path / "b")])
    assert result.exit_code == 1


@pytest.mark.slow
def test_bench_results_independent_of_jobs(app, runner, tmp_path):
    args = ["bench", "--axis", "variables", "--values", "3,4", "--m", "100", "--methods", "ls",
            "--trials", "2", "--no-progress"]
    runner.invoke(app, args + ["--jobs", "1", "--out", str(tmp_path / "one")])
    runner.invoke(app, args + ["--jobs", "2", "--out", str(tmp_path / "two")])
    one = pd.read_csv(tmp_path / "one" / "results.csv")
    two = pd.read_csv(tmp_path / "two" / "results.csv")
    pd.testing.assert_frame_equal(one.drop(columns="seconds"), two.drop(columns="seconds"))
