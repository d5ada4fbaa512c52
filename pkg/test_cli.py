#!/usr/bin/env python3
"""
Tests for the command line entry point.
"""

import json
import math

import pytest

import config
from main import EXIT_INPUT, EXIT_OK, EXIT_SOLVER, main


@pytest.fixture(autouse=True)
def clean_settings(monkeypatch, tmp_path):
    for name in ("LOG_LEVEL", "FIT_TOL", "FIT_MAX_ITERS", "SEED", "WORKERS", "OUTPUT_DIR"):
        monkeypatch.delenv(config.env_name(name), raising=False)
    monkeypatch.chdir(tmp_path)
    config.get_settings.cache_clear()
    yield
    config.get_settings.cache_clear()


def write(path, data):
    path.write_text(json.dumps(data))
    return str(path)


@pytest.fixture
def files(tmp_path):
    support = ["a", "b"]
    return {
        "p": write(tmp_path / "p.json", {"support": support, "probs": [0.5, 0.5]}),
        "q": write(tmp_path / "q.json", {"support": support, "probs": [0.25, 0.75]}),
        "q1": write(tmp_path / "q1.json", {"support": support, "probs": [0.6, 0.4]}),
        "q2": write(tmp_path / "q2.json", {"support": support, "probs": [0.2, 0.8]}),
        "one": write(tmp_path / "one.json", {"support": support, "values": [1.0, 1.0]}),
        "zero": write(tmp_path / "zero.json", {"support": support, "values": [0.0, 0.0]}),
    }


def run(capsys, argv):
    code = main(argv)
    lines = [line for line in capsys.readouterr().out.splitlines() if line.strip()]
    return code, [json.loads(line) for line in lines]


def test_divergence(capsys, files):
    code, (out,) = run(capsys, ["divergence", "--p", files["p"], "--q", files["q"], "--alpha", "inf"])
    assert code == EXIT_OK
    assert out["D_alpha_bits"] == 1.0 and out["d_alpha"] == 2.0
    code, (out,) = run(capsys, ["divergence", "--p", files["p"], "--q", files["q"], "--alpha", "2"])
    assert out["D_alpha_bits"] == pytest.approx(math.log2(4 / 3), abs=1e-12)


def test_entropy(capsys, files):
    code, (out,) = run(capsys, ["entropy", "--p", files["q"], "--alpha", "2"])
    assert code == EXIT_OK
    assert out["bits"] == pytest.approx(-math.log2(0.625), abs=1e-12)


def test_fit(capsys, files, tmp_path):
    a = write(tmp_path / "a.json", {"support": ["a", "b"], "probs": [0.9, 0.1]})
    b = write(tmp_path / "b.json", {"support": ["a", "b"], "probs": [0.1, 0.9]})
    code, (out,) = run(capsys, ["fit", "--target", files["p"], "--sources", a, b, "--alpha", "2"])
    assert code == EXIT_OK
    assert out["weights"] == pytest.approx([0.5, 0.5], abs=1e-6)
    assert out["converged"] is True


def test_fit_non_convergence_exit_code(capsys, files):
    argv = ["fit", "--target", files["p"], "--sources", files["q1"], files["q"], "--alpha", "3",
            "--tol", "1e-300", "--max-iters", "1"]
    code, (out,) = run(capsys, argv)
    assert code == EXIT_SOLVER
    assert out["converged"] is False


def test_combine(capsys, files, tmp_path):
    out_path = tmp_path / "h.json"
    argv = ["combine", "--sources", files["q1"], files["q2"], "--hyps", files["one"], files["zero"],
            "--rule", "dw", "--weights", "0.5,0.5", "--out", str(out_path)]
    code, (out,) = run(capsys, argv)
    assert code == EXIT_OK
    assert out["values"] == pytest.approx([0.75, 1 / 3])
    assert json.loads(out_path.read_text()) == out

    argv = ["combine", "--sources", files["q1"], files["q2"], "--hyps", files["one"], files["zero"],
            "--rule", "rnorm", "--r", "inf"]
    code, (out,) = run(capsys, argv)
    assert out["values"] == [1.0, 0.0]


def test_lowerbound(capsys, tmp_path):
    support = [f"x{i}" for i in range(10)]
    q = write(tmp_path / "q.json", {"support": support, "probs": [0.1] * 10})
    h = write(tmp_path / "h.json", {"support": support, "values": [1.0] + [0.0] * 9})
    f = write(tmp_path / "f.json", {"support": support, "values": [0.0] * 10})
    argv = ["lowerbound", "--q", q, "--h", h, "--f", f, "--alpha", "2", "--delta-alpha", "1"]
    code, (out,) = run(capsys, argv)
    assert code == EXIT_OK
    assert out["realized_loss"] == pytest.approx(math.sqrt(0.1), abs=1e-12)
    assert out["realized_loss"] >= out["tightness_floor"] - 1e-9
    assert sum(out["p"]["probs"]) == pytest.approx(1.0, abs=1e-12)


def test_robust_fit(capsys, files):
    argv = ["robust-fit", "--sources", files["q1"], files["q2"], "--hyps", files["one"], files["zero"],
            "--f", files["one"], "--eta", "0.01"]
    code, (out,) = run(capsys, argv)
    assert code in (EXIT_OK, EXIT_SOLVER)
    assert out["epsilon"] == 1.0
    assert out["converged"] is (code == EXIT_OK)


def test_verify_prints_reports_and_summary(capsys):
    code, (reports, summary) = run(capsys, ["verify", "--suite", "lemma11", "--trials", "5", "--seed", "1"])
    assert code == EXIT_OK
    assert len(reports) == 5
    assert summary == {"suite": "lemma11", "trials": 5, "violations": 0}


def test_experiment_gaussian_csv(capsys, tmp_path):
    out_path = tmp_path / "rows.csv"
    argv = ["experiment", "gaussian", "--grid", "16", "--lambda-steps", "5", "--n-train", "200",
            "--n-test", "200", "--out", str(out_path)]
    code, (summary,) = run(capsys, argv)
    assert code == EXIT_OK
    assert "rows" not in summary
    assert len(out_path.read_text().splitlines()) == 6


def test_experiment_gaussian_save(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv(config.env_name("output_dir"), str(tmp_path / "results"))
    argv = ["experiment", "gaussian", "--grid", "16", "--lambda-steps", "3", "--seed", "5", "--save"]
    code, _ = run(capsys, argv)
    assert code == EXIT_OK
    assert (tmp_path / "results" / "gaussian_seed5.csv").exists()


def test_invalid_inputs_exit_one(capsys, files, tmp_path):
    bad = write(tmp_path / "bad.json", {"support": ["a", "b"], "probs": [0.7, 0.7]})
    assert main(["divergence", "--p", bad, "--q", files["q"], "--alpha", "2"]) == EXIT_INPUT
    assert main(["divergence", "--p", str(tmp_path / "missing.json"), "--q", files["q"], "--alpha", "2"]) == EXIT_INPUT
    (tmp_path / "broken.json").write_text("{not json")
    assert main(["entropy", "--p", str(tmp_path / "broken.json"), "--alpha", "2"]) == EXIT_INPUT
    assert main(["divergence", "--p", files["p"], "--q", files["q"], "--alpha", "abc"]) == EXIT_INPUT
    assert main(["combine", "--sources", files["q1"], "--hyps", files["one"], "--rule", "dw"]) == EXIT_INPUT
    assert main(["experiment", "gaussian", "--grid", "15"]) == EXIT_INPUT
    assert main(["verify", "--suite", "lemma1", "--trials", "0"]) == EXIT_INPUT


def test_invalid_settings_exit_one(monkeypatch, files):
    monkeypatch.setenv(config.env_name("workers"), "zero")
    assert main(["divergence", "--p", files["p"], "--q", files["q"], "--alpha", "2"]) == EXIT_INPUT
