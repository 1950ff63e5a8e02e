import json

import pandas as pd
import pytest

from glfm.main import build_config, build_parser, main

from tests.conftest import MIXED_SPEC, mixed_csv

FAST = ["--iters", "6", "--burn-in", "2", "--seed", "5"]


@pytest.fixture
def inputs(tmp_path):
    table = tmp_path / "table.csv"
    table.write_text(mixed_csv(n_rows=30))
    spec = tmp_path / "table.spec"
    spec.write_text(MIXED_SPEC)
    return table, spec


def _run(command, inputs, out, *extra):
    table, spec = inputs
    return main([command, str(table), "--spec", str(spec), "-o", str(out), *FAST, *extra])


def test_infer_writes_state_and_trace(tmp_path, inputs, capsys):
    out = tmp_path / "infer"
    assert _run("infer", inputs, out) == 0
    state = json.loads((out / "state.json").read_text())
    assert len(state["Z"]) == 30
    assert [spec["name"] for spec in state["specs"]] == ["height", "income", "colour", "grade", "visits"]
    assert len((out / "trace.ndjson").read_text().splitlines()) == 6
    assert "K_plus" in capsys.readouterr().out


def test_same_seed_gives_identical_files(tmp_path, inputs):
    assert _run("infer", inputs, tmp_path / "a") == 0
    assert _run("infer", inputs, tmp_path / "b") == 0
    for name in ("state.json", "trace.ndjson"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_complete_writes_completed_table(tmp_path, inputs):
    out = tmp_path / "complete"
    assert _run("complete", inputs, out) == 0
    original = pd.read_csv(inputs[0], dtype=str, keep_default_na=False)
    completed = pd.read_csv(out / "completed.csv", dtype=str, keep_default_na=False)
    assert list(completed.columns) == list(original.columns)
    assert completed.shape == original.shape
    observed = original != ""
    assert completed.where(observed, "").equals(original)
    assert (completed != "").all().all()
    assert (out / "state.json").exists()


def test_complete_benchmark_mode_writes_only_scores(tmp_path, inputs):
    out = tmp_path / "bench"
    assert _run("complete", inputs, out, "--heldout", "0.2", "--splits", "2") == 0
    scores = json.loads((out / "scores.json").read_text())
    assert len(scores["splits"]) == 2
    assert scores["heldout_fraction"] == 0.2
    assert not (out / "completed.csv").exists()


def test_explore_writes_tables(tmp_path, inputs):
    out = tmp_path / "explore"
    assert _run("explore", inputs, out, "--top", "3", "--grid-points", "20") == 0
    patterns = pd.read_csv(out / "patterns.csv", dtype={"bits": str})
    assert 1 <= len(patterns) <= 3
    assert patterns["probability"].is_monotonic_decreasing
    probs = pd.read_csv(out / "feature_probs.csv")
    assert probs["probability"].between(0, 1).all()
    pdfs = pd.read_csv(out / "pdfs.csv", dtype={"value": str})
    assert set(pdfs["attribute"]) == {"height", "income", "colour", "grade", "visits"}
    assert "empirical" in set(pdfs["pattern"])


def test_explore_reuses_saved_state(tmp_path, inputs):
    assert _run("infer", inputs, tmp_path / "infer") == 0
    out = tmp_path / "explore"
    code = _run("explore", inputs, out, "--state", str(tmp_path / "infer" / "state.json"))
    assert code == 0
    assert not (out / "state.json").exists()
    assert (out / "patterns.csv").exists()


def test_explore_rejects_state_from_another_table(tmp_path, inputs):
    assert _run("infer", inputs, tmp_path / "infer") == 0
    other = tmp_path / "other.csv"
    other.write_text(mixed_csv(n_rows=12))
    table, spec = inputs
    code = main(["explore", str(other), "--spec", str(spec), "-o", str(tmp_path / "x"), *FAST,
                 "--state", str(tmp_path / "infer" / "state.json")])
    assert code == 1


@pytest.mark.parametrize("extra", [["--alpha", "-1"], ["--alpha", "0"], ["--kmax", "0"]])
def test_bad_hyperparameters_are_usage_errors(tmp_path, inputs, extra, capsys):
    assert _run("infer", inputs, tmp_path / "out", *extra) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_heldout_fraction_must_be_below_one(tmp_path, inputs):
    assert _run("complete", inputs, tmp_path / "out", "--heldout", "1.0") == 2


def test_bad_spec_is_usage_error(tmp_path, inputs):
    table, spec = inputs
    spec.write_text("height,real\nincome,weird\n")
    assert _run("infer", inputs, tmp_path / "out") == 2


def test_missing_spec_file_is_runtime_error(tmp_path, inputs):
    table, _ = inputs
    code = main(["infer", str(table), "--spec", str(tmp_path / "nope.spec"), "-o", str(tmp_path / "out")])
    assert code == 1


def test_argparse_errors_exit_with_usage_status():
    with pytest.raises(SystemExit) as excinfo:
        main(["infer"])
    assert excinfo.value.code == 2
    with pytest.raises(SystemExit):
        main(["sample", "x.csv"])


def test_config_file_and_flags(tmp_path, monkeypatch):
    monkeypatch.delenv("GLFM_ALPHA", raising=False)
    config = tmp_path / "glfm.env"
    config.write_text("GLFM_ALPHA=2.5\nGLFM_SIGMA_B2=0.5\n")
    args = build_parser().parse_args(
        ["infer", "t.csv", "--spec", "t.spec", "--config", str(config), "--sigma-b2", "3", "--bias"]
    )
    run = build_config(args)
    assert run.hp.alpha == 2.5
    assert run.hp.sigma_B2 == 3.0
    assert run.hp.bias is True


def test_missing_config_file_is_usage_error(tmp_path, inputs):
    assert _run("infer", inputs, tmp_path / "out", "--config", str(tmp_path / "absent.env")) == 2


def test_infer_resumes_from_saved_state(tmp_path, inputs, monkeypatch):
    monkeypatch.setenv("GLFM_REFRESH_EVERY", "3")
    table, spec = inputs
    args = [str(table), "--spec", str(spec), "--burn-in", "2", "--seed", "5"]
    assert main(["infer", *args, "--iters", "9", "-o", str(tmp_path / "full")]) == 0
    assert main(["infer", *args, "--iters", "3", "-o", str(tmp_path / "head")]) == 0
    code = main(["infer", *args, "--iters", "9", "-o", str(tmp_path / "resumed"),
                 "--state", str(tmp_path / "head" / "state.json")])
    assert code == 0
    assert (tmp_path / "resumed" / "state.json").read_bytes() == (tmp_path / "full" / "state.json").read_bytes()
    full_trace = (tmp_path / "full" / "trace.ndjson").read_text().splitlines()
    assert (tmp_path / "resumed" / "trace.ndjson").read_text().splitlines() == full_trace[3:]
