import json

import numpy as np
import pandas as pd
import pytest
import yaml

from instrument_selection.harness import FINITE_SAMPLE_COLUMNS, FINITE_SAMPLE_SEED
from instrument_selection.main import build_parser, main
from instrument_selection.report import ROUND_COLUMNS
from instrument_selection.scenario import Scenario, generate_scenario


@pytest.fixture
def workdir(monkeypatch, tmp_path):
    for key in ("SIS_CONFIG_PATH", "SIS_LOG_LEVEL", "SIS_WORKERS", "SIS_OUTPUT_DIR", "SIS_BASE_SEED"):
        monkeypatch.delenv(key, raising=False)
    monkeypatch.chdir(tmp_path)
    config = {
        "scenario": {"n_iv": 8, "d_x": 10, "d_id": 3},
        "selection": {"t_max": 3, "n_per_experiment": 200},
        "harness": {"n_runs": 2, "output_dir": "out"},
    }
    (tmp_path / "sis.config.yaml").write_text(yaml.safe_dump(config), encoding="utf-8")
    return tmp_path


def test_parser_lists_every_command():
    parser = build_parser()
    for command in ("generate", "run", "sweep", "finite-sample", "report"):
        args = parser.parse_args([command])
        assert args.cmd == command
    with pytest.raises(SystemExit):
        parser.parse_args(["plot"])


def test_generate_reads_the_default_config_file(workdir, capsys):
    assert main(["generate", "--seed", "4"]) == 0
    scenario = Scenario.from_dict(json.loads(capsys.readouterr().out))
    assert (scenario.n_iv, scenario.d_x, scenario.d_id, scenario.seed) == (8, 10, 3, 4)
    scenario.check_invariants()


def test_generate_noiseless_to_file(workdir):
    assert main(["generate", "--noiseless", "--out-file", "scenario.json"]) == 0
    scenario = Scenario.load(workdir / "scenario.json")
    assert scenario.is_noiseless


def test_run_prints_trajectory_and_events(workdir, capsys):
    assert main(["run", "--strategy", "random", "--events", "events.json"]) == 0
    trajectory = json.loads(capsys.readouterr().out)
    assert trajectory["strategy"] == "random"
    assert len(trajectory["rounds"]) == 3
    assert [len(s) for s in trajectory["chosen_sets"]] == [3, 3, 2]

    events = json.loads((workdir / "events.json").read_text(encoding="utf-8"))
    kinds = [e["event_type"] for e in events["events"]]
    assert kinds[0] == "run_started"
    assert kinds[-1] == "run_finished"
    assert kinds.count("experiment_run") == 3


def test_run_on_a_saved_scenario_is_reproducible(workdir, capsys):
    assert main(["generate", "--seed", "2", "--out-file", "scenario.json"]) == 0
    assert main(["run", "--seed", "2", "--scenario", "scenario.json"]) == 0
    from_file = json.loads(capsys.readouterr().out)
    assert main(["run", "--seed", "2"]) == 0
    generated = json.loads(capsys.readouterr().out)
    assert from_file == generated
    assert from_file["strategy"] == "sis"


def test_sweep_and_report(workdir):
    assert main(["sweep", "--n-runs", "2", "--strategies", "ideal", "sis"]) == 0
    rounds = pd.read_csv(workdir / "out" / "rounds.csv")
    assert list(rounds.columns) == ROUND_COLUMNS
    assert set(rounds["strategy"]) == {"sis", "ideal"}
    assert set(rounds["run_seed"]) == {0, 1}

    summary_path = workdir / "out" / "summary.csv"
    written = summary_path.read_bytes()
    summary_path.unlink()
    assert main(["report"]) == 0
    assert summary_path.read_bytes() == written


def test_sweep_with_failures_exits_nonzero(workdir):
    (workdir / "failing.yaml").write_text(yaml.safe_dump({
        "scenario": {"n_iv": 8, "d_x": 10, "d_id": 3},
        "selection": {"n_per_experiment": 2},
        "harness": {"n_runs": 1, "strategies": ["random"]},
    }), encoding="utf-8")
    assert main(["sweep", "--config", "failing.yaml", "--out", "failed"]) == 1
    failures = json.loads((workdir / "failed" / "failures.json").read_text(encoding="utf-8"))
    assert [f["strategy"] for f in failures] == ["random"]


def test_finite_sample_writes_csv(workdir):
    assert main(["finite-sample", "--n", "100", "--n-runs", "3", "--designs", "all_at_once", "singletons"]) == 0
    frame = pd.read_csv(workdir / "out" / "finite_sample.csv")
    assert list(frame.columns) == FINITE_SAMPLE_COLUMNS
    assert set(frame["estimator"]) == {"all_at_once", "singletons"}
    assert len(frame) == 2 * 4


def test_finite_sample_defaults_to_the_reference_scenario(workdir):
    argv = ["finite-sample", "--n", "100", "--n-runs", "2", "--designs", "all_at_once"]
    assert main(argv) == 0
    frame = pd.read_csv(workdir / "out" / "finite_sample.csv")
    truth = frame.sort_values("component")["truth"].to_numpy()[1:]
    np.testing.assert_allclose(truth, generate_scenario(3, 3, 3, FINITE_SAMPLE_SEED).beta)

    assert main(argv + ["--seed", "5"]) == 0
    frame = pd.read_csv(workdir / "out" / "finite_sample.csv")
    truth = frame.sort_values("component")["truth"].to_numpy()[1:]
    np.testing.assert_allclose(truth, generate_scenario(3, 3, 3, 5).beta)


@pytest.mark.parametrize("argv", [
    ["sweep", "--config", "missing.yaml"],
    ["sweep", "--workers", "0"],
    ["run", "--log-level", "chatty"],
])
def test_configuration_errors_exit_with_one(workdir, argv):
    assert main(argv) == 1


def test_malformed_environment_exits_with_one(workdir, monkeypatch):
    monkeypatch.setenv("SIS_WORKERS", "many")
    assert main(["generate"]) == 1


def test_command_errors_exit_with_one(workdir):
    assert main(["report", "--rounds", "nowhere.csv"]) == 1
    assert main(["finite-sample", "--d-x", "2", "--d-z", "3"]) == 1


def test_malformed_inputs_exit_with_one(workdir):
    (workdir / "norm.txt").write_text("not-a-number\n", encoding="utf-8")
    (workdir / "external.yaml").write_text(yaml.safe_dump({
        "scenario": {"n_iv": 8, "d_x": 10, "d_id": 3},
        "harness": {"n_runs": 1, "norm_provider": "external:norm.txt"},
    }), encoding="utf-8")
    assert main(["run", "--config", "external.yaml"]) == 1
    assert main(["sweep", "--config", "external.yaml", "--out", "external"]) == 1

    (workdir / "partial.csv").write_text("run_seed,strategy\n0,sis\n", encoding="utf-8")
    assert main(["report", "--rounds", "partial.csv"]) == 1
