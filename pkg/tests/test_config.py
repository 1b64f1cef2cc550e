from pathlib import Path

import pytest
import yaml

from instrument_selection.config import PRESETS, RunConfig, Settings, load_run_config
from instrument_selection.errors import ConfigError
from instrument_selection.selection import CostKind, Strategy


def write_yaml(path: Path, data) -> Path:
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


@pytest.fixture
def clean_env(monkeypatch, tmp_path):
    for key in ("SIS_CONFIG_PATH", "SIS_LOG_LEVEL", "SIS_WORKERS", "SIS_OUTPUT_DIR", "SIS_BASE_SEED"):
        monkeypatch.delenv(key, raising=False)
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_defaults_follow_the_main_study(clean_env):
    config = load_run_config()
    assert (config.scenario.n_iv, config.scenario.d_x, config.scenario.d_id) == (30, 50, 15)
    assert config.selection.t_max == 6
    assert config.selection.max_per_round == 3
    assert config.selection.cost_kind is CostKind.LOG
    assert config.selection.epsilon == 0.05
    assert config.selection.delta == 0.3
    assert config.selection.n_per_experiment == 1000
    assert config.n_runs == 250
    assert config.strategies == [Strategy.SIS, Strategy.RANDOM, Strategy.IDEAL]


def test_yaml_sections_are_applied(clean_env):
    path = write_yaml(clean_env / "run.yaml", {
        "logger": {"level": "debug"},
        "scenario": {"n_iv": 8, "d_x": 10, "d_id": 3},
        "selection": {"t_max": 2, "cost_kind": "linear", "epsilon": 0},
        "harness": {"n_runs": 4, "strategies": ["random", "sis", "sis"], "norm_provider": "oracle_noisy:0.1"},
    })
    config = load_run_config(path)
    assert config.log_level == "DEBUG"
    assert config.scenario.d_x == 10
    assert config.selection.cost_kind is CostKind.LINEAR
    assert config.selection.epsilon == 0.0
    assert config.selection.max_per_round == 3
    assert config.n_runs == 4
    assert config.strategies == [Strategy.SIS, Strategy.RANDOM]
    assert config.norm_provider == "oracle_noisy:0.1"


def test_precedence_yaml_then_environment_then_overrides(clean_env, monkeypatch):
    path = write_yaml(clean_env / "run.yaml", {"harness": {"base_seed": 5, "workers": 2, "output_dir": "yaml-out"}})
    monkeypatch.setenv("SIS_BASE_SEED", "9")
    env = Settings()
    config = load_run_config(path, env=env)
    assert config.base_seed == 9
    assert config.workers == 2
    assert config.output_dir == Path("yaml-out")

    overridden = load_run_config(path, env=env, overrides={"base_seed": 11, "workers": None, "noiseless": True})
    assert overridden.base_seed == 11
    assert overridden.workers == 2
    assert overridden.noiseless


def test_presets(clean_env):
    assert set(PRESETS) == {"main-study", "wide-study", "dense-study"}
    wide = load_run_config(preset="wide-study")
    assert wide.scenario.d_x == 150
    dense = load_run_config(preset="dense-study")
    assert (dense.scenario.d_id, dense.selection.max_per_round) == (20, 4)
    path = write_yaml(clean_env / "run.yaml", {"harness": {"n_runs": 3}})
    assert load_run_config(path, preset="wide-study").n_runs == 3


@pytest.mark.parametrize("data, key", [
    ({"scenario": {"d_id": 40}}, "scenario"),
    ({"selection": {"t_max": 0}}, "selection.t_max"),
    ({"harness": {"n_runs": 0}}, "n_runs"),
    ({"harness": {"strategies": []}}, "strategies"),
    ({"harness": {"strategies": ["greedy"]}}, "strategies"),
    ({"harness": {"norm_provider": "concorr"}}, "norm_provider"),
    ({"harness": {"surprise": 1}}, "surprise"),
    ({"logger": {"level": "chatty"}}, "log_level"),
])
def test_invalid_values_name_the_key(clean_env, data, key):
    path = write_yaml(clean_env / "run.yaml", data)
    with pytest.raises(ConfigError, match=key):
        load_run_config(path)


def test_file_level_errors(clean_env):
    with pytest.raises(ConfigError, match="cannot read"):
        load_run_config(clean_env / "missing.yaml")
    with pytest.raises(ConfigError, match="unknown section"):
        load_run_config(write_yaml(clean_env / "extra.yaml", {"plotting": {}}))
    (clean_env / "list.yaml").write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="mapping"):
        load_run_config(clean_env / "list.yaml")
    with pytest.raises(ConfigError, match="unknown preset"):
        load_run_config(preset="huge-study")


def test_run_config_is_frozen():
    config = RunConfig()
    with pytest.raises(Exception):
        config.n_runs = 3
