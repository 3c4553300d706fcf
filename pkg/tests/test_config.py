import pytest

from skillsim.config import ConfigError, PipelineConfig, dump_config, env_overrides, load_config


def test_defaults():
    cfg = load_config(env={})
    assert cfg == PipelineConfig()
    assert cfg.llm.mode == "mock"
    assert (cfg.linkpred.train_frac, cfg.linkpred.dev_frac, cfg.linkpred.test_frac) == (0.85, 0.05, 0.10)
    assert (cfg.skillgen.max_trials, cfg.taskgen.rounds, cfg.taskgen.k) == (3, 3, 5)


def test_yaml_file(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("seed: 7\nllm:\n  mode: replay\nlinkpred:\n  epochs: 20\n")
    cfg = load_config(p, env={})
    assert cfg.seed == 7 and cfg.llm.mode == "replay" and cfg.linkpred.epochs == 20
    assert cfg.linkpred.hidden_dim == 128


def test_precedence_file_env_overrides(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("seed: 1\nlinkpred:\n  epochs: 20\n")
    env = {"SKILLSIM_SEED": "2", "SKILLSIM_LINKPRED__EPOCHS": "30", "OTHER": "x"}
    cfg = load_config(p, env=env, overrides={"seed": 3})
    assert cfg.seed == 3
    assert cfg.linkpred.epochs == 30


def test_env_values_are_typed():
    tree = env_overrides({"SKILLSIM_TASKGEN__DEDUPE_THRESHOLD": "0.9", "SKILLSIM_PATHS__STORE_DIR": ""})
    assert tree == {"taskgen": {"dedupe_threshold": 0.9}, "paths": {"store_dir": None}}


@pytest.mark.parametrize("tree, message", [
    ({"nope": 1}, "unknown config key nope"),
    ({"llm": {"colour": 1}}, "unknown config key llm.colour"),
    ({"llm": 3}, "llm must be a mapping"),
    ({"llm": {"mode": "online"}}, "llm.mode"),
    ({"skillgen": {"max_trials": 0}}, "max_trials"),
    ({"eval": {"systems": ["oracle"]}}, "unknown eval system"),
])
def test_invalid(tree, message):
    with pytest.raises(ConfigError, match=message):
        load_config(env={}, overrides=tree)


def test_unreadable_and_non_mapping(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml", env={})
    p = tmp_path / "list.yaml"
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(p, env={})


def test_dump_roundtrip(tmp_path):
    cfg = load_config(env={}, overrides={"seed": 9, "taskgen": {"k": 2}})
    p = tmp_path / "dump.yaml"
    p.write_text(dump_config(cfg))
    assert load_config(p, env={}) == cfg
