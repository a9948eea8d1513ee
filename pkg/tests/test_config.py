import json

import pytest

from clamlab.config import (ConfigError, ExperimentConfig, LamSettings,
                            PolicySettings, config_from_dict, load_config,
                            save_config)


def test_defaults_are_valid():
    cfg = ExperimentConfig()
    assert cfg.env == "reacher-2link"
    assert cfg.method == "clam"
    assert cfg.lam == LamSettings()
    assert cfg.policy == PolicySettings()


def test_from_dict_applies_overrides():
    cfg = config_from_dict({"env": "point-reach", "n_labeled": 10,
                            "lam": {"beta": 0.5}, "policy": {"steps": 7}})
    assert cfg.env == "point-reach"
    assert cfg.n_labeled == 10
    assert cfg.lam.beta == 0.5
    assert cfg.lam.steps == 2000  # untouched defaults stay
    assert cfg.policy.steps == 7


def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError, match="unknown keys"):
        config_from_dict({"environment": "point-reach"})


def test_unknown_nested_key_rejected():
    with pytest.raises(ConfigError, match=r"config\.lam"):
        config_from_dict({"lam": {"depth": 3}})
    with pytest.raises(ConfigError, match=r"config\.policy"):
        config_from_dict({"policy": {"width": 3}})


def test_bad_values_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"env": "walker"})
    with pytest.raises(ConfigError):
        config_from_dict({"method": "dreamer"})
    with pytest.raises(ConfigError):
        config_from_dict({"labeled_policy": "optimal"})
    with pytest.raises(ConfigError):
        config_from_dict({"n_unlabeled": 0})


def test_non_object_sections_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"lam": [1, 2]})


def test_hash_is_stable_and_sensitive():
    a, b = ExperimentConfig(), ExperimentConfig()
    assert a.config_hash() == b.config_hash()
    c = ExperimentConfig(seed=1)
    assert a.config_hash() != c.config_hash()


def test_canonical_json_round_trip(tmp_path):
    cfg = ExperimentConfig(env="point-reach", seed=3)
    p = tmp_path / "c.json"
    save_config(p, cfg)
    again = load_config(p)
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()
    # canonical form is sorted and separator-stable
    text = p.read_text().strip()
    assert text == json.dumps(json.loads(text), sort_keys=True,
                              separators=(",", ":"))


def test_invalid_json_raises_config_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(p)
