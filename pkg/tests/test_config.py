import json

import pytest

from semidepth import config
from semidepth.errors import ConfigError
from semidepth.losses import LossWeights


def test_defaults_validate_and_build():
    cfg = config.load()
    assert cfg == config.DEFAULTS
    assert config.build_weights(cfg) == LossWeights()
    adam = config.build_adam(cfg)
    assert adam.total_steps == 3000 and adam.lr0 == 0.02
    assert config.build_eval(cfg).crop == "garg"
    assert config.build_scene_spec(cfg).width == 128


def test_file_then_overrides_precedence(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 4, "adam": {"lr0": 0.5, "total_steps": 100}}))
    cfg = config.load(path, {"adam": {"lr0": 0.1, "total_steps": None}})
    assert cfg["seed"] == 4 and cfg["adam"]["lr0"] == 0.1 and cfg["adam"]["total_steps"] == 100
    assert cfg["adam"]["beta1"] == 0.9


@pytest.mark.parametrize("bad", [
    {"weights": {"lambda3": -1.0}},
    {"weights": {"gamma": 1.0}},
    {"adam": {"total_steps": 0}},
    {"adam": {"start_fractions": [0.1, 0.2]}},
    {"eval": {"crop": "eigen"}},
    {"eval": {"depth_floor": 100.0}},
    {"lidar": {"offset": [1, 2]}},
    {"scene": {"width": 8}},
])
def test_invalid_configs_raise(tmp_path, bad):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(bad))
    with pytest.raises(ConfigError):
        config.load(path)


def test_unreadable_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        config.load(tmp_path / "missing.json")


def test_scene_seed_follows_master_seed():
    cfg = config.load(overrides={"seed": 9})
    assert config.build_scene_spec(cfg).seed == 9
    cfg = config.load(overrides={"seed": 9, "scene": {"seed": 2, "preset": "plane"}})
    spec = config.build_scene_spec(cfg)
    assert spec.seed == 2 and len(spec.layout) == 1
