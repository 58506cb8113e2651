import numpy as np
import pytest
import yaml

from spiketrack.config import dump_config, from_dict, load_config
from spiketrack.params import load_weights, save_weights


def test_defaults_and_presets():
    cfg = load_config()
    assert cfg.tracker.update_interval == 25 and cfg.tracker.update_threshold == 0.7
    las = load_config(preset="lasot")
    assert (las.tracker.update_interval, las.tracker.update_threshold) == (40, 0.8)


def test_yaml_round_trip(tmp_path):
    cfg = from_dict({"model": {"depths": [1, 1, 1, 1], "channels": [4, 4, 8, 8], "mrm": {"loops": 2}},
                     "tracker": {"crop_size": 96, "update_interval": 7}, "seed": 3})
    p = tmp_path / "c.yaml"
    p.write_text(dump_config(cfg))
    back = load_config(p)
    assert back.model == cfg.model and back.tracker == cfg.tracker and back.seed == 3
    assert back.model.mrm.loops == 2


def test_bad_config(tmp_path):
    with pytest.raises(ValueError):
        from_dict({"modle": {}})
    with pytest.raises(ValueError):
        from_dict({}, preset="fast")
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.yaml")
    with pytest.raises(TypeError):
        from_dict(yaml.safe_load("model: {widths: [1]}"))


def test_weights_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    params = {"b.weight": rng.normal(size=(3, 2)), "a.bias": rng.normal(size=4), "s.theta": np.zeros(1)}
    save_weights(params, tmp_path / "w", {"note": "x"})
    back, meta = load_weights(tmp_path / "w")
    assert meta["note"] == "x"
    assert set(back) == set(params)
    for k in params:
        assert back[k].shape == params[k].shape
        assert np.array_equal(back[k], params[k].astype("<f4").astype(np.float64))


def test_weights_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_weights(tmp_path / "none")
