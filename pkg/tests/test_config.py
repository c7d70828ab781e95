import pytest

from batreg.config import (CONFIG_KEYS, ConfigError, RunConfig, build_config, load_config,
                           parse_overrides)


def test_defaults():
    cfg = build_config()
    assert cfg == RunConfig()
    assert cfg.initial_soc() == pytest.approx(0.525)
    assert set(cfg.to_dict()) == set(CONFIG_KEYS)


def test_file_and_overrides(tmp_path):
    f = tmp_path / "c.yaml"
    f.write_text("theta: 80\npi: 20\neta_c: 0.9\n")
    cfg = load_config(f, parse_overrides(["pi=30", "e0=0.4"]))
    assert (cfg.theta, cfg.pi, cfg.eta_c, cfg.e0) == (80.0, 30.0, 0.9, 0.4)
    assert cfg.prices().pi == 30.0 and cfg.battery().eta_c == 0.9


def test_empty_file(tmp_path):
    f = tmp_path / "empty.yaml"
    f.write_text("")
    assert load_config(f) == RunConfig()


@pytest.mark.parametrize("base", [
    {"gamma": 1}, {"theta": "lots"}, {"theta": True}, {"eta_c": 1.5}, {"e0": 0.99},
    {"theta": -1}, {"beta": 0.5},
])
def test_invalid_values(base):
    with pytest.raises(ConfigError):
        build_config(base)


def test_bad_files(tmp_path):
    f = tmp_path / "list.yaml"
    f.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(f)
    f.write_text("theta: [1,\n")
    with pytest.raises(ConfigError):
        load_config(f)


def test_override_syntax():
    assert build_config(None, parse_overrides(["theta=1e2", "pi=.5"])).theta == 100.0
    assert parse_overrides(["e0=null"]) == {"e0": None}
    with pytest.raises(ConfigError):
        parse_overrides(["theta"])
