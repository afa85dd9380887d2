from __future__ import annotations

import datetime

import pytest
import yaml

from bgsched.config import (
    RunConfig,
    load_config,
    load_profile,
    override,
    parse_config,
    parse_sweep,
    to_plain,
)
from bgsched.errors import ConfigError
from bgsched.policy import ForecastMethod, PolicyKind


def test_defaults():
    config = load_config(None)
    assert isinstance(config, RunConfig)
    assert config.sim.hardware.n_cores == 64
    assert config.sim.policy.kind is PolicyKind.DYNAMIC
    assert config.sim.policy.forecast_method is ForecastMethod.EWMA
    assert config.synth.interval == 600.0


def test_sections_are_parsed():
    config = parse_config(
        {
            "hardware": {"n_cores": 16, "interval": 3600},
            "pool": {"total_blocks": 1000, "initial_used": 0.2},
            "policy": {"kind": "fixed", "low": 0.3, "high": 0.6},
            "forecast": {"holidays": ["2024-01-01"], "alpha_trend": 0.5},
            "synth": {"days": 2, "intensity": [1, 2, 3]},
        }
    )
    sim = config.sim
    assert sim.hardware.n_cores == 16
    assert sim.hardware.interval == 3600.0
    assert sim.pool.total_blocks == 1000
    assert sim.policy.kind is PolicyKind.FIXED
    assert sim.forecast.holidays == [datetime.date(2024, 1, 1)]
    assert config.synth.intensity == [1.0, 2.0, 3.0]
    assert config.synth.days == 2.0


def test_unknown_keys_are_named():
    with pytest.raises(ConfigError, match=r"policy\.bogus"):
        parse_config({"policy": {"bogus": 1}})
    with pytest.raises(ConfigError, match="unknown configuration keys: extra"):
        parse_config({"extra": {}})


@pytest.mark.parametrize(
    "data, message",
    [
        ({"hardware": {"n_cores": "many"}}, "hardware.n_cores: expected an integer"),
        ({"hardware": {"n_cores": True}}, "hardware.n_cores: expected an integer"),
        ({"pool": {"initial_used": "half"}}, "pool.initial_used: expected a number"),
        ({"policy": {"damped": "yes"}}, "policy.damped: expected true or false"),
        ({"policy": {"kind": "lazy"}}, "policy.kind: 'lazy' is not one of"),
        ({"forecast": {"holidays": ["soon"]}}, "expected a YYYY-MM-DD date"),
        ({"synth": {"intensity": 5}}, "synth.intensity: expected a list"),
        ({"hardware": 3}, "hardware: expected a mapping"),
    ],
)
def test_bad_values(data, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(data)


def test_invalid_values_are_config_errors():
    with pytest.raises(ConfigError, match="low < high"):
        parse_config({"policy": {"low": 0.6, "high": 0.5}})
    with pytest.raises(ConfigError):
        parse_config({"forecast": {"alpha_trend": 1.5}})
    with pytest.raises(ConfigError):
        parse_config(["not", "a", "mapping"])


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("policy: [unclosed\n")
    with pytest.raises(ConfigError, match="invalid YAML"):
        load_config(bad)


def test_load_config_round_trip(tmp_path):
    config = parse_config({"policy": {"replan_every": 3}, "synth": {"noise": 0.1}})
    path = tmp_path / "config.yaml"
    data = dict(to_plain(config.sim), synth=to_plain(config.synth))
    path.write_text(yaml.safe_dump(data))
    assert load_config(path) == config


def test_load_profile(tmp_path):
    bare = tmp_path / "bare.yaml"
    bare.write_text(yaml.safe_dump({"days": 1, "interval": 3600}))
    nested = tmp_path / "nested.yaml"
    nested.write_text(yaml.safe_dump({"synth": {"days": 1, "interval": 3600}}))
    assert load_profile(bare) == load_profile(nested)
    assert load_profile(bare).days == 1.0

    invalid = tmp_path / "invalid.yaml"
    invalid.write_text(yaml.safe_dump({"days": 0}))
    with pytest.raises(ConfigError, match="invalid synthetic profile"):
        load_profile(invalid)


def test_override():
    config = load_config(None)
    changed = override(config, "policy.replan_every", "12")
    assert changed.sim.policy.replan_every == 12
    assert config.sim.policy.replan_every == 6

    changed = override(config, "alpha", "0.2")
    assert changed.sim.forecast.alpha_trend == 0.2
    assert changed.sim.forecast.alpha_season == 0.2

    assert override(config, "synth.noise", 0.3).synth.noise == 0.3
    assert override(config, "policy.kind", "fixed").sim.policy.kind is PolicyKind.FIXED

    with pytest.raises(ConfigError, match="unknown configuration key"):
        override(config, "policy.nothing", "1")
    with pytest.raises(ConfigError):
        override(config, "alpha", "2.0")


def test_parse_sweep():
    assert parse_sweep("alpha=0.2, 0.4,0.6") == ("alpha", ["0.2", "0.4", "0.6"])
    for bad in ("alpha", "=1,2", "alpha="):
        with pytest.raises(ConfigError):
            parse_sweep(bad)


def test_to_plain():
    plain = to_plain(parse_config({"forecast": {"holidays": ["2024-12-25"]}}))
    assert plain["sim"]["forecast"]["holidays"] == ["2024-12-25"]
    assert plain["sim"]["policy"]["kind"] == "dynamic"
    assert plain["synth"]["start_date"] == "2024-01-01"
    yaml.safe_dump(plain)
