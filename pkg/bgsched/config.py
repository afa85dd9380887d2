from __future__ import annotations

import dataclasses
import datetime
import enum
import logging
from pathlib import Path
from typing import (
    Any,
    Dict,
    List,
    Mapping,
    Tuple,
    Union,
    get_args,
    get_origin,
    get_type_hints,
)

import yaml

from bgsched.engine import SimConfig
from bgsched.errors import ConfigError, ParameterError
from bgsched.trace import SyntheticProfile

logger = logging.getLogger(__name__)

# Sweep aliases expanding to several dotted keys.
ALIASES: Dict[str, Tuple[str, ...]] = {
    "alpha": ("forecast.alpha_trend", "forecast.alpha_season"),
}


@dataclasses.dataclass
class RunConfig:
    sim: SimConfig = dataclasses.field(default_factory=SimConfig)
    synth: SyntheticProfile = dataclasses.field(default_factory=SyntheticProfile)

    def validate(self) -> None:
        try:
            self.sim.validate()
            self.synth.validate()
        except ParameterError as e:
            raise ConfigError(f"invalid configuration: {e}") from e


def _coerce(tp: Any, value: Any, key: str) -> Any:
    origin, args = get_origin(tp), get_args(tp)

    if origin is Union:
        if value is None and type(None) in args:
            return None
        (inner,) = [a for a in args if a is not type(None)]
        return _coerce(inner, value, key)
    if origin in (list, List):
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list")
        return [_coerce(args[0], v, f"{key}[{i}]") for i, v in enumerate(value)]
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, key)
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        try:
            return tp(value)
        except ValueError:
            choices = ", ".join(str(m.value) for m in tp)
            raise ConfigError(f"{key}: {value!r} is not one of {choices}") from None
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true or false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string")
        return value
    if tp is datetime.date:
        if isinstance(value, datetime.date):
            return value
        try:
            return datetime.date.fromisoformat(str(value))
        except ValueError:
            raise ConfigError(f"{key}: expected a YYYY-MM-DD date") from None
    raise ConfigError(f"{key}: unsupported setting type {tp!r}")


def _build(cls: Any, data: Any, key: str) -> Any:
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"{key or 'config'}: expected a mapping")
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        dotted = ", ".join(f"{key}.{k}" if key else str(k) for k in unknown)
        raise ConfigError(f"unknown configuration keys: {dotted}")
    kwargs = {
        name: _coerce(hints[name], value, f"{key}.{name}" if key else name)
        for name, value in data.items()
    }
    return cls(**kwargs)


def parse_config(data: Any) -> RunConfig:
    """Build a RunConfig from parsed YAML; every key must be known."""
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise ConfigError("configuration must be a mapping of sections")
    data = dict(data)
    synth = _build(SyntheticProfile, data.pop("synth", None), "synth")
    sim = _build(SimConfig, data, "")
    config = RunConfig(sim=sim, synth=synth)
    config.validate()
    return config


def _read_yaml(path: Union[str, Path]) -> Any:
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from e
    logger.debug("Loaded %s", path)
    return data


def load_config(path: Union[str, Path, None]) -> RunConfig:
    if path is None:
        return parse_config(None)
    return parse_config(_read_yaml(path))


def load_profile(path: Union[str, Path]) -> SyntheticProfile:
    """Read a synthetic profile, either bare or under a ``synth`` section."""
    data = _read_yaml(path)
    if isinstance(data, Mapping) and "synth" in data:
        data = data["synth"]
    profile = _build(SyntheticProfile, data, "synth")
    try:
        profile.validate()
    except ParameterError as e:
        raise ConfigError(f"invalid synthetic profile {path}: {e}") from e
    return profile


def _replace_path(obj: Any, parts: List[str], raw: Any, key: str) -> Any:
    name = parts[0]
    if not dataclasses.is_dataclass(obj) or name not in {
        f.name for f in dataclasses.fields(obj)
    }:
        raise ConfigError(f"unknown configuration key: {key}")
    if len(parts) == 1:
        value = _coerce(get_type_hints(type(obj))[name], raw, key)
    else:
        value = _replace_path(getattr(obj, name), parts[1:], raw, key)
    return dataclasses.replace(obj, **{name: value})


def override(config: RunConfig, key: str, raw: Any) -> RunConfig:
    """Return ``config`` with dotted ``key`` set; string values are parsed as YAML."""
    if isinstance(raw, str):
        raw = yaml.safe_load(raw)
    for target in ALIASES.get(key, (key,)):
        parts = target.split(".")
        if parts[0] == "synth":
            config = dataclasses.replace(
                config, synth=_replace_path(config.synth, parts[1:], raw, target)
            )
        else:
            config = dataclasses.replace(
                config, sim=_replace_path(config.sim, parts, raw, target)
            )
    config.validate()
    return config


def parse_sweep(text: str) -> Tuple[str, List[str]]:
    """Split ``key=v1,v2,...``."""
    key, sep, values = text.partition("=")
    if not sep or not key or not values:
        raise ConfigError(f"sweep must look like key=v1,v2: {text!r}")
    return key.strip(), [v.strip() for v in values.split(",") if v.strip()]


def to_plain(value: Any) -> Any:
    """Convert config objects to JSON/YAML friendly values."""
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {
            f.name: to_plain(getattr(value, f.name)) for f in dataclasses.fields(value)
        }
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, datetime.date):
        return value.isoformat()
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, Mapping):
        return {str(k): to_plain(v) for k, v in value.items()}
    return value
