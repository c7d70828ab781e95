"""Run configuration: battery, market and stress parameters from YAML plus overrides."""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping, Optional

import yaml

from .core import BatteryParams, MarketPrices
from .cost import PowerLawStress

CONFIG_KEYS = ("e_min", "e_max", "E", "P", "eta_c", "eta_d", "R", "T",
               "theta", "pi", "alpha", "beta", "e0")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    e_min: float = 0.1
    e_max: float = 0.95
    E: float = 1.0
    P: float = 1.0
    eta_c: float = 1.0
    eta_d: float = 1.0
    R: float = 300_000.0
    T: float = 0.25
    theta: float = 50.0
    pi: float = 50.0
    alpha: float = 5.24e-4
    beta: float = 2.03
    e0: Optional[float] = None
    """initial SoC; the middle of [e_min, e_max] when unset"""

    def battery(self) -> BatteryParams:
        return BatteryParams(self.e_min, self.e_max, self.E, self.P, self.eta_c, self.eta_d,
                             self.R, self.T)

    def prices(self) -> MarketPrices:
        return MarketPrices(self.theta, self.pi)

    def stress(self) -> PowerLawStress:
        return PowerLawStress(self.alpha, self.beta)

    def initial_soc(self) -> float:
        return 0.5 * (self.e_min + self.e_max) if self.e0 is None else self.e0

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _coerce(key: str, value) -> Optional[float]:
    if key == "e0" and value is None:
        return None
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def parse_overrides(items) -> dict:
    """``KEY=VALUE`` strings to a dict; values are parsed as YAML scalars."""
    out = {}
    for item in items or ():
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        out[key.strip()] = yaml.safe_load(raw)
    return out


def build_config(base: Optional[Mapping] = None, overrides: Optional[Mapping] = None) -> RunConfig:
    """Merge file values and overrides (overrides win) into a validated config."""
    merged = {}
    for src in (base or {}), (overrides or {}):
        unknown = sorted(set(src) - set(CONFIG_KEYS))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(map(str, unknown))}")
        merged.update({k: _coerce(k, v) for k, v in src.items()})
    cfg = RunConfig(**merged)
    try:
        p = cfg.battery()
        cfg.prices()
        cfg.stress()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not p.e_min <= cfg.initial_soc() <= p.e_max:
        raise ConfigError(f"e0={cfg.e0} outside [{p.e_min}, {p.e_max}]")
    return cfg


def read_config_file(path) -> dict:
    """Raw key/value mapping from a YAML file (keys are checked by :func:`build_config`)."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping of keys to numbers")
    return data


def load_config(path, overrides: Optional[Mapping] = None) -> RunConfig:
    return build_config(read_config_file(path), overrides)
