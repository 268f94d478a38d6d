"""Versioned YAML configuration.

Every file carries ``version: 1``.  Unknown keys anywhere are errors, since a
misspelled safety parameter silently falling back to a default is worse than
refusing to run.  Times are given in seconds and converted to nanoseconds
here; nothing downstream sees floats.
"""

from __future__ import annotations

import os
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .clock import DriftBound
from .sim.sweeps import ScenarioConfig, SweepKind
from .timebase import to_ns

CONFIG_VERSION = 1
CONFIG_DIR_ENV = "GICTIME_CONFIG_DIR"


class ConfigError(ValueError):
    pass


def _check_keys(section: Mapping, allowed: set[str], where: str, required: set[str] = frozenset()) -> None:
    if not isinstance(section, Mapping):
        raise ConfigError(f"{where}: expected a mapping")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(map(str, unknown))}")
    missing = sorted(required - set(section))
    if missing:
        raise ConfigError(f"{where}: missing key(s) {', '.join(missing)}")


def _seconds(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ConfigError(f"{where}: expected a number of seconds")
    try:
        return to_ns(value)
    except ArithmeticError:
        raise ConfigError(f"{where}: not a number: {value!r}") from None


def parse_grid(grid, where: str) -> tuple[int, ...]:
    """A list of seconds, or ``{start, stop, step}`` with ``stop`` included."""
    if isinstance(grid, list):
        values = tuple(_seconds(v, f"{where}[{i}]") for i, v in enumerate(grid))
    else:
        _check_keys(grid, {"start", "stop", "step"}, where, {"start", "stop", "step"})
        start, stop, step = (_seconds(grid[k], f"{where}.{k}") for k in ("start", "stop", "step"))
        if step <= 0:
            raise ConfigError(f"{where}.step must be positive")
        values = tuple(range(start, stop + 1, step))
    if not values:
        raise ConfigError(f"{where}: empty grid")
    return values


def parse_drift_bound(section, where: str = "drift_bound") -> DriftBound:
    _check_keys(section, {"rate", "floor"}, where)
    rate = section.get("rate", 0)
    floor = section.get("floor", 0)
    try:
        if floor:
            return DriftBound.affine(floor, rate)
        return DriftBound.linear(rate)
    except (ValueError, ArithmeticError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _load_yaml(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    if data.get("version") != CONFIG_VERSION:
        raise ConfigError(f"{path}: expected version: {CONFIG_VERSION}, got {data.get('version')!r}")
    return data


def resolve_config_path(name: str | os.PathLike) -> Path:
    """Use ``name`` as given if it exists, else look in ``$GICTIME_CONFIG_DIR``."""
    path = Path(name)
    if path.exists() or path.is_absolute():
        return path
    base = os.environ.get(CONFIG_DIR_ENV)
    if base and (Path(base) / path).exists():
        return Path(base) / path
    return path


_SCENARIO_KEYS = {
    "version", "kind", "theta_big", "theta_grid", "delta_grid", "base_latency", "drift_bound",
    "seed", "lag_bound", "check_elapsed", "delay_leg", "theta_blue", "start_time",
}


def scenario_from_dict(data: Mapping, kind: str | None = None, seed: int | None = None) -> ScenarioConfig:
    _check_keys(data, _SCENARIO_KEYS, "scenario", {"theta_big", "theta_grid", "delta_grid"})
    kind_text = kind or data.get("kind")
    if kind_text is None:
        raise ConfigError("scenario: no sweep kind given (set 'kind' or pass --kind)")
    try:
        sweep_kind = SweepKind.parse(str(kind_text))
    except ValueError:
        raise ConfigError(f"scenario: unknown kind {kind_text!r}") from None
    if kind is not None and "kind" in data and SweepKind.parse(str(data["kind"])) is not sweep_kind:
        raise ConfigError(f"scenario: --kind {kind} contradicts kind {data['kind']!r} in the file")
    options = {}
    for key in ("lag_bound", "check_elapsed", "theta_blue", "start_time"):
        if data.get(key) is not None:
            options[key] = _seconds(data[key], key)
    if "delay_leg" in data:
        options["delay_leg"] = data["delay_leg"]
    if "drift_bound" in data:
        options["drift_bound"] = parse_drift_bound(data["drift_bound"])
    seed_value = seed if seed is not None else data.get("seed", 0)
    if isinstance(seed_value, bool) or not isinstance(seed_value, int):
        raise ConfigError("seed must be an integer")
    try:
        return ScenarioConfig(
            theta_big=_seconds(data["theta_big"], "theta_big"),
            theta_grid=parse_grid(data["theta_grid"], "theta_grid"),
            delta_grid=parse_grid(data["delta_grid"], "delta_grid"),
            base_latency=_seconds(data.get("base_latency", 0), "base_latency"),
            seed=seed_value,
            sweep_kind=sweep_kind,
            **options,
        )
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from None


def load_scenario(path, kind: str | None = None, seed: int | None = None) -> ScenarioConfig:
    path = resolve_config_path(path)
    return scenario_from_dict(_load_yaml(path), kind, seed)


# -- synthetic traffic ------------------------------------------------------

@dataclass(frozen=True)
class OffsetDistribution:
    """True receiver offsets in seconds: ``uniform(low, high)`` or ``normal(mean, std)``."""

    kind: str = "normal"
    low: float = 0.0
    high: float = 0.0
    mean: float = 0.0
    std: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform", "normal"):
            raise ValueError(f"unknown offset distribution {self.kind!r}")
        if self.kind == "uniform" and self.high < self.low:
            raise ValueError("uniform offsets need low <= high")
        if self.std < 0:
            raise ValueError("std must be non-negative")


POPULATIONS = ("faithful", "null", "integer", "random")


@dataclass(frozen=True)
class TrafficConfig:
    """Synthetic request stream seen by a public time server.

    A planted stream of badly lagging receivers arrives as a Poisson process
    with mean gap ``vulnerable_mean_interarrival``; ordinary receivers arrive
    at ``background_rate`` per second.  Background requests fill the send-time
    field according to ``populations``: the true reading, zero, the reading
    truncated to whole seconds, or uniform garbage.
    """

    theta_big: float = 6.0
    seed: int = 0
    vulnerable_events: int = 100_000
    vulnerable_mean_interarrival: float = 0.57
    vulnerable_theta: OffsetDistribution = OffsetDistribution("uniform", low=-5.0, high=-3.2)
    background_rate: float = 1.0
    background_theta: OffsetDistribution = OffsetDistribution("normal", mean=0.0, std=0.3)
    populations: dict = field(default_factory=lambda: {"faithful": 0.74, "null": 0.26, "integer": 0.0, "random": 0.0})
    transit_low: float = 0.0
    transit_high: float = 0.05
    epsilon_bound: float = 0.1
    confidence: float = 0.99
    window: float = 20.0
    histogram_low: float = -20.0
    histogram_high: float = 20.0
    histogram_bins: int = 80

    def __post_init__(self):
        if self.theta_big <= 0:
            raise ValueError("theta_big must be positive")
        if self.vulnerable_events < 0:
            raise ValueError("vulnerable_events must be non-negative")
        if self.vulnerable_mean_interarrival <= 0:
            raise ValueError("vulnerable_mean_interarrival must be positive")
        if self.background_rate < 0:
            raise ValueError("background_rate must be non-negative")
        if set(self.populations) - set(POPULATIONS):
            raise ValueError(f"populations must be among {', '.join(POPULATIONS)}")
        weights = [self.populations.get(p, 0.0) for p in POPULATIONS]
        if any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ValueError("population weights must be non-negative with a positive sum")
        if not 0 <= self.transit_low <= self.transit_high:
            raise ValueError("transit range must satisfy 0 <= low <= high")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie strictly between 0 and 1")
        if self.window <= 0 or self.histogram_bins < 1 or self.histogram_high <= self.histogram_low:
            raise ValueError("bad window or histogram settings")


def _offsets(section, where: str) -> OffsetDistribution:
    _check_keys(section, {"distribution", "low", "high", "mean", "std"}, where, {"distribution"})
    kind = section["distribution"]
    fields = {k: float(section[k]) for k in ("low", "high", "mean", "std") if k in section}
    return OffsetDistribution(kind, **fields)


def traffic_from_dict(data: Mapping, seed: int | None = None) -> TrafficConfig:
    _check_keys(data, {"version", "kind", "theta_big", "seed", "vulnerable", "background", "transit", "inference", "histogram"}, "traffic")
    if data.get("kind", "traffic") != "traffic":
        raise ConfigError(f"traffic: kind must be 'traffic', got {data['kind']!r}")
    options: dict = {}
    try:
        if "theta_big" in data:
            options["theta_big"] = float(data["theta_big"])
        if "vulnerable" in data:
            section = data["vulnerable"]
            _check_keys(section, {"events", "mean_interarrival", "theta"}, "vulnerable")
            if "events" in section:
                options["vulnerable_events"] = int(section["events"])
            if "mean_interarrival" in section:
                options["vulnerable_mean_interarrival"] = float(section["mean_interarrival"])
            if "theta" in section:
                options["vulnerable_theta"] = _offsets(section["theta"], "vulnerable.theta")
        if "background" in data:
            section = data["background"]
            _check_keys(section, {"rate", "theta", "populations"}, "background")
            if "rate" in section:
                options["background_rate"] = float(section["rate"])
            if "theta" in section:
                options["background_theta"] = _offsets(section["theta"], "background.theta")
            if "populations" in section:
                weights = section["populations"]
                if isinstance(weights, Mapping):
                    # an unquoted ``null:`` key comes back from YAML as None
                    weights = {"null" if k is None else k: v for k, v in weights.items()}
                _check_keys(weights, set(POPULATIONS), "background.populations")
                options["populations"] = {k: float(v) for k, v in weights.items()}
        if "transit" in data:
            _check_keys(data["transit"], {"low", "high"}, "transit")
            options["transit_low"] = float(data["transit"].get("low", 0.0))
            options["transit_high"] = float(data["transit"].get("high", 0.05))
        if "inference" in data:
            section = data["inference"]
            _check_keys(section, {"epsilon_bound", "confidence", "window"}, "inference")
            for key in ("epsilon_bound", "confidence", "window"):
                if key in section:
                    options[key] = float(section[key])
        if "histogram" in data:
            section = data["histogram"]
            _check_keys(section, {"low", "high", "bins"}, "histogram")
            for key in ("low", "high"):
                if key in section:
                    options[f"histogram_{key}"] = float(section[key])
            if "bins" in section:
                options["histogram_bins"] = int(section["bins"])
        seed_value = seed if seed is not None else data.get("seed", 0)
        if isinstance(seed_value, bool) or not isinstance(seed_value, int):
            raise ConfigError("seed must be an integer")
        return TrafficConfig(seed=seed_value, **options)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"traffic: {exc}") from None


def load_traffic(path, seed: int | None = None) -> TrafficConfig:
    return traffic_from_dict(_load_yaml(resolve_config_path(path)), seed)
