"""Scenario configuration and its YAML file format.

Keys carry their units (``cw_power_nw``, ``trigger_energy_fj``,
``dead_time_ns`` ...); values are converted to SI on load through exact
decimal arithmetic, so ``parse(serialize(cfg)) == cfg`` holds bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from decimal import Decimal
from enum import Enum
from pathlib import Path
from typing import Any

import yaml

from .bb84 import AttackMode, AttackParams
from .detector import ConfigError, DetectorConfig, ResponsePoint, TransitionShape
from .optics import FEMTO, NANO, format_scaled, from_unit
from .scw import ScwChain


class Protocol(str, Enum):
    BB84 = "bb84"
    SCW = "scw"


class SweepVariable(str, Enum):
    TRIGGER_ENERGY = "trigger_energy"
    CW_POWER = "cw_power"


# attribute, file key, decimal exponent of the file unit
DETECTOR_KEYS = (
    ("efficiency", "efficiency", 0),
    ("gate_frequency", "gate_frequency_hz", 0),
    ("gate_width", "gate_width_ns", NANO),
    ("dead_time", "dead_time_ns", NANO),
    ("dark_count_rate", "dark_count_rate_hz", 0),
    ("blinding_threshold", "blinding_threshold_nw", NANO),
)
RESPONSE_KEYS = (
    ("blinding_power", "blinding_power_nw", NANO),
    ("e_never", "e_never_fj", FEMTO),
    ("e_always", "e_always_fj", FEMTO),
)
ATTACK_KEYS = (
    ("cw_power", "cw_power_nw", NANO),
    ("trigger_energy", "trigger_energy_fj", FEMTO),
    ("forge_rate", "forge_rate_hz", 0),
)
SCW_KEYS = (
    ("modulation_index", "modulation_index", 0),
    ("filter_extinction", "filter_extinction_db", 0),
    ("bob_insertion_loss", "bob_insertion_loss_db", 0),
    ("watchdog_attenuation", "watchdog_attenuation_db", 0),
    ("alarm_factor", "alarm_factor", 0),
)
SCW_OPTIONAL_KEYS = (
    ("watchdog_alarm_threshold", "watchdog_alarm_threshold_nw", NANO),
    ("watchdog_blinding_threshold", "watchdog_blinding_threshold_nw", NANO),
)
SWEEP_UNITS = {
    "trigger_energy_fj": (SweepVariable.TRIGGER_ENERGY, FEMTO),
    "cw_power_nw": (SweepVariable.CW_POWER, NANO),
}


class ConfigErrors(ConfigError):
    """Several field-level problems found while loading a config."""

    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = list(problems)
        first = self.problems[0][0] if self.problems else "config"
        ValueError.__init__(self, "; ".join(f"{k}: {m}" for k, m in self.problems))
        self.field = first


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one run.

    ``mean_photons`` is the source intensity per gate, ``channel_transmission``
    scales it on the way to Bob. ``alice_carrier_power`` is the SCW carrier
    at Bob's entrance in the absence of Eve.
    """

    protocol: Protocol = Protocol.BB84
    gates: int = 1_000_000
    seed: int = 0
    detector: DetectorConfig = DetectorConfig()
    attack: AttackParams | None = None
    scw: ScwChain | None = None
    mean_photons: float = 0.1
    channel_transmission: float = 1.0
    alice_carrier_power: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        problems = self.problems()
        if problems:
            raise ConfigErrors(problems)

    def problems(self) -> list[tuple[str, str]]:
        out = []
        if isinstance(self.gates, bool) or not isinstance(self.gates, int) or self.gates <= 0:
            out.append(("gates", f"must be a positive integer, got {self.gates!r}"))
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            out.append(("seed", f"must be a 64-bit unsigned integer, got {self.seed!r}"))
        if not (math.isfinite(self.mean_photons) and self.mean_photons >= 0):
            out.append(("mean_photons", "must be finite and >= 0"))
        if not 0 <= self.channel_transmission <= 1:
            out.append(("channel_transmission", "must lie in [0, 1]"))
        if self.attack is not None and self.attack.enabled:
            limit = 1.0 / self.detector.dead_time
            if self.attack.forge_rate > limit * (1 + 1e-9):
                out.append(("attack.forge_rate_hz",
                            f"exceeds the dead-time-limited rate {limit:g} Hz"))
            if self.attack.forge_rate > self.detector.gate_frequency:
                out.append(("attack.forge_rate_hz", "exceeds the gate frequency"))
        if self.protocol is Protocol.SCW:
            if self.scw is None:
                out.append(("scw", "required when protocol is scw"))
            if self.alice_carrier_power is None or not self.alice_carrier_power > 0:
                out.append(("scw.alice_carrier_power_nw", "required and > 0 for protocol scw"))
        return out

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class SweepSpec:
    variable: SweepVariable
    start: float
    stop: float
    steps: int
    gates_per_point: int
    exponent: int = 0   # decimal exponent of the unit the grid is spaced in

    def __post_init__(self):
        object.__setattr__(self, "variable", SweepVariable(self.variable))
        if not self.start <= self.stop:
            raise ConfigError("from", "must not exceed 'to'")
        if self.start < 0:
            raise ConfigError("from", "must be >= 0")
        if self.start != self.stop and self.steps < 2:
            raise ConfigError("steps", "must be >= 2")
        if self.gates_per_point <= 0:
            raise ConfigError("gates", "must be > 0")

    def values(self) -> list[float]:
        """Evenly spaced grid, computed in decimal so ``20.6`` fJ lands on 20.6 fJ."""
        if self.start == self.stop:
            return [self.start]
        lo = Decimal(format_scaled(self.start, self.exponent))
        hi = Decimal(format_scaled(self.stop, self.exponent))
        step = (hi - lo) / (self.steps - 1)
        vals = [from_unit(str(lo + step * i), self.exponent) for i in range(self.steps)]
        vals[0], vals[-1] = self.start, self.stop
        return vals

    @classmethod
    def from_cli(cls, var: str, start, stop, steps: int, gates: int) -> "SweepSpec":
        if var not in SWEEP_UNITS:
            raise ConfigError("--var", f"must be one of {sorted(SWEEP_UNITS)}")
        variable, exponent = SWEEP_UNITS[var]
        return cls(variable, from_unit(start, exponent), from_unit(stop, exponent),
                   int(steps), int(gates), exponent)


# -- YAML I/O ------------------------------------------------------------------

class _Loader(yaml.SafeLoader):
    pass


class _Number(str):
    """Decimal text that must reach the converter unrounded."""


def _construct_float(loader, node):
    return _Number(loader.construct_scalar(node))


_Loader.add_constructor("tag:yaml.org,2002:float", _construct_float)


class _Dumper(yaml.SafeDumper):
    pass


def _represent_number(dumper, data):
    return dumper.represent_scalar("tag:yaml.org,2002:float", str(data))


_Dumper.add_representer(_Number, _represent_number)


def _number(section: dict, key: str, exponent: int, path: str, errors: list):
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        errors.append((path, f"expected a number, got {value!r}"))
        return None
    try:
        Decimal(str(value))
        out = from_unit(value, exponent)
    except (ArithmeticError, ValueError):
        errors.append((path, f"not a number: {value!r}"))
        return None
    if not math.isfinite(out):
        errors.append((path, f"must be finite, got {value!r}"))
        return None
    return out


def _integer(value, path: str, errors: list):
    if isinstance(value, bool):
        errors.append((path, f"expected an integer, got {value!r}"))
        return None
    try:
        d = Decimal(str(value))
    except ArithmeticError:
        errors.append((path, f"expected an integer, got {value!r}"))
        return None
    if d != d.to_integral_value():
        errors.append((path, f"expected an integer, got {value!r}"))
        return None
    return int(d)


def _mapping(data, path: str, errors: list) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        errors.append((path, "expected a mapping"))
        return {}
    return data


def _unknown(section: dict, known: set, path: str, errors: list):
    for key in section:
        if key not in known:
            prefix = f"{path}." if path else ""
            errors.append((f"{prefix}{key}", "unknown key"))


def _build(factory, kwargs: dict, path: str, errors: list):
    try:
        return factory(**kwargs)
    except ConfigError as exc:
        errors.append((f"{path}.{exc.field}" if path else exc.field, str(exc).split(": ", 1)[-1]))
    except (ValueError, TypeError) as exc:
        errors.append((path or "config", str(exc)))
    return None


def config_from_dict(data: dict[str, Any]) -> ScenarioConfig:
    """Build and validate a config, reporting every bad field at once."""
    errors: list[tuple[str, str]] = []
    data = _mapping(data, "config", errors)
    top_known = {"protocol", "gates", "seed", "mean_photons", "channel_transmission",
                 "detector", "attack", "scw"}
    _unknown(data, top_known, "", errors)
    kwargs: dict[str, Any] = {}
    if "protocol" in data:
        try:
            kwargs["protocol"] = Protocol(data["protocol"])
        except ValueError:
            errors.append(("protocol", f"must be one of {[p.value for p in Protocol]}"))
    for key in ("gates", "seed"):
        if key in data:
            kwargs[key] = _integer(data[key], key, errors)
    for key in ("mean_photons", "channel_transmission"):
        if key in data:
            kwargs[key] = _number(data, key, 0, key, errors)

    det = _mapping(data.get("detector"), "detector", errors)
    det_kwargs: dict[str, Any] = {}
    _unknown(det, {k for _, k, _ in DETECTOR_KEYS} | {"response_points", "transition_shape"},
             "detector", errors)
    for attr, key, exp in DETECTOR_KEYS:
        if key in det:
            det_kwargs[attr] = _number(det, key, exp, f"detector.{key}", errors)
    if "transition_shape" in det:
        try:
            det_kwargs["transition_shape"] = TransitionShape(det["transition_shape"])
        except ValueError:
            errors.append(("detector.transition_shape",
                           f"must be one of {[s.value for s in TransitionShape]}"))
    if "response_points" in det:
        points = []
        raw = det["response_points"]
        if not isinstance(raw, list):
            errors.append(("detector.response_points", "expected a list"))
            raw = []
        for i, item in enumerate(raw):
            p = f"detector.response_points[{i}]"
            item = _mapping(item, p, errors)
            _unknown(item, {k for _, k, _ in RESPONSE_KEYS}, p, errors)
            values = {}
            for attr, key, exp in RESPONSE_KEYS:
                if key not in item:
                    errors.append((f"{p}.{key}", "missing"))
                else:
                    values[attr] = _number(item, key, exp, f"{p}.{key}", errors)
            if len(values) == 3 and None not in values.values():
                points.append(ResponsePoint(**values))
        det_kwargs["response_points"] = tuple(points)
    detector = None
    if None not in det_kwargs.values():
        detector = _build(DetectorConfig, det_kwargs, "detector", errors)

    attack = None
    if data.get("attack") is not None:
        atk = _mapping(data["attack"], "attack", errors)
        _unknown(atk, {k for _, k, _ in ATTACK_KEYS} | {"enabled", "mode", "start_gate"},
                 "attack", errors)
        atk_kwargs: dict[str, Any] = {}
        for attr, key, exp in ATTACK_KEYS:
            if key in atk:
                atk_kwargs[attr] = _number(atk, key, exp, f"attack.{key}", errors)
        if "enabled" in atk:
            if not isinstance(atk["enabled"], bool):
                errors.append(("attack.enabled", "expected true or false"))
            else:
                atk_kwargs["enabled"] = atk["enabled"]
        if "mode" in atk:
            try:
                atk_kwargs["mode"] = AttackMode(atk["mode"])
            except ValueError:
                errors.append(("attack.mode", f"must be one of {[m.value for m in AttackMode]}"))
        if "start_gate" in atk:
            atk_kwargs["start_gate"] = _integer(atk["start_gate"], "attack.start_gate", errors)
        if None not in atk_kwargs.values():
            attack = _build(AttackParams, atk_kwargs, "attack", errors)

    scw = None
    if data.get("scw") is not None:
        sec = _mapping(data["scw"], "scw", errors)
        _unknown(sec, {k for _, k, _ in SCW_KEYS + SCW_OPTIONAL_KEYS}
                 | {"include_carrier_leakage", "alice_carrier_power_nw"}, "scw", errors)
        scw_kwargs: dict[str, Any] = {}
        for attr, key, exp in SCW_KEYS:
            if key in sec:
                scw_kwargs[attr] = _number(sec, key, exp, f"scw.{key}", errors)
        for attr, key, exp in SCW_OPTIONAL_KEYS:
            if sec.get(key) is not None:
                scw_kwargs[attr] = _number(sec, key, exp, f"scw.{key}", errors)
        if "include_carrier_leakage" in sec:
            if not isinstance(sec["include_carrier_leakage"], bool):
                errors.append(("scw.include_carrier_leakage", "expected true or false"))
            else:
                scw_kwargs["include_carrier_leakage"] = sec["include_carrier_leakage"]
        if sec.get("alice_carrier_power_nw") is not None:
            kwargs["alice_carrier_power"] = _number(
                sec, "alice_carrier_power_nw", NANO, "scw.alice_carrier_power_nw", errors)
        if None not in scw_kwargs.values():
            scw = _build(ScwChain, scw_kwargs, "scw", errors)

    if errors:
        raise ConfigErrors(errors)
    kwargs.update(detector=detector, attack=attack, scw=scw)
    return ScenarioConfig(**kwargs)


def _num(value: float, exponent: int = 0) -> _Number:
    return _Number(format_scaled(value, exponent))


def config_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    det = cfg.detector
    detector = {key: _num(getattr(det, attr), exp) for attr, key, exp in DETECTOR_KEYS}
    detector["transition_shape"] = det.transition_shape.value
    detector["response_points"] = [
        {key: _num(getattr(pt, attr), exp) for attr, key, exp in RESPONSE_KEYS}
        for pt in det.response_points]
    out: dict[str, Any] = {
        "protocol": cfg.protocol.value,
        "gates": cfg.gates,
        "seed": cfg.seed,
        "mean_photons": _num(cfg.mean_photons),
        "channel_transmission": _num(cfg.channel_transmission),
        "detector": detector,
    }
    if cfg.attack is not None:
        a = cfg.attack
        attack = {"enabled": a.enabled, "mode": a.mode.value}
        attack.update({key: _num(getattr(a, attr), exp) for attr, key, exp in ATTACK_KEYS})
        attack["start_gate"] = a.start_gate
        out["attack"] = attack
    if cfg.scw is not None or cfg.alice_carrier_power is not None:
        scw: dict[str, Any] = {}
        if cfg.scw is not None:
            s = cfg.scw
            scw.update({key: _num(getattr(s, attr), exp) for attr, key, exp in SCW_KEYS})
            for attr, key, exp in SCW_OPTIONAL_KEYS:
                value = getattr(s, attr)
                scw[key] = None if value is None else _num(value, exp)
            scw["include_carrier_leakage"] = s.include_carrier_leakage
        if cfg.alice_carrier_power is not None:
            scw["alice_carrier_power_nw"] = _num(cfg.alice_carrier_power, NANO)
        out["scw"] = scw
    return out


def dumps(cfg: ScenarioConfig) -> str:
    return yaml.dump(config_to_dict(cfg), Dumper=_Dumper, sort_keys=False,
                     default_flow_style=False)


def loads(text: str) -> ScenarioConfig:
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigErrors([("config", f"invalid YAML: {exc}")]) from None
    return config_from_dict(data if data is not None else {})


def load(path: str | Path) -> ScenarioConfig:
    return loads(Path(path).read_text())


def save(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(dumps(cfg))
