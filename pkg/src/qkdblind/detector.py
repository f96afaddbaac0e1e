"""Phenomenological model of a gated InGaAs APD under bright-light control.

The detector has two regimes:

* Geiger mode (c.w. power below the blinding threshold): Poissonian photon
  detection with efficiency ``efficiency`` plus dark counts at
  ``dark_count_rate``.
* Blinded / linear mode (c.w. power at or above the threshold): no dark
  counts at all, and a trigger pulse of energy E clicks with probability 0
  for ``E <= e_never``, 1 for ``E >= e_always`` and a monotone ramp in
  between. Thresholds depend on the blinding power through the
  ``response_points`` table.

After a click the detector is dead for ``dead_time`` seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .optics import Energy, Power, from_fj, from_nw, mean_photons_to_click_prob, photon_energy


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class DeadTimeViolation(AssertionError):
    pass


class Mode(str, Enum):
    GEIGER = "geiger"
    BLINDED = "blinded"


class TransitionShape(str, Enum):
    LINEAR = "linear"
    LOGISTIC = "logistic"


@dataclass(frozen=True)
class ResponsePoint:
    """Measured click thresholds at one blinding power."""

    blinding_power: Power
    e_never: Energy
    e_always: Energy

    @property
    def width(self) -> Energy:
        return self.e_always - self.e_never


# single row that is fully quantified for the ID210 at 35 nW
ID210_RESPONSE = (ResponsePoint(from_nw(35), from_fj("15.4"), from_fj("25.8")),)


@dataclass(frozen=True)
class DetectorConfig:
    efficiency: float = 0.10
    gate_frequency: float = 1e8
    gate_width: float = 3e-9
    dead_time: float = 100e-9
    dark_count_rate: float = 200.0
    blinding_threshold: Power = from_nw(24)
    response_points: tuple[ResponsePoint, ...] = ID210_RESPONSE
    transition_shape: TransitionShape = TransitionShape.LINEAR

    def __post_init__(self):
        object.__setattr__(self, "response_points", tuple(self.response_points))
        object.__setattr__(self, "transition_shape", TransitionShape(self.transition_shape))
        if not 0.0 <= self.efficiency <= 1.0:
            raise ConfigError("efficiency", f"must lie in [0, 1], got {self.efficiency}")
        for name in ("gate_frequency", "gate_width", "dead_time", "blinding_threshold"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(name, f"must be finite and > 0, got {value}")
        if not (math.isfinite(self.dark_count_rate) and self.dark_count_rate >= 0):
            raise ConfigError("dark_count_rate", f"must be finite and >= 0, got {self.dark_count_rate}")
        if self.dark_count_rate > self.gate_frequency:
            raise ConfigError("dark_count_rate", "cannot exceed the gate frequency")
        if not self.response_points:
            raise ConfigError("response_points", "at least one point is required")
        for i, pt in enumerate(self.response_points):
            if not 0 < pt.e_never < pt.e_always:
                raise ConfigError(f"response_points[{i}]",
                                  "requires 0 < e_never < e_always")
            if not pt.blinding_power > 0:
                raise ConfigError(f"response_points[{i}]", "blinding power must be > 0")
        for i, (a, b) in enumerate(zip(self.response_points, self.response_points[1:])):
            if not b.blinding_power > a.blinding_power:
                raise ConfigError(f"response_points[{i + 1}]",
                                  "blinding powers must be strictly increasing")
            # the ramp gets sharper, never wider, as blinding power grows
            if b.width > a.width:
                raise ConfigError(f"response_points[{i + 1}]",
                                  "transition width must not grow with blinding power")

    @property
    def dark_probability(self) -> float:
        return self.dark_count_rate / self.gate_frequency

    @property
    def dead_gates(self) -> int:
        """Gates to skip after a click: next allowed gate is ``g + dead_gates``."""
        return max(1, math.ceil(self.dead_time * self.gate_frequency - 1e-9))

    @property
    def gate_period(self) -> float:
        return 1.0 / self.gate_frequency

    def with_(self, **changes) -> "DetectorConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class DetectorState:
    mode: Mode = Mode.GEIGER
    dead_until: float = 0.0


@dataclass(frozen=True)
class GateInput:
    cw_power: Power = 0.0
    trigger_energy: Energy = 0.0
    mean_photons: float = 0.0
    gate_time: float = 0.0

    def __post_init__(self):
        for name in ("cw_power", "trigger_energy", "mean_photons", "gate_time"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")


def is_blinded(cw_power, config: DetectorConfig):
    out = np.asarray(cw_power, dtype=float) >= config.blinding_threshold
    return bool(out) if out.ndim == 0 else out


def thresholds_at(cw_power, config: DetectorConfig):
    """(e_never, e_always) at ``cw_power``, linearly interpolated and clamped."""
    pts = config.response_points
    powers = [p.blinding_power for p in pts]
    never = np.interp(cw_power, powers, [p.e_never for p in pts])
    always = np.interp(cw_power, powers, [p.e_always for p in pts])
    if np.ndim(never) == 0:
        return float(never), float(always)
    return never, always


def _ramp(energy, e_never, e_always, shape: TransitionShape):
    z = np.clip((energy - e_never) / (e_always - e_never), 0.0, 1.0)
    if shape is TransitionShape.LOGISTIC:
        k = 10.0
        lo, hi = 1 / (1 + math.exp(k / 2)), 1 / (1 + math.exp(-k / 2))
        z = (1 / (1 + np.exp(-k * (z - 0.5))) - lo) / (hi - lo)
        z = np.clip(z, 0.0, 1.0)
    # plateaus are exact, never rounded
    z = np.where(energy <= e_never, 0.0, np.where(energy >= e_always, 1.0, z))
    return z


def blinded_click_probability(trigger_energy, cw_power, config: DetectorConfig):
    """Click probability of a blinded detector hit by a trigger pulse."""
    energy = np.asarray(trigger_energy, dtype=float)
    power = np.asarray(cw_power, dtype=float)
    if np.any(energy < 0):
        raise ValueError("trigger energy must be >= 0")
    if not np.all(power >= config.blinding_threshold):
        raise ValueError("detector is not blinded at this c.w. power")
    e_never, e_always = thresholds_at(power, config)
    out = _ramp(energy, e_never, e_always, config.transition_shape)
    return float(out) if out.ndim == 0 else out


def _geiger_probability(mean_photons, trigger_energy, config: DetectorConfig):
    # an unblinded APD counts trigger-pulse photons like any other light
    photons = np.asarray(mean_photons, dtype=float) + (
        np.asarray(trigger_energy, dtype=float) / photon_energy())
    p_photon = mean_photons_to_click_prob(photons, config.efficiency)
    return 1.0 - (1.0 - p_photon) * (1.0 - config.dark_probability)


def geiger_click_probability(gate: GateInput, config: DetectorConfig) -> float:
    if is_blinded(gate.cw_power, config):
        raise ValueError("detector is blinded; use blinded_click_probability")
    return float(_geiger_probability(gate.mean_photons, gate.trigger_energy, config))


def click_probability(cw_power, trigger_energy, mean_photons, config: DetectorConfig):
    """Per-gate click probability for either regime; broadcasts over arrays."""
    cw, trig, mu = np.broadcast_arrays(
        np.asarray(cw_power, dtype=float),
        np.asarray(trigger_energy, dtype=float),
        np.asarray(mean_photons, dtype=float))
    blinded = cw >= config.blinding_threshold
    out = np.empty(cw.shape, dtype=float)
    if np.any(blinded):
        e_never, e_always = thresholds_at(cw[blinded], config)
        out[blinded] = _ramp(trig[blinded], e_never, e_always, config.transition_shape)
    if not np.all(blinded):
        geiger = ~blinded
        out[geiger] = _geiger_probability(mu[geiger], trig[geiger], config)
    return out


def _time_tolerance(config: DetectorConfig) -> float:
    return 1e-9 * config.gate_period


def process_gate(state: DetectorState, gate: GateInput, config: DetectorConfig,
                 rng: np.random.Generator, *, last_gate_time: float | None = None):
    """Advance one detector by one gate; returns ``(click, new_state)``.

    ``last_gate_time`` lets callers that track time enforce ordering; a
    stateful wrapper that does this is :class:`Detector`.
    """
    if last_gate_time is not None and gate.gate_time < last_gate_time:
        raise ValueError(
            f"gate_time {gate.gate_time} precedes previous gate {last_gate_time}")
    blinded = is_blinded(gate.cw_power, config)
    mode = Mode.BLINDED if blinded else Mode.GEIGER
    if gate.gate_time < state.dead_until - _time_tolerance(config):
        return False, replace(state, mode=mode)
    if blinded:
        p = blinded_click_probability(gate.trigger_energy, gate.cw_power, config)
    else:
        p = geiger_click_probability(gate, config)
    click = bool(rng.random() < p)
    dead_until = gate.gate_time + config.dead_time if click else state.dead_until
    return click, DetectorState(mode=mode, dead_until=dead_until)


class Detector:
    """Stateful single detector; rejects out-of-order gates."""

    def __init__(self, config: DetectorConfig | None = None,
                 rng: np.random.Generator | None = None):
        self.config = config or DetectorConfig()
        self.rng = rng if rng is not None else np.random.default_rng()
        self.state = DetectorState()
        self.last_gate_time: float | None = None
        self.click_times: list[float] = []

    def gate(self, gate: GateInput) -> bool:
        click, self.state = process_gate(self.state, gate, self.config, self.rng,
                                         last_gate_time=self.last_gate_time)
        self.last_gate_time = gate.gate_time
        if click:
            self.click_times.append(gate.gate_time)
        return click


# -- vectorised helpers used by the protocol engine ----------------------------

def resolve_dead_time(candidates: np.ndarray, dead_gates: int, next_free: int = 0):
    """Drop candidate clicks that fall inside a previous click's dead time.

    ``candidates`` are sorted gate indices where the Bernoulli draw fired;
    ``next_free`` is the first gate index at which the detector is live.
    Returns ``(accepted, next_free)``.
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    if candidates.size == 0:
        return candidates, next_free
    if candidates[0] >= next_free and (
            candidates.size == 1 or np.diff(candidates).min() >= dead_gates):
        return candidates, int(candidates[-1]) + dead_gates
    keep = np.zeros(candidates.size, dtype=bool)
    for i, g in enumerate(candidates.tolist()):
        if g >= next_free:
            keep[i] = True
            next_free = g + dead_gates
    return candidates[keep], next_free


def check_dead_time(click_gates: Sequence[int] | np.ndarray, config: DetectorConfig,
                    label: str = "detector") -> None:
    """Raise :class:`DeadTimeViolation` if two clicks are closer than the dead time."""
    gates = np.asarray(click_gates, dtype=np.int64)
    if gates.size < 2:
        return
    gaps = np.diff(gates)
    if gaps.min() < config.dead_gates:
        i = int(np.argmin(gaps))
        raise DeadTimeViolation(
            f"{label}: clicks at gates {gates[i]} and {gates[i + 1]} are "
            f"{gaps[i] * config.gate_period * 1e9:.3g} ns apart "
            f"(dead time {config.dead_time * 1e9:.3g} ns)")


def characterize(config: DetectorConfig, cw_power: Power, trigger_energy: Energy,
                 gates: int, rng: np.random.Generator, pulse_rate: float = 1e7,
                 chunk: int = 1_000_000):
    """Drive one detector with c.w. light and gate-aligned trigger pulses.

    Pulses arrive every ``gate_frequency / pulse_rate`` gates (no pulses if
    ``trigger_energy`` is 0). Returns ``(clicks, pulse_clicks, pulses)``;
    ``pulse_clicks`` counts clicks on pulsed gates.
    """
    stride = max(1, round(config.gate_frequency / pulse_rate))
    dead = config.dead_gates
    next_free = 0
    clicks = pulse_clicks = 0
    last_click = None
    for start in range(0, gates, chunk):
        n = min(chunk, gates - start)
        idx = np.arange(start, start + n, dtype=np.int64)
        pulsed = (idx % stride == 0) if trigger_energy > 0 else np.zeros(n, dtype=bool)
        energy = np.where(pulsed, trigger_energy, 0.0)
        p = click_probability(cw_power, energy, 0.0, config)
        if not np.any(p > 0):
            rng.random(n)
            continue
        cand = idx[rng.random(n) < p]
        accepted, next_free = resolve_dead_time(cand, dead, next_free)
        if accepted.size:
            if last_click is not None:
                check_dead_time(np.r_[last_click, accepted], config)
            else:
                check_dead_time(accepted, config)
            last_click = int(accepted[-1])
        clicks += accepted.size
        pulse_clicks += int(np.count_nonzero(pulsed[accepted - start]))
    pulses = 0
    if trigger_energy > 0:
        pulses = (gates + stride - 1) // stride
    return clicks, pulse_clicks, pulses


class ClickThresholdEstimator(BaseEstimator):
    """Recover E_never / E_always from a measured click-probability curve.

    ``fit(X, y)`` takes trigger energies (J) and observed click
    probabilities. ``e_never_`` is the largest energy whose probability is
    at most ``zero_tol`` with every lower energy also at that level;
    ``e_always_`` is the smallest energy from which on every probability is
    at least ``1 - one_tol``.
    """

    def __init__(self, zero_tol: float = 0.0, one_tol: float = 0.0,
                 transition_shape: str = "linear"):
        self.zero_tol = zero_tol
        self.one_tol = one_tol
        self.transition_shape = transition_shape

    def fit(self, X, y):
        X = check_array(X, ensure_2d=False, dtype=float).reshape(-1)
        y = check_array(y, ensure_2d=False, dtype=float).reshape(-1)
        check_consistent_length(X, y)
        if np.any((y < 0) | (y > 1)):
            raise ValueError("click probabilities must lie in [0, 1]")
        order = np.argsort(X, kind="stable")
        X, y = X[order], y[order]
        low = np.cumprod(y <= self.zero_tol).astype(bool)
        high = np.cumprod((y >= 1 - self.one_tol)[::-1]).astype(bool)[::-1]
        if not low.any() or not high.any():
            raise ValueError("curve must reach both the 0 and the 1 plateau")
        self.e_never_ = float(X[low][-1])
        self.e_always_ = float(X[high][0])
        if not self.e_never_ < self.e_always_:
            raise ValueError("plateaus overlap; curve is not monotone")
        self.n_features_in_ = 1
        return self

    def predict_proba(self, X):
        check_is_fitted(self, ["e_never_", "e_always_"])
        X = check_array(X, ensure_2d=False, dtype=float).reshape(-1)
        return _ramp(X, self.e_never_, self.e_always_, TransitionShape(self.transition_shape))

    def to_response_point(self, blinding_power: Power) -> ResponsePoint:
        check_is_fitted(self, ["e_never_", "e_always_"])
        return ResponsePoint(blinding_power, self.e_never_, self.e_always_)
