"""Subcarrier-wave receiver power budget and the carrier watchdog.

In an SCW receiver only ``1 / modulation_index`` of the incoming carrier is
moved into the sidebands by Bob's phase modulator, the spectral filter then
removes the carrier, and the module has a fixed insertion loss. Whatever
Eve wants at the APD must therefore be scaled up by
``modulation_index * 10**(loss/10)`` at Bob's entrance. The same factor
applies to c.w. powers and pulse energies.

The watchdog taps the rejected carrier through an attenuator; an elevated
reading reveals the bright blinding light.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from .detector import ConfigError, DetectorConfig, thresholds_at
from .optics import Decibel, Energy, Power, db_to_linear, from_nw, linear_to_db


class Stage(str, Enum):
    AFTER_FILTERING = "at_subcarriers_after_filtering"
    BEFORE_MODULATION = "before_modulation"
    ENTERING_BOB = "entering_bob"


STAGE_LABELS = {
    Stage.AFTER_FILTERING: "subcarriers after filtering",
    Stage.BEFORE_MODULATION: "spectrum before modulation",
    Stage.ENTERING_BOB: "spectrum entering Bob's module",
}


class WatchdogStatus(str, Enum):
    OK = "ok"
    ALARM = "alarm"
    BLINDED = "watchdog_blinded"


@dataclass(frozen=True)
class ScwChain:
    """Optical parameters of the SCW receiver.

    ``watchdog_alarm_threshold`` of None means "``alarm_factor`` times the
    nominal reading of Alice's carrier", resolved once the carrier is known.
    ``watchdog_blinding_threshold`` of None means the watchdog never blinds.
    """

    modulation_index: float = 20.0
    filter_extinction: Decibel = 30.0
    bob_insertion_loss: Decibel = 6.4
    watchdog_attenuation: Decibel = 0.0
    watchdog_alarm_threshold: Power | None = None
    alarm_factor: float = 3.0
    watchdog_blinding_threshold: Power | None = None
    include_carrier_leakage: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.modulation_index) and self.modulation_index > 1):
            raise ConfigError("modulation_index", "must be finite and > 1")
        for name in ("filter_extinction", "bob_insertion_loss", "watchdog_attenuation"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ConfigError(name, f"must be finite and >= 0 dB, got {value}")
        for name in ("watchdog_alarm_threshold", "watchdog_blinding_threshold"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigError(name, f"must be > 0, got {value}")
        if not self.alarm_factor > 1:
            raise ConfigError("alarm_factor", "must be > 1")

    @property
    def loss_factor(self) -> float:
        return db_to_linear(self.bob_insertion_loss)

    @property
    def conversion_factor(self) -> float:
        """Bob-input quantity per unit of sideband quantity at the APD."""
        return self.modulation_index * self.loss_factor

    def alarm_threshold_for(self, alice_carrier: Power) -> Power:
        if self.watchdog_alarm_threshold is not None:
            return self.watchdog_alarm_threshold
        return self.alarm_factor * watchdog_reading(alice_carrier, self)


@dataclass(frozen=True)
class ScwSpectrum:
    carrier_power: Power
    sideband_power: Power = 0.0

    def __post_init__(self):
        if self.carrier_power < 0 or self.sideband_power < 0:
            raise ValueError("spectral powers must be >= 0")


@dataclass(frozen=True)
class BudgetRow:
    stage: Stage
    blinding_power: Power
    e_always: Energy
    e_never: Energy


def required_input_for_subcarrier(target, chain: ScwChain):
    """Scale an APD-level power or energy up to Bob's entrance."""
    target = np.asarray(target, dtype=float)
    if np.any(target < 0):
        raise ValueError("target must be >= 0")
    out = target * chain.modulation_index * chain.loss_factor
    return float(out) if out.ndim == 0 else out


def required_before_modulation(target, chain: ScwChain):
    target = np.asarray(target, dtype=float)
    out = target * chain.modulation_index
    return float(out) if out.ndim == 0 else out


def table1(chain: ScwChain | None = None, blinding_power: Power | None = None,
           e_always: Energy | None = None, e_never: Energy | None = None,
           detector: DetectorConfig | None = None) -> list[BudgetRow]:
    """Eve's required power and energies at three points of the receiver.

    Thresholds default to the detector's response at ``blinding_power``
    (35 nW unless given).
    """
    chain = chain or ScwChain()
    detector = detector or DetectorConfig()
    if blinding_power is None:
        blinding_power = from_nw(35)
    if e_never is None or e_always is None:
        never, always = thresholds_at(blinding_power, detector)
        e_never = never if e_never is None else e_never
        e_always = always if e_always is None else e_always
    apd = np.array([blinding_power, e_always, e_never])
    mid = required_before_modulation(apd, chain)
    bob = required_input_for_subcarrier(apd, chain)
    return [BudgetRow(stage, *map(float, values)) for stage, values in (
        (Stage.AFTER_FILTERING, apd),
        (Stage.BEFORE_MODULATION, mid),
        (Stage.ENTERING_BOB, bob))]


def propagate_eve_spectrum(spectrum: ScwSpectrum, chain: ScwChain) -> tuple[Power, Power]:
    """``(at_apd, at_watchdog)`` for light entering Bob's module.

    The APD sees the carrier share converted into sidebands, plus whatever
    sideband light was sent directly, the latter attenuated by the filter
    extinction. Carrier leakage through the filter is added only when
    ``chain.include_carrier_leakage`` is set.
    """
    loss = chain.loss_factor
    extinction = db_to_linear(chain.filter_extinction)
    carrier = spectrum.carrier_power / loss
    at_apd = carrier / chain.modulation_index + spectrum.sideband_power / (loss * extinction)
    if chain.include_carrier_leakage:
        at_apd += carrier * (1 - 1 / chain.modulation_index) / extinction
    at_watchdog = carrier / db_to_linear(chain.watchdog_attenuation)
    return at_apd, at_watchdog


def watchdog_reading(carrier: Power, chain: ScwChain) -> Power:
    return propagate_eve_spectrum(ScwSpectrum(carrier), chain)[1]


def watchdog_check(at_watchdog: Power, chain: ScwChain,
                   watchdog_blinding_threshold: Power | None = None,
                   alarm_threshold: Power | None = None) -> WatchdogStatus:
    """Classify one watchdog reading.

    A blinded watchdog is reported in preference to an alarm: it means the
    countermeasure itself has been defeated.
    """
    blind = (watchdog_blinding_threshold if watchdog_blinding_threshold is not None
             else chain.watchdog_blinding_threshold)
    if blind is not None and at_watchdog >= blind:
        return WatchdogStatus.BLINDED
    threshold = alarm_threshold if alarm_threshold is not None else chain.watchdog_alarm_threshold
    if threshold is None:
        raise ValueError("no alarm threshold configured")
    return WatchdogStatus.ALARM if at_watchdog > threshold else WatchdogStatus.OK


@dataclass(frozen=True)
class AttenuationWindow:
    """Admissible watchdog attenuation in dB; ``low`` is excluded if ``low_open``."""

    low: Decibel
    high: Decibel
    low_open: bool = False

    @property
    def empty(self) -> bool:
        return self.low > self.high or (self.low_open and self.low == self.high)

    def __contains__(self, value: Decibel) -> bool:
        if self.empty:
            return False
        above = value > self.low if self.low_open else value >= self.low
        return above and value <= self.high

    def midpoint(self) -> Decibel:
        if self.empty:
            raise ValueError("attenuation window is empty")
        return 0.5 * (self.low + self.high)


def find_attenuation_window(alice_carrier: Power, eve_carrier: Power,
                            watchdog_sensitivity_floor: Power,
                            watchdog_blinding_threshold: Power,
                            loss: Decibel = 6.4, max_attenuation: Decibel = 100.0
                            ) -> AttenuationWindow:
    """Attenuations at which D still sees Alice's carrier but is not blinded by Eve's.

    Both conditions are linear in dB:
    ``alice - loss - A >= floor`` and ``eve - loss - A < blind``.
    """
    if not eve_carrier > alice_carrier > 0:
        raise ValueError("requires eve_carrier > alice_carrier > 0")
    loss_lin = db_to_linear(loss)
    if watchdog_sensitivity_floor > 0:
        high = linear_to_db(alice_carrier / (loss_lin * watchdog_sensitivity_floor))
    else:
        high = math.inf
    if math.isfinite(watchdog_blinding_threshold):
        low = linear_to_db(eve_carrier / (loss_lin * watchdog_blinding_threshold))
    else:
        low = -math.inf
    low_open = low >= 0
    return AttenuationWindow(max(0.0, low), min(max_attenuation, high), low_open)


class ScwBudget(BaseEstimator, TransformerMixin):
    """Transformer between APD-level and Bob-entrance power/energy levels.

    ``transform`` scales APD-level quantities up to what Eve must inject;
    ``inverse_transform`` maps injected carrier levels back to the APD.
    Stateless apart from parameter validation in ``fit``.
    """

    def __init__(self, modulation_index: float = 20.0, bob_insertion_loss: Decibel = 6.4):
        self.modulation_index = modulation_index
        self.bob_insertion_loss = bob_insertion_loss

    def fit(self, X=None, y=None):
        self.chain_ = ScwChain(modulation_index=self.modulation_index,
                               bob_insertion_loss=self.bob_insertion_loss)
        if X is not None:
            X = check_array(X, ensure_2d=False, dtype=float)
            self.n_features_in_ = 1 if X.ndim == 1 else X.shape[1]
        return self

    def _chain(self):
        if not hasattr(self, "chain_"):
            self.fit()
        return self.chain_

    def transform(self, X):
        X = check_array(X, ensure_2d=False, dtype=float)
        return required_input_for_subcarrier(X, self._chain())

    def inverse_transform(self, X):
        X = check_array(X, ensure_2d=False, dtype=float)
        chain = self._chain()
        if np.any(X < 0):
            raise ValueError("inputs must be >= 0")
        return X / chain.conversion_factor
