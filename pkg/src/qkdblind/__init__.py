"""Seeded simulator of detector-blinding faked-state attacks on BB84 and SCW QKD."""

from .bb84 import (
    AttackMode, AttackParams, Basis, BB84Symbol, EventLog, FakedState, GateRecord, RunStats,
    alice_emit, attack_window, bob_receive_faked, bob_receive_quantum, eve_forge, eve_measure,
    in_attack_window, sift_and_score,
)
from .config import Protocol, ScenarioConfig, SweepSpec, SweepVariable
from .detector import (
    ClickThresholdEstimator, ConfigError, Detector, DetectorConfig, DetectorState, GateInput,
    ResponsePoint, blinded_click_probability, geiger_click_probability, is_blinded,
    process_gate,
)
from .optics import db_to_linear, mean_photons_to_click_prob, pulse_energy_from_avg_power
from .scw import (
    ScwBudget, ScwChain, ScwSpectrum, find_attenuation_window, propagate_eve_spectrum,
    required_input_for_subcarrier, table1, watchdog_check,
)
from .simulation import run, run_many, sweep

__version__ = "0.1.0"
