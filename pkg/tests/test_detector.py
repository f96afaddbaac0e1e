import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import POISSON_FROZEN, dead_time_ok
from qkdblind.optics import from_fj, from_nw
from qkdblind.detector import (
    ClickThresholdEstimator, ConfigError, DeadTimeViolation, Detector, DetectorConfig,
    DetectorState, GateInput, Mode, ResponsePoint, blinded_click_probability, characterize,
    check_dead_time, click_probability, geiger_click_probability, is_blinded, process_gate,
    resolve_dead_time, thresholds_at,
)

NW, FJ = 1e-9, 1e-15


def nw(x):
    return from_nw(repr(x))


def fj(x):
    return from_fj(repr(x))


DEFAULT = DetectorConfig()
# illustrative second row: sharper ramp at high power (made-up thresholds)
HIGH_ROW = ResponsePoint(nw(2512), fj(18.0), fj(21.0))


def test_defaults_follow_operating_point():
    assert DEFAULT.efficiency == 0.10
    assert DEFAULT.gate_frequency == 1e8
    assert DEFAULT.gate_width == 3e-9
    assert DEFAULT.dead_time == 100e-9
    assert DEFAULT.dark_count_rate == 200.0
    assert DEFAULT.blinding_threshold == 24e-9
    assert DEFAULT.response_points == (ResponsePoint(35e-9, 15.4e-15, 25.8e-15),)
    assert DEFAULT.dead_gates == 10


@pytest.mark.parametrize("power_nw, expected", [(24, True), (0, False), (35, True), (23.99, False)])
def test_is_blinded(power_nw, expected):
    assert is_blinded(power_nw * NW, DEFAULT) is expected


@pytest.mark.parametrize("energy_fj, expected", [
    (15.4, 0.0), (25.8, 1.0), (0.0, 0.0), (10.0, 0.0), (30.0, 1.0),
])
def test_blinded_plateaus(energy_fj, expected):
    assert blinded_click_probability(fj(energy_fj), nw(35), DEFAULT) == expected


def test_blinded_linear_midpoint():
    assert blinded_click_probability(fj(20.6), nw(35), DEFAULT) == pytest.approx(0.5, abs=1e-12)


def test_logistic_shape_keeps_plateaus_and_midpoint():
    cfg = DEFAULT.with_(transition_shape="logistic")
    assert blinded_click_probability(fj(15.4), nw(35), cfg) == 0.0
    assert blinded_click_probability(fj(25.8), nw(35), cfg) == 1.0
    assert blinded_click_probability(fj(20.6), nw(35), cfg) == pytest.approx(0.5, abs=1e-12)


def test_blinded_probability_requires_blinding():
    with pytest.raises(ValueError):
        blinded_click_probability(fj(30), nw(10), DEFAULT)


@pytest.mark.parametrize("shape", ["linear", "logistic"])
@pytest.mark.parametrize("power_nw", [24, 35, 300, 2512, 5000])
def test_blinded_monotone_in_energy(shape, power_nw):
    cfg = DEFAULT.with_(transition_shape=shape,
                        response_points=DEFAULT.response_points + (HIGH_ROW,))
    energies = np.linspace(0, 40, 4001) * FJ
    p = blinded_click_probability(energies, power_nw * NW, cfg)
    assert np.all(np.diff(p) >= 0)
    assert p[0] == 0.0 and p[-1] == 1.0


def test_thresholds_interpolate_and_clamp():
    cfg = DEFAULT.with_(response_points=DEFAULT.response_points + (HIGH_ROW,))
    assert thresholds_at(nw(24), cfg) == (15.4e-15, 25.8e-15)
    assert thresholds_at(nw(9000), cfg) == (18e-15, 21e-15)
    never, always = thresholds_at((35 + 2512) / 2 * NW, cfg)
    assert never == pytest.approx((15.4 + 18) / 2 * FJ)
    assert always == pytest.approx((25.8 + 21) / 2 * FJ)


def test_wider_ramp_at_higher_power_is_rejected():
    wide = ResponsePoint(nw(2512), fj(10), fj(30))
    with pytest.raises(ConfigError, match="response_points\\[1\\]"):
        DEFAULT.with_(response_points=DEFAULT.response_points + (wide,))


@pytest.mark.parametrize("changes, field", [
    ({"efficiency": 1.2}, "efficiency"),
    ({"dead_time": 0.0}, "dead_time"),
    ({"gate_frequency": -1.0}, "gate_frequency"),
    ({"response_points": (ResponsePoint(nw(35), fj(20), fj(20)),)}, "response_points[0]"),
    ({"response_points": (ResponsePoint(nw(35), fj(15), fj(25)),
                          ResponsePoint(nw(35), fj(16), fj(20)))}, "response_points[1]"),
    ({"response_points": ()}, "response_points"),
])
def test_invalid_config(changes, field):
    with pytest.raises(ConfigError) as info:
        DEFAULT.with_(**changes)
    assert info.value.field == field


def test_geiger_dark_only():
    assert geiger_click_probability(GateInput(), DEFAULT) == pytest.approx(2e-6, rel=1e-12)
    assert geiger_click_probability(GateInput(), DEFAULT.with_(dark_count_rate=0.0)) == 0.0


def test_geiger_composes_photon_and_dark_probabilities():
    expected = 1 - (1 - POISSON_FROZEN[(1, 0.1)]) * (1 - 2e-6)
    got = geiger_click_probability(GateInput(mean_photons=1.0), DEFAULT)
    assert got == pytest.approx(expected, abs=1e-9)


def test_geiger_rejects_blinded_input():
    with pytest.raises(ValueError):
        geiger_click_probability(GateInput(cw_power=nw(30)), DEFAULT)


def test_unblinded_detector_sees_bright_trigger():
    # 25.8 fJ at 1550 nm is ~2e5 photons: certain click without blinding
    p = click_probability(nw(10), fj(25.8), 0.0, DEFAULT)
    assert float(p) == pytest.approx(1.0)


def test_click_probability_dispatch():
    cw = np.array([0.0, nw(35), nw(35), nw(35)])
    trig = np.array([0.0, 0.0, fj(20.6), fj(30)])
    p = click_probability(cw, trig, 0.0, DEFAULT)
    np.testing.assert_allclose(p, [2e-6, 0.0, 0.5, 1.0], atol=1e-12)


def test_process_gate_dead_time(rng):
    gate = GateInput(cw_power=nw(35), trigger_energy=fj(30), gate_time=0.0)
    click, state = process_gate(DetectorState(), gate, DEFAULT, rng)
    assert click and state.mode is Mode.BLINDED
    assert state.dead_until == pytest.approx(100e-9)
    for k in range(1, 10):
        later = GateInput(cw_power=nw(35), trigger_energy=fj(30), gate_time=k * 1e-8)
        click, state = process_gate(state, later, DEFAULT, rng)
        assert not click
    # exactly one dead time later the detector is live again
    click, state = process_gate(
        state, GateInput(cw_power=nw(35), trigger_energy=fj(30), gate_time=10 * 1e-8),
        DEFAULT, rng)
    assert click


def test_process_gate_mode_tracks_power_while_dead(rng):
    state = DetectorState(mode=Mode.BLINDED, dead_until=1e-6)
    click, state = process_gate(state, GateInput(cw_power=0.0, gate_time=1e-8), DEFAULT, rng)
    assert not click and state.mode is Mode.GEIGER and state.dead_until == 1e-6


def test_blinded_zero_trigger_never_clicks(rng):
    state = DetectorState()
    for k in range(20000):
        click, state = process_gate(state, GateInput(cw_power=nw(35), gate_time=k * 1e-8),
                                    DEFAULT, rng)
        assert not click


def test_detector_rejects_out_of_order_gates(rng):
    det = Detector(rng=rng)
    det.gate(GateInput(gate_time=2e-8))
    with pytest.raises(ValueError):
        det.gate(GateInput(gate_time=1e-8))


def test_detector_determinism():
    def clicks(seed):
        det = Detector(rng=np.random.default_rng(seed))
        for k in range(5000):
            det.gate(GateInput(mean_photons=2.0, gate_time=k * 1e-8))
        return det.click_times
    assert clicks(7) == clicks(7)
    assert clicks(7) != clicks(8)


def test_scalar_detector_respects_dead_time(rng):
    det = Detector(rng=rng)
    for k in range(20000):
        det.gate(GateInput(mean_photons=500.0, gate_time=k * 1e-8))
    gates = [round(t / 1e-8) for t in det.click_times]
    assert len(gates) > 1000
    assert dead_time_ok(gates, 10)
    # saturating light: a click exactly every dead time
    assert set(np.diff(gates)) == {10}


def test_resolve_dead_time_matches_sequential_oracle():
    rng = np.random.default_rng(3)
    for _ in range(200):
        cand = np.sort(rng.choice(500, size=rng.integers(0, 120), replace=False))
        accepted, next_free = resolve_dead_time(cand, 10, 0)
        expected, free = [], 0
        for g in cand:
            if g >= free:
                expected.append(int(g))
                free = g + 10
        assert accepted.tolist() == expected
        if expected:
            assert next_free == expected[-1] + 10


def test_check_dead_time_raises():
    check_dead_time([0, 10, 25], DEFAULT)
    with pytest.raises(DeadTimeViolation):
        check_dead_time([0, 10, 19], DEFAULT)


def test_characterize_blinded_plateaus(rng):
    for energy, expected in ((fj(15.4), 0), (fj(25.8), 1)):
        clicks, pulse_clicks, pulses = characterize(DEFAULT, nw(35), energy, 200_000, rng)
        assert pulses == 20_000
        assert pulse_clicks == expected * pulses
        assert clicks == pulse_clicks


def test_blinding_kills_dark_counts_1e7_gates():
    clicks, _, _ = characterize(DEFAULT, nw(24), 0.0, 10_000_000, np.random.default_rng(1))
    assert clicks == 0


def test_threshold_estimator_recovers_configured_thresholds(rng):
    energies = np.round(np.arange(10.0, 35.01, 0.2), 10)
    probs = []
    for e in energies:
        _, hits, pulses = characterize(DEFAULT, nw(35), e * FJ, 20_000, rng)
        probs.append(hits / pulses)
    est = ClickThresholdEstimator().fit(energies, probs)
    assert est.e_never_ == pytest.approx(15.4, abs=0.2 + 1e-9)
    assert est.e_always_ == pytest.approx(25.8, abs=0.2 + 1e-9)
    assert est.get_params() == {"zero_tol": 0.0, "one_tol": 0.0, "transition_shape": "linear"}
    np.testing.assert_array_equal(est.predict_proba([0.0, 40.0]), [0.0, 1.0])
    point = est.to_response_point(nw(35))
    assert point.e_never < point.e_always


def test_threshold_estimator_needs_both_plateaus():
    with pytest.raises(ValueError):
        ClickThresholdEstimator().fit([1.0, 2.0, 3.0], [0.0, 0.3, 0.6])


@settings(deadline=None, max_examples=50)
@given(st.floats(0, 60), st.floats(24, 6000))
def test_probability_bounds(energy_fj, power_nw):
    cfg = DEFAULT.with_(response_points=DEFAULT.response_points + (HIGH_ROW,))
    p = blinded_click_probability(energy_fj * FJ, power_nw * NW, cfg)
    assert 0.0 <= p <= 1.0
    never, always = thresholds_at(power_nw * NW, cfg)
    if energy_fj * FJ <= never:
        assert p == 0.0
    if energy_fj * FJ >= always:
        assert p == 1.0
