import math

import numpy as np
import pytest

from oracles import TABLE1_EXACT
from qkdblind.bb84 import AttackMode, AttackParams
from qkdblind.config import ConfigErrors, ScenarioConfig, SweepSpec, loads
from qkdblind.detector import DetectorConfig, ResponsePoint
from qkdblind.optics import from_fj, from_nw
from qkdblind.scw import ScwChain, find_attenuation_window
from qkdblind.simulation import apd_attack, ramp_width, run, run_many, sweep

NW, FJ = 1e-9, 1e-15
ATTACK = AttackParams(cw_power=from_nw(35), trigger_energy=from_fj("25.8"))


def test_same_seed_same_result():
    cfg = ScenarioConfig(gates=200_000, seed=11, attack=ATTACK)
    a, b = run(cfg, keep_log=True), run(cfg, keep_log=True)
    assert a.stats == b.stats
    np.testing.assert_array_equal(a.log.click0, b.log.click0)
    assert run(cfg.with_(seed=12)).stats != a.stats


def test_stats_do_not_depend_on_logging():
    cfg = ScenarioConfig(gates=100_000, seed=3)
    seen = []
    with_sink = run(cfg, event_sink=seen.append)
    assert with_sink.stats == run(cfg).stats
    assert sum(len(log) for log in seen) == cfg.gates


def test_run_many_matches_single_runs():
    cfg = ScenarioConfig(gates=50_000, attack=ATTACK)
    batch = run_many(cfg, [1, 2, 3])
    assert batch == [run(cfg.with_(seed=s)).stats for s in (1, 2, 3)]
    assert run_many(cfg, [1, 2, 3], workers=2) == batch


def test_dark_rate_two_detectors():
    gates = 20_000_000
    stats = run(ScenarioConfig(gates=gates, seed=4, mean_photons=0.0)).stats
    expected = 2 * 200.0 / 1e8 * gates
    assert abs(stats.clicks - expected) < 5 * math.sqrt(expected)
    assert stats.raw_click_rate == pytest.approx(400.0, rel=5 / math.sqrt(expected))


def test_qber_vanishes_without_dark_counts():
    quiet = DetectorConfig(dark_count_rate=0.0)
    stats = run(ScenarioConfig(gates=500_000, seed=1, detector=quiet, mean_photons=0.5)).stats
    assert stats.sifted_bits > 1000 and stats.errors == 0 and stats.qber == 0.0
    noisy = DetectorConfig(dark_count_rate=2e5)
    assert run(ScenarioConfig(gates=500_000, seed=1, detector=noisy,
                              mean_photons=0.5)).stats.qber > 0


def test_no_sifted_bits_gives_missing_qber():
    stats = run(ScenarioConfig(gates=1000, detector=DetectorConfig(dark_count_rate=0.0),
                               mean_photons=0.0)).stats
    assert stats.sifted_bits == 0 and stats.qber is None and stats.eve_known_fraction is None


def test_sweep_plateaus():
    spec = SweepSpec.from_cli("trigger_energy_fj", "10", "35", 26, 1_000_000)
    points = sweep(spec, ScenarioConfig(attack=ATTACK))
    for p in points:
        assert p.trials == 100_000
        if p.value <= 15.4 * FJ:
            assert p.probability == 0.0
        if p.value >= 25.8 * FJ:
            assert p.probability == 1.0
    mid = [p for p in points if 15.4 * FJ < p.value < 25.8 * FJ]
    assert all(0 < p.probability < 1 for p in mid)
    assert ramp_width(points) == pytest.approx(11 * FJ)


def test_sweep_independent_of_workers():
    spec = SweepSpec.from_cli("trigger_energy_fj", "18", "22", 3, 200_000)
    base = ScenarioConfig(attack=ATTACK, seed=8)
    assert sweep(spec, base, workers=2) == sweep(spec, base)


def test_sharper_ramp_at_higher_power():
    high = ResponsePoint(from_nw("2512"), from_fj("18"), from_fj("21"))
    det = DetectorConfig(response_points=DetectorConfig().response_points + (high,))
    spec = SweepSpec.from_cli("trigger_energy_fj", "10", "35", 101, 200_000)
    low_pts = sweep(spec, ScenarioConfig(detector=det, attack=ATTACK))
    high_pts = sweep(spec, ScenarioConfig(detector=det, attack=AttackParams(
        cw_power=from_nw("2512"))))
    assert ramp_width(high_pts) < ramp_width(low_pts)


def test_zero_width_sweep():
    spec = SweepSpec.from_cli("trigger_energy_fj", "20", "20", 1, 100_000)
    points = sweep(spec, ScenarioConfig(attack=ATTACK))
    assert len(points) == 1 and points[0].value == from_fj("20")


def test_cw_sweep_across_threshold():
    spec = SweepSpec.from_cli("cw_power_nw", "0", "48", 3, 1_000_000)
    points = sweep(spec, ScenarioConfig(attack=AttackParams(trigger_energy=0.0)))
    assert points[1].clicks == points[2].clicks == 0
    assert points[0].click_rate > 0


def test_invalid_config_rejected_before_running():
    with pytest.raises(ConfigErrors) as info:
        loads("gates: 1000000000000\ndetector: {efficiency: -1}\n")
    assert info.value.field == "detector.efficiency"


def test_plain_intercept_resend_attack_is_untouched():
    cfg = ScenarioConfig(attack=AttackParams(mode=AttackMode.INTERCEPT_RESEND))
    assert apd_attack(cfg) is cfg.attack


def scw_scenario(attack_enabled=True, start_gate=500, gates=20_000):
    alice = 1e-6
    eve_cw = TABLE1_EXACT["bob"][0] * NW
    window = find_attenuation_window(alice, eve_cw, 1 * NW, 1e-6)
    chain = ScwChain(watchdog_attenuation=window.midpoint())
    attack = AttackParams(enabled=attack_enabled, cw_power=eve_cw,
                          trigger_energy=TABLE1_EXACT["bob"][1] * FJ, start_gate=start_gate)
    return ScenarioConfig(protocol="scw", gates=gates, scw=chain, attack=attack,
                          alice_carrier_power=alice)


def test_scw_attack_reaches_apd_at_table_levels():
    atk = apd_attack(scw_scenario())
    assert atk.cw_power == pytest.approx(35 * NW, rel=1e-12)
    assert atk.trigger_energy == pytest.approx(25.8 * FJ, rel=1e-12)


def test_scw_watchdog_alarms_on_first_attacked_gate():
    stats = run(scw_scenario()).stats
    assert stats.first_alarm_gate == 500
    assert stats.alarms == 20_000 - 500
    # a few bits are sifted from Alice's own pulses before the attack starts
    assert stats.errors == 0 and 0.95 < stats.eve_known_fraction < 1.0
    assert run(scw_scenario(start_gate=0)).stats.eve_known_fraction == 1.0


def test_scw_without_eve_is_quiet():
    stats = run(scw_scenario(attack_enabled=False)).stats
    assert stats.alarms == 0 and stats.first_alarm_gate is None


def test_scw_blind_watchdog_is_flagged():
    cfg = scw_scenario()
    cfg = cfg.with_(scw=ScwChain(watchdog_attenuation=0.0, watchdog_blinding_threshold=500 * NW))
    stats = run(cfg).stats
    assert stats.watchdog_blinded == 20_000 - 500
    assert stats.alarms == 0
