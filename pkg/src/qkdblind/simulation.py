"""Scenario execution: single runs, multi-seed batches and threshold sweeps."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .bb84 import AttackMode, AttackParams, BB84Engine, ChannelSetup, EventLog, RunStats, Tally
from .config import Protocol, ScenarioConfig, SweepSpec, SweepVariable
from .detector import characterize
from .rng import derive_stream, streams
from .scw import ScwSpectrum, WatchdogStatus, propagate_eve_spectrum, watchdog_check, watchdog_reading

log = logging.getLogger(__name__)

EventSink = Callable[[EventLog], None]


@dataclass
class RunResult:
    stats: RunStats
    log: EventLog | None = None


@dataclass(frozen=True)
class _Watchdog:
    alice_reading: float
    eve_reading: float
    alice_status: WatchdogStatus
    eve_status: WatchdogStatus


def apd_attack(cfg: ScenarioConfig) -> AttackParams | None:
    """Attack parameters referred to Bob's detectors.

    For SCW the configured powers are what Eve injects at Bob's entrance;
    they reach the APD through the carrier-to-sideband conversion.
    """
    atk = cfg.attack
    if atk is None or not atk.enabled:
        return None
    if cfg.protocol is Protocol.BB84 or atk.mode is AttackMode.INTERCEPT_RESEND:
        return atk
    cw, _ = propagate_eve_spectrum(ScwSpectrum(atk.cw_power), cfg.scw)
    trig, _ = propagate_eve_spectrum(ScwSpectrum(atk.trigger_energy), cfg.scw)
    return AttackParams(enabled=True, cw_power=cw, trigger_energy=trig,
                        forge_rate=atk.forge_rate, mode=atk.mode,
                        start_gate=atk.start_gate)


def _watchdog(cfg: ScenarioConfig) -> _Watchdog | None:
    if cfg.protocol is not Protocol.SCW:
        return None
    chain = cfg.scw
    threshold = chain.alarm_threshold_for(cfg.alice_carrier_power)
    log.info("watchdog alarm threshold %.6g nW (%s)", threshold * 1e9,
             "configured" if chain.watchdog_alarm_threshold is not None
             else f"{chain.alarm_factor:g} x Alice's reading")
    alice = watchdog_reading(cfg.alice_carrier_power, chain)
    atk = cfg.attack
    eve_carrier = atk.cw_power if atk is not None and atk.enabled and \
        atk.mode is AttackMode.BLINDING else cfg.alice_carrier_power
    eve = watchdog_reading(eve_carrier, chain)
    return _Watchdog(alice, eve,
                     watchdog_check(alice, chain, alarm_threshold=threshold),
                     watchdog_check(eve, chain, alarm_threshold=threshold))


def run(cfg: ScenarioConfig, *, run_index: int = 0, keep_log: bool = False,
        event_sink: EventSink | None = None) -> RunResult:
    """Execute every gate of ``cfg`` in order.

    The statistics never depend on whether the event log is kept. Every
    chunk is checked for dead-time violations as it is produced.
    """
    attack = apd_attack(cfg)
    channel = ChannelSetup(
        mean_photons=cfg.mean_photons * cfg.channel_transmission,
        alice_mean_photons=cfg.mean_photons,
        attack=attack)
    engine = BB84Engine(cfg.detector, channel, streams(cfg.seed, run_index))
    watchdog = _watchdog(cfg)
    tally = Tally()
    kept: list[EventLog] = []
    for chunk, forged in engine.chunks(cfg.gates):
        tally.add_log(chunk)
        tally.forged += int(np.count_nonzero(forged))
        if watchdog is not None:
            attacked = _attacked_mask(chunk.gate_index, attack)
            status = np.where(attacked, watchdog.eve_status.value, watchdog.alice_status.value)
            chunk.alarm = status == WatchdogStatus.ALARM.value
            blinded = status == WatchdogStatus.BLINDED.value
            tally.alarms += int(np.count_nonzero(chunk.alarm))
            tally.watchdog_blinded += int(np.count_nonzero(blinded))
            if tally.first_alarm_gate is None and chunk.alarm.any():
                tally.first_alarm_gate = int(chunk.gate_index[np.argmax(chunk.alarm)])
        if event_sink is not None:
            event_sink(chunk)
        if keep_log:
            kept.append(chunk)
    stats = tally.stats(cfg.detector.gate_frequency, attacked=attack is not None)
    log.debug("run seed=%d index=%d: %s", cfg.seed, run_index, stats)
    return RunResult(stats, EventLog.concat(kept) if keep_log else None)


def _attacked_mask(gate_index: np.ndarray, attack: AttackParams | None) -> np.ndarray:
    if attack is None:
        return np.zeros(gate_index.size, dtype=bool)
    return gate_index >= attack.start_gate


def _run_stats(args) -> RunStats:
    cfg, run_index = args
    return run(cfg, run_index=run_index).stats


def run_many(cfg: ScenarioConfig, seeds: Iterable[int], workers: int = 1) -> list[RunStats]:
    """Independent runs, one per seed, returned in seed order."""
    jobs = [(cfg.with_(seed=s), 0) for s in seeds]
    if workers <= 1:
        return [_run_stats(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_stats, jobs))


@dataclass(frozen=True)
class SweepPoint:
    value: float
    trials: int
    clicks: int
    probability: float
    stderr: float
    click_rate: float


def _sweep_point(args) -> SweepPoint:
    spec, base, index, value = args
    atk = base.attack or AttackParams()
    cw, trigger = atk.cw_power, atk.trigger_energy
    if spec.variable is SweepVariable.TRIGGER_ENERGY:
        trigger = value
    else:
        cw = value
    rng = derive_stream(base.seed, "sweep", index)
    gates = spec.gates_per_point
    clicks, pulse_clicks, pulses = characterize(
        base.detector, cw, trigger, gates, rng, pulse_rate=atk.forge_rate)
    # per pulse when pulsed, otherwise per gate (dark counts)
    trials, hits = (pulses, pulse_clicks) if pulses else (gates, clicks)
    p = hits / trials
    return SweepPoint(value=value, trials=trials, clicks=hits, probability=p,
                      stderr=math.sqrt(p * (1 - p) / trials),
                      click_rate=clicks * base.detector.gate_frequency / gates)


def sweep(spec: SweepSpec, base: ScenarioConfig, workers: int = 1) -> list[SweepPoint]:
    """Click probability of one detector along a trigger-energy or c.w.-power axis.

    Each point owns an RNG stream derived from ``(base.seed, "sweep", index)``,
    so results do not depend on ``workers``.
    """
    jobs = [(spec, base, i, v) for i, v in enumerate(spec.values())]
    if workers <= 1:
        return [_sweep_point(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_point, jobs))


def ramp_width(points: Sequence[SweepPoint]) -> float:
    """Energy span between the last 0-probability and first 1-probability points."""
    zero = [p.value for p in points if p.probability == 0.0]
    one = [p.value for p in points if p.probability == 1.0]
    if not zero or not one:
        raise ValueError("sweep does not reach both plateaus")
    below = max(v for v in zero if v < min(one))
    return min(one) - below
