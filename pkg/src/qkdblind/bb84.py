"""BB84 with Alice, an intercepting Eve and a two-detector Bob.

Bases and bits are encoded as small integers (Z=0, X=1) so that whole runs
can be simulated as numpy arrays; the scalar helpers (``alice_emit``,
``eve_measure``, ``bob_receive_faked`` ...) operate on single gates and
define the semantics that the vectorised engine reproduces.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from enum import Enum, IntEnum
from typing import Iterator, Sequence

import numpy as np

from .detector import (
    DetectorConfig, DetectorState, GateInput, check_dead_time, click_probability,
    process_gate, resolve_dead_time,
)
from .optics import Energy, Power, check_nonnegative

NO_EVE = -1


class Basis(IntEnum):
    Z = 0
    X = 1


class AttackMode(str, Enum):
    BLINDING = "blinding_faked_state"
    INTERCEPT_RESEND = "plain_intercept_resend"


@dataclass(frozen=True)
class BB84Symbol:
    basis: Basis
    bit: int
    mean_photons: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "basis", Basis(self.basis))
        if self.bit not in (0, 1):
            raise ValueError(f"bit must be 0 or 1, got {self.bit!r}")
        check_nonnegative(self.mean_photons, "mean_photons")


@dataclass(frozen=True)
class FakedState:
    basis: Basis
    bit: int
    trigger_energy: Energy
    cw_power: Power

    def __post_init__(self):
        object.__setattr__(self, "basis", Basis(self.basis))
        check_nonnegative(self.trigger_energy, "trigger_energy")
        check_nonnegative(self.cw_power, "cw_power")


@dataclass(frozen=True)
class AttackParams:
    """Eve's settings. Powers and energies are those arriving at Bob's input.

    ``start_gate`` is the first attacked gate; earlier gates carry Alice's
    undisturbed signal.
    """

    enabled: bool = True
    cw_power: Power = 35e-9
    trigger_energy: Energy = 25.8e-15
    forge_rate: float = 1e7
    mode: AttackMode = AttackMode.BLINDING
    start_gate: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", AttackMode(self.mode))
        check_nonnegative(self.cw_power, "cw_power")
        check_nonnegative(self.trigger_energy, "trigger_energy")
        if not self.forge_rate > 0:
            raise ValueError(f"forge_rate must be > 0, got {self.forge_rate}")
        if self.start_gate < 0:
            raise ValueError("start_gate must be >= 0")


@dataclass(frozen=True)
class GateRecord:
    gate_index: int
    alice: BB84Symbol
    eve_basis: Basis | None
    eve_bit: int | None
    bob_basis: Basis
    click0: bool
    click1: bool
    sifted: bool
    error: bool


@dataclass(frozen=True)
class RunStats:
    gates_total: int
    clicks: int
    double_clicks: int
    sifted_bits: int
    errors: int
    qber: float | None
    eve_known_fraction: float | None
    raw_click_rate: float
    alarms: int = 0
    wrong_basis_clicks: int = 0
    forged_pulses: int = 0
    first_alarm_gate: int | None = None
    watchdog_blinded: int = 0

    def __post_init__(self):
        if self.errors > self.sifted_bits:
            raise ValueError("errors cannot exceed sifted bits")
        for name in ("qber", "eve_known_fraction"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")


def attack_window(e_never: Energy, e_always: Energy) -> tuple[Energy, Energy] | None:
    """Trigger energies that click on a basis match and never on a mismatch.

    A mismatched basis splits the pulse evenly over both detectors, so the
    pulse must satisfy ``e_always <= E`` and ``E / 2 <= e_never``. Returns
    None when the window is empty.
    """
    upper = 2.0 * e_never
    return (e_always, upper) if e_always <= upper else None


def in_attack_window(trigger_energy: Energy, e_never: Energy, e_always: Energy) -> bool:
    window = attack_window(e_never, e_always)
    return window is not None and window[0] <= trigger_energy <= window[1]


# -- single-gate operations ----------------------------------------------------

def alice_emit(rng: np.random.Generator, mean_photons: float = 0.1) -> BB84Symbol:
    basis, bit = rng.integers(0, 2, size=2)
    return BB84Symbol(Basis(int(basis)), int(bit), mean_photons)


def eve_measure(symbol: BB84Symbol, rng: np.random.Generator) -> tuple[Basis, int]:
    """Ideal intercept: right basis gives Alice's bit, wrong basis a coin flip."""
    basis, coin = rng.integers(0, 2, size=2)
    basis = Basis(int(basis))
    bit = symbol.bit if basis == symbol.basis else int(coin)
    return basis, bit


def eve_forge(measurement: tuple[Basis, int], attack: AttackParams) -> FakedState:
    # no clamping: out-of-window energies simulate a failed attack
    basis, bit = measurement
    return FakedState(basis, bit, attack.trigger_energy, attack.cw_power)


def route(sender_basis, sender_bit, bob_basis, amount):
    """Split light between detector 0 and 1 for Bob's passive basis choice.

    Matched basis: everything lands on ``detector[sender_bit]``. Mismatched
    basis: an exact 50:50 split. Works on scalars and arrays.
    """
    sender_basis = np.asarray(sender_basis)
    sender_bit = np.asarray(sender_bit)
    amount = np.asarray(amount, dtype=float)
    matched = sender_basis == np.asarray(bob_basis)
    half = amount / 2.0
    to0 = np.where(matched, np.where(sender_bit == 0, amount, 0.0), half)
    to1 = np.where(matched, np.where(sender_bit == 1, amount, 0.0), half)
    return to0, to1


def _resolve_pair(inputs, detectors, config, rng):
    clicks, states = [], []
    for gate, state in zip(inputs, detectors):
        click, new_state = process_gate(state, gate, config, rng)
        clicks.append(click)
        states.append(new_state)
    return clicks[0], clicks[1], tuple(states)


def bob_receive_faked(state: FakedState, bob_basis: Basis,
                      detectors: Sequence[DetectorState], config: DetectorConfig,
                      rng: np.random.Generator, gate_time: float = 0.0):
    e0, e1 = route(state.basis, state.bit, bob_basis, state.trigger_energy)
    inputs = [GateInput(cw_power=state.cw_power, trigger_energy=float(e),
                        gate_time=gate_time) for e in (e0, e1)]
    return _resolve_pair(inputs, detectors, config, rng)


def bob_receive_quantum(symbol: BB84Symbol, bob_basis: Basis,
                        detectors: Sequence[DetectorState], config: DetectorConfig,
                        rng: np.random.Generator, gate_time: float = 0.0):
    m0, m1 = route(symbol.basis, symbol.bit, bob_basis, symbol.mean_photons)
    inputs = [GateInput(mean_photons=float(m), gate_time=gate_time) for m in (m0, m1)]
    return _resolve_pair(inputs, detectors, config, rng)


# -- event log -----------------------------------------------------------------

LOG_COLUMNS = ("gate_index", "alice_basis", "alice_bit", "alice_mean_photons",
               "eve_basis", "eve_bit", "bob_basis", "click0", "click1",
               "sifted", "error")


@dataclass
class EventLog:
    """Columnar per-gate log; ``eve_basis``/``eve_bit`` are -1 where Eve is absent."""

    gate_index: np.ndarray
    alice_basis: np.ndarray
    alice_bit: np.ndarray
    alice_mean_photons: np.ndarray
    eve_basis: np.ndarray
    eve_bit: np.ndarray
    bob_basis: np.ndarray
    click0: np.ndarray
    click1: np.ndarray
    sifted: np.ndarray = field(default=None)
    error: np.ndarray = field(default=None)
    alarm: np.ndarray | None = None

    def __post_init__(self):
        if self.sifted is None or self.error is None:
            self.sifted, self.error = sift_mask(
                self.alice_basis, self.alice_bit, self.bob_basis, self.click0, self.click1)

    def __len__(self):
        return int(self.gate_index.size)

    @classmethod
    def concat(cls, logs: Sequence["EventLog"]) -> "EventLog":
        kwargs = {}
        for f in fields(cls):
            parts = [getattr(log, f.name) for log in logs]
            if any(p is None for p in parts):
                kwargs[f.name] = None
            else:
                kwargs[f.name] = np.concatenate(parts)
        return cls(**kwargs)

    @classmethod
    def from_records(cls, records: Sequence[GateRecord]) -> "EventLog":
        def col(fn, dtype):
            return np.fromiter((fn(r) for r in records), dtype=dtype, count=len(records))

        def eve(value):
            return NO_EVE if value is None else int(value)
        return cls(
            gate_index=col(lambda r: r.gate_index, np.int64),
            alice_basis=col(lambda r: r.alice.basis, np.int8),
            alice_bit=col(lambda r: r.alice.bit, np.int8),
            alice_mean_photons=col(lambda r: r.alice.mean_photons, float),
            eve_basis=col(lambda r: eve(r.eve_basis), np.int8),
            eve_bit=col(lambda r: eve(r.eve_bit), np.int8),
            bob_basis=col(lambda r: r.bob_basis, np.int8),
            click0=col(lambda r: r.click0, bool),
            click1=col(lambda r: r.click1, bool),
        )

    def records(self) -> Iterator[GateRecord]:
        for i in range(len(self)):
            eb = int(self.eve_basis[i])
            yield GateRecord(
                gate_index=int(self.gate_index[i]),
                alice=BB84Symbol(Basis(int(self.alice_basis[i])), int(self.alice_bit[i]),
                                 float(self.alice_mean_photons[i])),
                eve_basis=None if eb == NO_EVE else Basis(eb),
                eve_bit=None if eb == NO_EVE else int(self.eve_bit[i]),
                bob_basis=Basis(int(self.bob_basis[i])),
                click0=bool(self.click0[i]), click1=bool(self.click1[i]),
                sifted=bool(self.sifted[i]), error=bool(self.error[i]),
            )


def sift_mask(alice_basis, alice_bit, bob_basis, click0, click1):
    """Sifted gates: exactly one click and Alice's basis equals Bob's."""
    single = np.asarray(click0) ^ np.asarray(click1)
    sifted = single & (np.asarray(alice_basis) == np.asarray(bob_basis))
    bob_bit = np.asarray(click1).astype(np.int8)
    error = sifted & (bob_bit != np.asarray(alice_bit))
    return sifted, error


@dataclass
class Tally:
    """Running counts merged chunk by chunk into a :class:`RunStats`."""

    gates: int = 0
    clicks: int = 0
    double_clicks: int = 0
    sifted: int = 0
    errors: int = 0
    eve_known: int = 0
    wrong_basis_clicks: int = 0
    forged: int = 0
    alarms: int = 0
    first_alarm_gate: int | None = None
    watchdog_blinded: int = 0

    def add_log(self, log: EventLog, eve_present: bool = True):
        c0, c1 = log.click0, log.click1
        self.gates += len(log)
        self.clicks += int(np.count_nonzero(c0)) + int(np.count_nonzero(c1))
        self.double_clicks += int(np.count_nonzero(c0 & c1))
        self.sifted += int(np.count_nonzero(log.sifted))
        self.errors += int(np.count_nonzero(log.error))
        bob_bit = c1.astype(np.int8)
        has_eve = log.eve_basis != NO_EVE
        self.eve_known += int(np.count_nonzero(log.sifted & has_eve & (log.eve_bit == bob_bit)))
        wrong = has_eve & (log.eve_basis != log.bob_basis)
        self.wrong_basis_clicks += int(np.count_nonzero(wrong & c0)) + int(
            np.count_nonzero(wrong & c1))

    def stats(self, gate_frequency: float, attacked: bool) -> RunStats:
        duration = self.gates / gate_frequency
        qber = self.errors / self.sifted if self.sifted else None
        known = self.eve_known / self.sifted if (self.sifted and attacked) else None
        return RunStats(
            gates_total=self.gates, clicks=self.clicks, double_clicks=self.double_clicks,
            sifted_bits=self.sifted, errors=self.errors, qber=qber,
            eve_known_fraction=known,
            raw_click_rate=self.clicks / duration if duration else 0.0,
            alarms=self.alarms, wrong_basis_clicks=self.wrong_basis_clicks,
            forged_pulses=self.forged, first_alarm_gate=self.first_alarm_gate,
            watchdog_blinded=self.watchdog_blinded,
        )


def sift_and_score(records: Sequence[GateRecord] | EventLog,
                   gate_frequency: float = 1e8) -> RunStats:
    """Aggregate a gate log into sifted-key statistics.

    QBER is None when nothing was sifted. ``eve_known_fraction`` is None
    when no gate carries an Eve record.
    """
    log = records if isinstance(records, EventLog) else EventLog.from_records(list(records))
    # recompute rather than trust stored flags
    log = EventLog(**{**{f.name: getattr(log, f.name) for f in fields(EventLog)},
                      "sifted": None, "error": None})
    tally = Tally()
    tally.add_log(log)
    attacked = bool(np.any(log.eve_basis != NO_EVE))
    return tally.stats(gate_frequency, attacked)


# -- vectorised engine ---------------------------------------------------------

@dataclass
class _DetectorTrack:
    next_free: int = 0
    last_click: int | None = None


@dataclass(frozen=True)
class ChannelSetup:
    """What reaches Bob, already referred to his detectors.

    ``mean_photons`` is Alice's (or Eve's resent) photon number per gate at
    Bob's input after channel transmission. ``attack`` holds APD-level
    blinding power and trigger energy.
    """

    mean_photons: float
    alice_mean_photons: float
    attack: AttackParams | None = None


class BB84Engine:
    """Runs gates in fixed-size chunks with one RNG stream per party."""

    CHUNK = 1 << 20

    def __init__(self, config: DetectorConfig, channel: ChannelSetup,
                 rngs: dict[str, np.random.Generator]):
        self.config = config
        self.channel = channel
        self.rngs = rngs
        self.tracks = (_DetectorTrack(), _DetectorTrack())
        attack = channel.attack
        self.attack = attack if attack is not None and attack.enabled else None
        if self.attack is not None:
            stride = config.gate_frequency / self.attack.forge_rate
            self.stride = max(1, int(round(stride)))
        else:
            self.stride = 1

    def chunks(self, gates: int) -> Iterator[tuple[EventLog, np.ndarray]]:
        """Yield ``(log, forged_mask)`` per chunk."""
        for start in range(0, gates, self.CHUNK):
            yield self._chunk(start, min(self.CHUNK, gates - start))

    def _chunk(self, start: int, n: int):
        cfg, ch, r = self.config, self.channel, self.rngs
        idx = np.arange(start, start + n, dtype=np.int64)
        a_basis = r["alice"].integers(0, 2, size=n, dtype=np.int8)
        a_bit = r["alice"].integers(0, 2, size=n, dtype=np.int8)
        b_basis = r["bob"].integers(0, 2, size=n, dtype=np.int8)
        e_basis_draw = r["eve"].integers(0, 2, size=n, dtype=np.int8)
        e_coin = r["eve"].integers(0, 2, size=n, dtype=np.int8)

        eve_basis = np.full(n, NO_EVE, dtype=np.int8)
        eve_bit = np.full(n, NO_EVE, dtype=np.int8)
        cw = np.zeros(n)
        trig0 = np.zeros(n)
        trig1 = np.zeros(n)
        mu0, mu1 = route(a_basis, a_bit, b_basis, ch.mean_photons)
        forged = np.zeros(n, dtype=bool)

        atk = self.attack
        if atk is not None:
            attacked = idx >= atk.start_gate
            measured_bit = np.where(e_basis_draw == a_basis, a_bit, e_coin).astype(np.int8)
            if atk.mode is AttackMode.BLINDING:
                forged = attacked & ((idx - atk.start_gate) % self.stride == 0)
                cw = np.where(attacked, atk.cw_power, 0.0)
                t0, t1 = route(e_basis_draw, measured_bit, b_basis, atk.trigger_energy)
                trig0 = np.where(forged, t0, 0.0)
                trig1 = np.where(forged, t1, 0.0)
                # Eve blocks Alice's light on every attacked gate
                mu0 = np.where(attacked, 0.0, mu0)
                mu1 = np.where(attacked, 0.0, mu1)
                eve_gates = forged
            else:
                r0, r1 = route(e_basis_draw, measured_bit, b_basis, ch.mean_photons)
                mu0 = np.where(attacked, r0, mu0)
                mu1 = np.where(attacked, r1, mu1)
                eve_gates = attacked
            eve_basis = np.where(eve_gates, e_basis_draw, NO_EVE).astype(np.int8)
            eve_bit = np.where(eve_gates, measured_bit, NO_EVE).astype(np.int8)

        clicks = []
        for d, (trig, mu) in enumerate(((trig0, mu0), (trig1, mu1))):
            p = click_probability(cw, trig, mu, cfg)
            u = r[f"detector{d}"].random(n)
            cand = idx[u < p]
            track = self.tracks[d]
            accepted, track.next_free = resolve_dead_time(cand, cfg.dead_gates, track.next_free)
            if accepted.size:
                head = accepted if track.last_click is None else np.r_[track.last_click, accepted]
                check_dead_time(head, cfg, label=f"detector{d}")
                track.last_click = int(accepted[-1])
            mask = np.zeros(n, dtype=bool)
            mask[accepted - start] = True
            clicks.append(mask)

        log = EventLog(
            gate_index=idx, alice_basis=a_basis, alice_bit=a_bit,
            alice_mean_photons=np.full(n, ch.alice_mean_photons),
            eve_basis=eve_basis, eve_bit=eve_bit, bob_basis=b_basis,
            click0=clicks[0], click1=clicks[1],
        )
        return log, forged
