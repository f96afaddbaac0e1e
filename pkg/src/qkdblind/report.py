"""Serialisation of run statistics, sweeps, budgets and event logs."""

from __future__ import annotations

import io
import json
from typing import IO, Sequence

import numpy as np

from .bb84 import NO_EVE, EventLog, RunStats
from .optics import FEMTO, NANO, format_scaled
from .scw import STAGE_LABELS, BudgetRow
from .simulation import SweepPoint

FORMATS = ("text", "csv", "jsonl")

CSV_FIELDS = ("gates_total", "clicks", "double_clicks", "sifted_bits", "errors", "qber",
              "eve_known_fraction", "raw_click_rate_hz", "alarms")
EXTRA_FIELDS = ("wrong_basis_clicks", "forged_pulses", "first_alarm_gate", "watchdog_blinded")


def _g17(value: float) -> str:
    return format(value, ".17g")


def _machine(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, float):
        return _g17(value)
    return str(int(value))


def _values(stats: RunStats) -> dict:
    out = {}
    for name in CSV_FIELDS + EXTRA_FIELDS:
        attr = "raw_click_rate" if name == "raw_click_rate_hz" else name
        out[name] = getattr(stats, attr)
    return out


def report(stats: RunStats, fmt: str = "text") -> str:
    values = _values(stats)
    if fmt == "csv":
        row = ",".join(_machine(values[k]) for k in CSV_FIELDS)
        return ",".join(CSV_FIELDS) + "\n" + row + "\n"
    if fmt == "jsonl":
        body = ", ".join(f'"{k}": {_machine(values[k])}' for k in CSV_FIELDS + EXTRA_FIELDS)
        return "{" + body + "}\n"
    if fmt == "text":
        width = max(map(len, values))
        lines = []
        for key, value in values.items():
            if value is None:
                shown = "NA"
            elif isinstance(value, float):
                shown = f"{value:.6g}"
            else:
                shown = str(value)
            lines.append(f"{key:<{width}}  {shown}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def report_many(rows: Sequence[RunStats], fmt: str = "csv") -> str:
    if fmt == "text":
        return "\n".join(report(s, "text") for s in rows)
    parts = [report(s, fmt) for s in rows]
    if fmt == "csv":
        return parts[0].splitlines()[0] + "\n" + "".join(p.splitlines()[1] + "\n" for p in parts)
    return "".join(parts)


# -- sweeps --------------------------------------------------------------------

SWEEP_FIELDS = ("click_probability", "stderr", "trials", "clicks", "click_rate_hz")


def report_sweep(points: Sequence[SweepPoint], variable: str, fmt: str = "text") -> str:
    exponent = FEMTO if variable.endswith("_fj") else NANO if variable.endswith("_nw") else 0
    rows = [(format_scaled(p.value, exponent), p.probability, p.stderr, p.trials, p.clicks,
             p.click_rate) for p in points]
    header = (variable,) + SWEEP_FIELDS
    if fmt == "csv":
        out = [",".join(header)]
        out += [",".join([r[0], _g17(r[1]), _g17(r[2]), str(r[3]), str(r[4]), _g17(r[5])])
                for r in rows]
        return "\n".join(out) + "\n"
    if fmt == "jsonl":
        return "".join(
            "{" + f'"{variable}": {r[0]}, "click_probability": {_g17(r[1])}, '
            f'"stderr": {_g17(r[2])}, "trials": {r[3]}, "clicks": {r[4]}, '
            f'"click_rate_hz": {_g17(r[5])}' + "}\n" for r in rows)
    if fmt == "text":
        out = [f"{variable:>18} {'P(click)':>10} {'stderr':>10} {'trials':>10} {'rate (Hz)':>12}"]
        out += [f"{r[0]:>18} {r[1]:>10.4f} {r[2]:>10.2g} {r[3]:>10d} {r[5]:>12.6g}" for r in rows]
        return "\n".join(out) + "\n"
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


# -- power budget --------------------------------------------------------------

BUDGET_FIELDS = ("stage", "blinding_power_nW", "e_always_fJ", "e_never_fJ")


def budget_display(row: BudgetRow, index: int) -> tuple[str, str, str]:
    """Displayed precision: one decimal for the APD row, integers upstream."""
    digits = 1 if index == 0 else 0
    return tuple(f"{v:.{digits}f}" for v in (
        row.blinding_power * 1e9, row.e_always * 1e15, row.e_never * 1e15))


def report_budget(rows: Sequence[BudgetRow], fmt: str = "text") -> str:
    shown = [budget_display(r, i) for i, r in enumerate(rows)]
    if fmt == "csv":
        out = [",".join(BUDGET_FIELDS)]
        out += [",".join((r.stage.value,) + s) for r, s in zip(rows, shown)]
        return "\n".join(out) + "\n"
    if fmt == "jsonl":
        return "".join(
            json.dumps(dict(zip(BUDGET_FIELDS, (r.stage.value,) + tuple(map(float, s))))) + "\n"
            for r, s in zip(rows, shown))
    if fmt == "text":
        labels = [STAGE_LABELS[r.stage] for r in rows]
        title = "Eve's faked-state power in"
        width = max(len(title), *map(len, labels))
        out = [f"{title:<{width}}  {'Blinding (nW)':>13}  "
               f"{'E_always (fJ)':>13}  {'E_never (fJ)':>12}"]
        out += [f"{label:<{width}}  {s[0]:>13}  {s[1]:>13}  {s[2]:>12}"
                for label, s in zip(labels, shown)]
        return "\n".join(out) + "\n"
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


# -- event logs ----------------------------------------------------------------

def event_log_header(with_alarm: bool = False) -> str:
    cols = ["gate_index", "alice_basis", "alice_bit", "alice_mean_photons", "eve_basis",
            "eve_bit", "bob_basis", "click0", "click1", "sifted", "error"]
    if with_alarm:
        cols.append("alarm")
    return ",".join(cols) + "\n"


_BASIS = np.array(["Z", "X"])


def write_event_log(log: EventLog, out: IO[str], header: bool = True) -> None:
    """One CSV line per gate; Eve's columns are empty where she is absent."""
    with_alarm = log.alarm is not None
    if header:
        out.write(event_log_header(with_alarm))
    eve_present = log.eve_basis != NO_EVE
    eve_basis = np.where(eve_present, _BASIS[np.where(eve_present, log.eve_basis, 0)], "")
    eve_bit = np.where(eve_present, log.eve_bit.astype(str), "")
    uniq, inverse = np.unique(log.alice_mean_photons, return_inverse=True)
    mu = np.array([_g17(float(u)) for u in uniq], dtype=object)[inverse]
    cols = [
        log.gate_index.astype(str),
        _BASIS[log.alice_basis],
        log.alice_bit.astype(str),
        mu,
        eve_basis, eve_bit,
        _BASIS[log.bob_basis],
        log.click0.astype(np.int8).astype(str),
        log.click1.astype(np.int8).astype(str),
        log.sifted.astype(np.int8).astype(str),
        log.error.astype(np.int8).astype(str),
    ]
    if with_alarm:
        cols.append(log.alarm.astype(np.int8).astype(str))
    buf = io.StringIO()
    for row in zip(*cols):
        buf.write(",".join(row))
        buf.write("\n")
    out.write(buf.getvalue())


def read_event_log(text: str) -> EventLog:
    """Parse a log written by :func:`write_event_log`."""
    lines = text.strip().splitlines()
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    col = {name: [r[i] for r in rows] for i, name in enumerate(header)}
    basis = {"Z": 0, "X": 1, "": NO_EVE}

    def ints(name):
        return np.array([int(v) if v != "" else NO_EVE for v in col[name]], dtype=np.int8)

    return EventLog(
        gate_index=np.array([int(v) for v in col["gate_index"]], dtype=np.int64),
        alice_basis=np.array([basis[v] for v in col["alice_basis"]], dtype=np.int8),
        alice_bit=ints("alice_bit"),
        alice_mean_photons=np.array([float(v) for v in col["alice_mean_photons"]]),
        eve_basis=np.array([basis[v] for v in col["eve_basis"]], dtype=np.int8),
        eve_bit=ints("eve_bit"),
        bob_basis=np.array([basis[v] for v in col["bob_basis"]], dtype=np.int8),
        click0=ints("click0").astype(bool),
        click1=ints("click1").astype(bool),
        alarm=ints("alarm").astype(bool) if "alarm" in col else None,
    )
