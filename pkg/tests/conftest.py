import numpy as np
import pytest

from oracles import dead_time_ok
from qkdblind import bb84

_checked = {"logs": 0, "clicks": 0, "violations": 0}


@pytest.fixture(autouse=True)
def _audit_dead_time(monkeypatch):
    """Re-check every simulated event log for dead-time violations.

    Runs on top of the engine's own check, using the plain-Python oracle.
    """
    original = bb84.BB84Engine.chunks

    def audited(self, gates):
        last = [None, None]
        dead = self.config.dead_gates
        for log, forged in original(self, gates):
            for d, clicks in enumerate((log.click0, log.click1)):
                gates_clicked = log.gate_index[clicks].tolist()
                if last[d] is not None:
                    gates_clicked = [last[d]] + gates_clicked
                if not dead_time_ok(gates_clicked, dead):
                    _checked["violations"] += 1
                    raise AssertionError(f"dead time violated on detector{d}")
                if gates_clicked:
                    last[d] = gates_clicked[-1]
                _checked["clicks"] += int(np.count_nonzero(clicks))
            _checked["logs"] += 1
            yield log, forged

    monkeypatch.setattr(bb84.BB84Engine, "chunks", audited)
    yield


_verdicts: list[str] = []


def audit_counts() -> dict:
    return dict(_checked)


@pytest.fixture
def criterion():
    """Print and record one PASS/FAIL line, then assert on it."""
    def check(number: int, title: str, ok: bool, detail: str = ""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}"
        if detail:
            line += f" ({detail})"
        print(line)
        _verdicts.append(line)
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter):
    terminalreporter.write_line(
        f"dead-time audit: {_checked['logs']} log chunks, {_checked['clicks']} clicks, "
        f"{_checked['violations']} violations")
    if _verdicts:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_verdicts, key=lambda v: int(v.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20190522)
