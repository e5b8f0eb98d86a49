"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import pytest

from arplab import MacAddr, ipv4

# Addresses used throughout: two victims and the attacker from the
# reference capture, plus a server host and spares for topology tests.
MAC15 = MacAddr.parse("00:0b:cd:b6:3e:a2")
MAC100 = MacAddr.parse("00:08:c7:9f:bd:a8")
MAC_ATTACKER = MacAddr.parse("00:0e:7f:5f:ba:40")
MAC_SERVER = MacAddr.parse("00:50:da:e2:11:01")
MAC_SPARE = MacAddr.parse("00:0d:60:aa:00:99")

IP15 = ipv4("192.0.0.15")
IP100 = ipv4("192.0.0.100")
IP_ATTACKER = ipv4("192.0.0.108")
IP_SERVER = ipv4("192.0.0.1")


class ManualTimers:
    """Deterministic stand-in for the engine's scheduling facade.

    Nodes hand it (deadline, callback) pairs; tests advance time with
    ``fire`` and collect whatever frames the due callbacks return.
    """

    def __init__(self) -> None:
        self.scheduled: list[tuple[float, object]] = []
        self._seq = 0

    def call_at(self, at: float, fn) -> None:
        self.scheduled.append((at, self._seq, fn))
        self._seq += 1

    def fire(self, now: float) -> list:
        """Run every callback due at or before ``now``; return their frames."""
        out = []
        while True:
            due = [item for item in self.scheduled if item[0] <= now]
            if not due:
                return out
            due.sort(key=lambda item: (item[0], item[1]))
            at, seq, fn = due[0]
            self.scheduled.remove((at, seq, fn))
            out.extend(fn(at) or [])

    def pending(self) -> int:
        return len(self.scheduled)


class Recorder:
    """Collects (kind, fields) pairs emitted by a node under test."""

    def __init__(self) -> None:
        self.records: list[tuple[str, dict]] = []

    def __call__(self, kind: str, **fields) -> None:
        self.records.append((kind, fields))

    def of_kind(self, kind: str) -> list[dict]:
        return [fields for k, fields in self.records if k == kind]


@pytest.fixture
def timers() -> ManualTimers:
    return ManualTimers()


@pytest.fixture
def recorder() -> Recorder:
    return Recorder()


# -- acceptance reporting ----------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config) -> None:
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
