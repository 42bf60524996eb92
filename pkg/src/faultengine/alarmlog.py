"""Alarm log: ``timestamp,device_id,status`` rows sorted by (timestamp, device_id).

A device is ALARM on every tick it is failed and logs one OK row on the tick it
comes back.  Readers only rely on run boundaries, so dense per-tick logs and
transition-only logs give the same durations.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

from .errors import LogFormatError

OK = "OK"
ALARM = "ALARM"
HEADER = ("timestamp", "device_id", "status")


class AlarmEvent(NamedTuple):
    timestamp: int
    device: str
    status: str


@dataclass(frozen=True)
class AlarmRun:
    """A maximal stretch of ALARM rows for one device.

    ``end`` is the timestamp of the OK row that closed the run, or ``None``
    when the log ends first.
    """

    device: str
    start: int
    end: int | None
    last_alarm: int

    @property
    def closed(self) -> bool:
        return self.end is not None

    @property
    def duration(self) -> int | None:
        return None if self.end is None else self.end - self.start

    def observed_length(self, at_tick: int) -> int:
        """Consecutive failed observations from ``start`` through ``at_tick``."""
        return at_tick - self.start + 1


class AlarmLog:
    """Sorted, immutable sequence of :class:`AlarmEvent`."""

    def __init__(self, events: Iterable[AlarmEvent | tuple[int, str, str]] = ()):
        evs = [AlarmEvent(int(t), str(d), str(s)) for t, d, s in events]
        for ev in evs:
            if ev.timestamp < 0:
                raise LogFormatError(f"negative timestamp {ev.timestamp}")
            if ev.status not in (OK, ALARM):
                raise LogFormatError(f"unknown status {ev.status!r}")
        evs.sort(key=lambda e: (e.timestamp, e.device))
        self.events: tuple[AlarmEvent, ...] = tuple(evs)
        self._runs: dict[str, list[AlarmRun]] | None = None

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, AlarmLog) and self.events == other.events

    @classmethod
    def from_statuses(cls, device: str, statuses: Iterable[str], start: int = 0) -> "AlarmLog":
        """Dense log for one device, one status per consecutive tick."""
        return cls((start + i, device, s) for i, s in enumerate(statuses))

    def devices(self) -> list[str]:
        return sorted({e.device for e in self.events})

    def span(self) -> tuple[int, int] | None:
        if not self.events:
            return None
        return self.events[0].timestamp, self.events[-1].timestamp

    def last_tick(self) -> int | None:
        return self.events[-1].timestamp if self.events else None

    def runs(self, device: str | None = None) -> dict[str, list[AlarmRun]] | list[AlarmRun]:
        if self._runs is None:
            self._runs = _collect_runs(self.events)
        if device is None:
            return self._runs
        return self._runs.get(device, [])

    def failure_counts(self) -> dict[str, int]:
        """Number of failures per device, one per maximal ALARM run."""
        return {d: len(r) for d, r in self.runs().items() if r}

    def truncated(self, last_tick: int) -> "AlarmLog":
        return AlarmLog(e for e in self.events if e.timestamp <= last_tick)


def _collect_runs(events: Iterable[AlarmEvent]) -> dict[str, list[AlarmRun]]:
    runs: dict[str, list[AlarmRun]] = {}
    open_run: dict[str, tuple[int, int]] = {}
    for ts, dev, status in events:
        runs.setdefault(dev, [])
        if status == ALARM:
            if dev in open_run:
                open_run[dev] = (open_run[dev][0], ts)
            else:
                open_run[dev] = (ts, ts)
        elif dev in open_run:
            start, last = open_run.pop(dev)
            runs[dev].append(AlarmRun(dev, start, ts, last))
    for dev, (start, last) in open_run.items():
        runs[dev].append(AlarmRun(dev, start, None, last))
    for dev in runs:
        runs[dev].sort(key=lambda r: r.start)
    return runs


def parse_alarm_log(text: str) -> AlarmLog:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise LogFormatError("alarm log is empty (missing header)") from None
    if tuple(h.strip() for h in header) != HEADER:
        raise LogFormatError(f"alarm log header must be {','.join(HEADER)!r}, got {','.join(header)!r}")
    events = []
    prev = None
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise LogFormatError(f"alarm log line {lineno}: expected 3 fields, got {len(row)}")
        ts_text, dev, status = (c.strip() for c in row)
        try:
            ts = int(ts_text)
        except ValueError:
            raise LogFormatError(f"alarm log line {lineno}: timestamp {ts_text!r} is not an integer") from None
        if ts < 0:
            raise LogFormatError(f"alarm log line {lineno}: negative timestamp")
        if status not in (OK, ALARM):
            raise LogFormatError(f"alarm log line {lineno}: status must be OK or ALARM, got {status!r}")
        if not dev:
            raise LogFormatError(f"alarm log line {lineno}: empty device id")
        key = (ts, dev)
        if prev is not None and key < prev:
            raise LogFormatError(f"alarm log line {lineno}: rows not sorted by (timestamp, device_id)")
        prev = key
        events.append(AlarmEvent(ts, dev, status))
    return AlarmLog(events)


def format_alarm_log(log: AlarmLog) -> str:
    out = io.StringIO()
    out.write(",".join(HEADER) + "\n")
    for ts, dev, status in log.events:
        out.write(f"{ts},{dev},{status}\n")
    return out.getvalue()


def read_alarm_log(path: str | Path) -> AlarmLog:
    return parse_alarm_log(Path(path).read_text())


def write_alarm_log(log: AlarmLog, path: str | Path) -> None:
    Path(path).write_text(format_alarm_log(log))
