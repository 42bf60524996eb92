"""Bayesian root-cause ranking over poll/trap suspects.

For an alarming device ``d`` and a suspect ``f`` the posterior is

    P(f | d) = M[f] * I(f, d) / sum_{f' in Q} M[f'] * I(f', d)

with ``M`` the marginal failure share from the alarm history and ``I`` the
ancestor-or-self indicator.  A suspect's score is the mean posterior over the
alarming devices it can explain.  Reports order suspects by dependency level
first (upstream devices are more critical), then by score.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

from .alarmlog import AlarmLog
from .errors import LogFormatError, UnexplainedAlarmError
from .topology import DependencyGraph, ReachabilityIndex, build_reachability, depth_levels

__all__ = [
    "BAYES",
    "ALARM_WEIGHTED",
    "PollSnapshot",
    "Response",
    "RootCauseEntry",
    "RootCauseReport",
    "aggregate_prob",
    "alarming_devices",
    "collect_suspects",
    "conditional_prob",
    "marginal_failure_probs",
    "rank_root_causes",
]

# posterior forms: normalise over suspects (default) or over alarming devices
BAYES = "bayes"
ALARM_WEIGHTED = "alarm_weighted"


class Response(str, enum.Enum):
    OK = "OK"
    FAULTY = "FAULTY"
    NO_RESPONSE = "NO_RESPONSE"


@dataclass(frozen=True)
class PollSnapshot:
    tick: int
    responses: Mapping[str, Response]

    def __post_init__(self) -> None:
        object.__setattr__(self, "responses", {d: Response(r) for d, r in sorted(self.responses.items())})

    def with_status(self, status: Response) -> list[str]:
        return [d for d, r in self.responses.items() if r is status]

    def check_covers(self, graph: DependencyGraph) -> None:
        missing = [d for d in graph.nodes if d not in self.responses]
        extra = [d for d in self.responses if d not in graph]
        if missing or extra:
            raise LogFormatError(f"snapshot does not match graph (missing {missing[:5]}, unknown {extra[:5]})")

    def to_doc(self) -> dict:
        return {"tick": self.tick, "records": [{"device_id": d, "response": r.value} for d, r in self.responses.items()]}

    @classmethod
    def from_doc(cls, doc: dict) -> "PollSnapshot":
        try:
            recs = doc["records"]
            responses = {}
            for rec in recs:
                dev = rec["device_id"]
                if dev in responses:
                    raise LogFormatError(f"snapshot lists device {dev!r} twice")
                responses[dev] = Response(rec["response"])
            return cls(int(doc.get("tick", 0)), responses)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, LogFormatError):
                raise
            raise LogFormatError(f"malformed poll snapshot: {exc}") from exc


def load_snapshot(path: str | Path, tick: int | None = None) -> PollSnapshot:
    """Read a single snapshot document or pick one out of a series file."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise LogFormatError(f"snapshot syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if isinstance(doc, dict) and "snapshots" in doc:
        series = [PollSnapshot.from_doc(s) for s in doc["snapshots"]]
        if not series:
            raise LogFormatError("snapshot series is empty")
        if tick is None:
            return series[-1]
        for snap in series:
            if snap.tick == tick:
                return snap
        raise LogFormatError(f"no snapshot at tick {tick}")
    if not isinstance(doc, dict):
        raise LogFormatError("snapshot must be a JSON object")
    return PollSnapshot.from_doc(doc)


def marginal_failure_probs(log: AlarmLog, graph: DependencyGraph) -> dict[str, float]:
    """Share of historical failures per device; uniform if nothing failed."""
    counts = log.failure_counts()
    unknown = sorted(d for d in log.devices() if d not in graph)
    if unknown:
        raise LogFormatError(f"alarm log references devices absent from the graph: {unknown[:5]}")
    total = sum(counts.values())
    if total == 0:
        return {d: 1.0 / len(graph) for d in graph.nodes} if len(graph) else {}
    return {d: counts.get(d, 0) / total for d in graph.nodes}


def collect_suspects(snapshot: PollSnapshot) -> list[str]:
    return [d for d, r in snapshot.responses.items() if r is not Response.OK]


def alarming_devices(snapshot: PollSnapshot) -> list[str]:
    """Devices that trapped FAULTY.  Unreachable devices cannot raise alarms."""
    return snapshot.with_status(Response.FAULTY)


def _denominator(d: str, table: Mapping[str, float], reach: ReachabilityIndex, suspects: Iterable[str]) -> float:
    return sum(table[f] for f in suspects if reach.explains(f, d))


def conditional_prob(
    f: str,
    d: str,
    table: Mapping[str, float],
    reach: ReachabilityIndex,
    suspects: Iterable[str],
) -> float:
    if not reach.explains(f, d):
        return 0.0
    denom = _denominator(d, table, reach, suspects)
    if denom <= 0.0:
        raise UnexplainedAlarmError(d)
    return table[f] / denom


def aggregate_prob(
    f: str,
    alarming: Iterable[str],
    table: Mapping[str, float],
    reach: ReachabilityIndex,
    suspects: Iterable[str],
) -> float:
    suspects = list(suspects)
    vals = [conditional_prob(f, d, table, reach, suspects) for d in alarming if reach.explains(f, d)]
    return sum(vals) / len(vals) if vals else 0.0


@dataclass(frozen=True)
class RootCauseEntry:
    device: str
    level: int
    probability: float
    explained_alarms: int
    cluster: int | None = None


@dataclass
class RootCauseReport:
    entries: list[RootCauseEntry]
    alarming: list[str]
    unexplained: list[str] = field(default_factory=list)
    form: str = BAYES

    def devices(self) -> list[str]:
        return [e.device for e in self.entries]

    def probabilities(self) -> dict[str, float]:
        return {e.device: e.probability for e in self.entries}

    def rank_of(self, device: str) -> int | None:
        for i, e in enumerate(self.entries, start=1):
            if e.device == device:
                return i
        return None

    def with_clusters(self, assignment: Mapping[str, int]) -> "RootCauseReport":
        """Copy with each entry tagged by its cluster id from ``assignment``."""
        tagged = [replace(e, cluster=assignment.get(e.device)) for e in self.entries]
        return RootCauseReport(tagged, list(self.alarming), list(self.unexplained), self.form)

    def to_doc(self, metadata: Mapping | None = None) -> dict:
        return {
            "metadata": dict(metadata or {}),
            "form": self.form,
            "alarming": list(self.alarming),
            "unexplained": list(self.unexplained),
            "entries": [
                {
                    "rank": i,
                    "device_id": e.device,
                    "level": e.level,
                    "probability": e.probability,
                    "explained_alarms": e.explained_alarms,
                    "cluster_id": e.cluster,
                }
                for i, e in enumerate(self.entries, start=1)
            ],
        }


def rank_root_causes(
    suspects: Iterable[str],
    alarming: Iterable[str],
    graph: DependencyGraph,
    table: Mapping[str, float],
    reach: ReachabilityIndex | None = None,
    levels: Mapping[str, int] | None = None,
    form: str = BAYES,
) -> RootCauseReport:
    """Score every suspect and order by (level asc, probability desc, id asc).

    Alarming devices that no positive-marginal suspect explains are listed in
    ``unexplained`` and skipped when averaging.
    """
    if form not in (BAYES, ALARM_WEIGHTED):
        raise ValueError(f"unknown posterior form {form!r}")
    suspects = sorted(set(suspects))
    alarming = sorted(set(alarming))
    for dev in suspects + alarming:
        if dev not in graph:
            raise LogFormatError(f"unknown device {dev!r}")
    if reach is None:
        reach = build_reachability(graph)
    if levels is None:
        levels = depth_levels(graph)

    # explainers[d] = suspects that are d or an ancestor of d
    explainers = {d: [f for f in suspects if reach.explains(f, d)] for d in alarming}
    totals: dict[str, float] = dict.fromkeys(suspects, 0.0)
    counts: dict[str, int] = dict.fromkeys(suspects, 0)
    unexplained = []

    if form == BAYES:
        for d in alarming:
            denom = sum(table[f] for f in explainers[d])
            if denom <= 0.0:
                unexplained.append(d)
                continue
            for f in explainers[d]:
                totals[f] += table[f] / denom
                counts[f] += 1
    else:
        # alternative: weight by the alarming device's marginal,
        # normalised over the alarming devices the suspect explains
        for f in suspects:
            ds = [d for d in alarming if f in explainers[d]]
            denom = sum(table[d] for d in ds)
            counts[f] = len(ds)
            if denom > 0.0:
                totals[f] = sum(table[d] / denom for d in ds)
        unexplained = [d for d in alarming if not explainers[d]]

    entries = [
        RootCauseEntry(f, levels[f], totals[f] / counts[f] if counts[f] else 0.0, counts[f])
        for f in suspects
    ]
    entries.sort(key=lambda e: (e.level, -e.probability, e.device))
    return RootCauseReport(entries, alarming, unexplained, form)
