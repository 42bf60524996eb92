"""Failure-scenario simulator standing in for the monitoring middleware.

Generates layered power-chain topologies, runs each device through the
Active/Transient/Permanent chain on a discrete tick clock, injects faults, and
answers poll sweeps with the cascade rule: a live device is reachable while at
least one parent is reachable and live.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .alarmlog import ALARM, OK, AlarmLog
from .errors import ConfigError
from .failure_model import DEFAULT_PERMANENT_AFTER
from .root_cause import PollSnapshot, Response
from .topology import DependencyGraph, parse_topology, topological_sort, validate_acyclic

__all__ = [
    "ACTIVE",
    "PERMANENT",
    "PRESET_47",
    "TRANSIENT",
    "DeviceParams",
    "Fault",
    "LayerSpec",
    "ScenarioConfig",
    "ScenarioResult",
    "SimulationState",
    "TopologySpec",
    "generate_history",
    "generate_topology",
    "inject_failure",
    "label_failures",
    "load_preset",
    "load_scenario_config",
    "poll_cycle",
    "run_scenario",
    "simulate_history",
    "sized_chain_spec",
]

ACTIVE, TRANSIENT, PERMANENT = "A", "T", "P"


# -- topology generation ------------------------------------------------------


@dataclass(frozen=True)
class LayerSpec:
    """Children per parent node; ``parent`` names the parent layer's kind
    (default: the previous layer).  A tuple gives one fan-out per parent."""

    kind: str
    fanout: int | tuple[int, ...]
    parent: str | None = None


@dataclass(frozen=True)
class TopologySpec:
    sources: int = 1
    source_kind: str = "PSU"
    layers: tuple[LayerSpec, ...] = ()
    dummy_parent_fraction: float = 0.0
    seed: int = 0
    max_nodes: int | None = None

    def __post_init__(self) -> None:
        if self.sources < 1:
            raise ConfigError("topology needs at least one source")
        if not 0.0 <= self.dummy_parent_fraction <= 1.0:
            raise ConfigError("dummy_parent_fraction must lie in [0, 1]")
        kinds = [self.source_kind]
        for layer in self.layers:
            if layer.kind in kinds:
                raise ConfigError(f"duplicate layer kind {layer.kind!r}")
            if layer.parent is not None and layer.parent not in kinds:
                raise ConfigError(f"layer {layer.kind!r} references unknown parent layer {layer.parent!r}")
            fan = layer.fanout if isinstance(layer.fanout, tuple) else (layer.fanout,)
            if any(f < 1 for f in fan):
                raise ConfigError(f"fan-out of layer {layer.kind!r} must be >= 1")
            kinds.append(layer.kind)

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> "TopologySpec":
        try:
            layers = tuple(
                LayerSpec(
                    l["kind"],
                    tuple(l["fanout"]) if isinstance(l["fanout"], list) else int(l["fanout"]),
                    l.get("parent"),
                )
                for l in doc.get("layers", [])
            )
            return cls(
                int(doc.get("sources", 1)),
                str(doc.get("source_kind", "PSU")),
                layers,
                float(doc.get("dummy_parent_fraction", 0.0)),
                int(doc.get("seed", 0)),
                doc.get("max_nodes"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid topology spec: {exc}") from exc


# Four PDUs under two UPS; PDU2 feeds Rack2..Rack5.
PRESET_47 = TopologySpec(
    sources=1,
    source_kind="PSU",
    layers=(
        LayerSpec("UPS", 2),
        LayerSpec("PDU", 2),
        LayerSpec("Rack", (1, 4, 2, 1)),
        LayerSpec("Server", 3, parent="Rack"),
        LayerSpec("Router", 1, parent="Rack"),
    ),
)

_PRESETS = {"power_chain_47": PRESET_47}


def generate_topology(spec: TopologySpec) -> DependencyGraph:
    """Layered DAG with block numbering: a parent's children are consecutive."""
    rng = np.random.default_rng(spec.seed)
    layers: dict[str, list[str]] = {spec.source_kind: [f"{spec.source_kind}{i + 1}" for i in range(spec.sources)]}
    kinds = {n: spec.source_kind for n in layers[spec.source_kind]}
    edges: list[tuple[str, str]] = []
    prev = spec.source_kind
    for layer in spec.layers:
        parents = layers[layer.parent or prev]
        fan = layer.fanout if isinstance(layer.fanout, tuple) else (layer.fanout,) * len(parents)
        if len(fan) != len(parents):
            raise ConfigError(f"layer {layer.kind!r} lists {len(fan)} fan-outs for {len(parents)} parents")
        names: list[str] = []
        for p, f in zip(parents, fan):
            for _ in range(f):
                child = f"{layer.kind}{len(names) + 1}"
                names.append(child)
                kinds[child] = layer.kind
                edges.append((p, child))
        if spec.dummy_parent_fraction > 0 and len(parents) > 1:
            primary = {c: p for p, c in edges[-len(names):]}
            for child in names:
                if rng.random() < spec.dummy_parent_fraction:
                    others = [p for p in parents if p != primary[child]]
                    edges.append((others[int(rng.integers(len(others)))], child))
        layers[layer.kind] = names
        prev = layer.kind
    if spec.max_nodes is not None and len(kinds) > spec.max_nodes:
        # creation order is layer by layer, so a prefix keeps every parent
        keep = set(list(kinds)[: spec.max_nodes])
        kinds = {d: k for d, k in kinds.items() if d in keep}
        edges = [(u, v) for u, v in edges if u in keep and v in keep]
    return DependencyGraph(kinds, tuple(edges))


def sized_chain_spec(n: int, seed: int = 0, dummy_parent_fraction: float = 0.0) -> TopologySpec:
    """Five-level PSU/UPS/PDU/Rack/Server chain with exactly ``n`` devices."""
    if n < 1:
        raise ConfigError("chain size must be positive")
    f = max(2, round(n**0.25))
    upper = 1 + f + f * f + f**3
    servers = max(1, math.ceil((n - upper) / f**3))
    return TopologySpec(
        sources=1,
        layers=(LayerSpec("UPS", f), LayerSpec("PDU", f), LayerSpec("Rack", f), LayerSpec("Server", servers)),
        dummy_parent_fraction=dummy_parent_fraction,
        seed=seed,
        max_nodes=n,
    )


def load_preset(name: str = "power_chain_47") -> DependencyGraph:
    """Bundled topology file for a named preset."""
    if name not in _PRESETS:
        raise ConfigError(f"unknown topology preset {name!r}")
    text = resources.files("faultengine").joinpath("data", f"{name}.json").read_text()
    return parse_topology(text)


# -- scenario configuration ----------------------------------------------------


@dataclass(frozen=True)
class DeviceParams:
    alpha: float
    gamma: float
    k: float
    lam: float

    def __post_init__(self) -> None:
        for name in ("alpha", "gamma"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be a finite non-negative rate, got {v!r}")
        for name in ("k", "lam"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"recovery {name} must be positive and finite, got {v!r}")


@dataclass(frozen=True)
class Fault:
    device: str
    start: int
    mode: str = PERMANENT

    def __post_init__(self) -> None:
        mode = {"permanent": PERMANENT, "transient": TRANSIENT}.get(str(self.mode).lower(), self.mode)
        if mode not in (PERMANENT, TRANSIENT):
            raise ConfigError(f"fault mode must be permanent or transient, got {self.mode!r}")
        object.__setattr__(self, "mode", mode)


@dataclass(frozen=True)
class ScenarioConfig:
    topology: TopologySpec | DependencyGraph | str = "power_chain_47"
    defaults: DeviceParams = DeviceParams(alpha=5e-4, gamma=2e-5, k=2.43, lam=4.69)
    overrides: Mapping[str, DeviceParams] = field(default_factory=dict)
    horizon: int = 20000
    faults: tuple[Fault, ...] = ()
    poll_ticks: tuple[int, ...] | None = None
    seed: int = 0
    replace_after: int | None = None
    permanent_label_threshold: int = DEFAULT_PERMANENT_AFTER

    def __post_init__(self) -> None:
        if self.horizon <= 0:
            raise ConfigError("horizon must be positive")
        if self.replace_after is not None and self.replace_after <= 0:
            raise ConfigError("replace_after must be positive")
        for t in self.poll_ticks or ():
            if not 0 <= t < self.horizon:
                raise ConfigError(f"poll tick {t} outside [0, {self.horizon})")

    def graph(self) -> DependencyGraph:
        if isinstance(self.topology, DependencyGraph):
            return self.topology
        if isinstance(self.topology, TopologySpec):
            return generate_topology(self.topology)
        return load_preset(self.topology)

    def params(self, device: str) -> DeviceParams:
        return self.overrides.get(device, self.defaults)

    def effective_poll_ticks(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.poll_ticks))) if self.poll_ticks else (self.horizon - 1,)

    def to_doc(self) -> dict:
        if isinstance(self.topology, str):
            topo: dict = {"preset": self.topology}
        elif isinstance(self.topology, TopologySpec):
            topo = {"spec": _spec_doc(self.topology)}
        else:
            topo = {"inline": True}
        return {
            "topology": topo,
            "rates": {"alpha": self.defaults.alpha, "gamma": self.defaults.gamma},
            "recovery": {"k": self.defaults.k, "lambda": self.defaults.lam},
            "overrides": {d: _params_doc(p) for d, p in sorted(self.overrides.items())},
            "horizon": self.horizon,
            "faults": [{"device": f.device, "start": f.start, "mode": "permanent" if f.mode == PERMANENT else "transient"} for f in self.faults],
            "poll_ticks": list(self.effective_poll_ticks()),
            "seed": self.seed,
            "replace_after": self.replace_after,
            "permanent_label_threshold": self.permanent_label_threshold,
        }


def _spec_doc(spec: TopologySpec) -> dict:
    return {
        "sources": spec.sources,
        "source_kind": spec.source_kind,
        "layers": [
            {"kind": l.kind, "fanout": list(l.fanout) if isinstance(l.fanout, tuple) else l.fanout, "parent": l.parent}
            for l in spec.layers
        ],
        "dummy_parent_fraction": spec.dummy_parent_fraction,
        "seed": spec.seed,
        "max_nodes": spec.max_nodes,
    }


def _params_doc(p: DeviceParams) -> dict:
    return {"alpha": p.alpha, "gamma": p.gamma, "k": p.k, "lambda": p.lam}


def _parse_params(doc: Mapping[str, Any], base: DeviceParams) -> DeviceParams:
    k, lam = doc.get("k", base.k), doc.get("lambda", base.lam)
    if "beta" in doc and "k" not in doc and "lambda" not in doc:
        # exponential recovery with mean 1/beta
        k, lam = 1.0, 1.0 / float(doc["beta"])
    return DeviceParams(float(doc.get("alpha", base.alpha)), float(doc.get("gamma", base.gamma)), float(k), float(lam))


def load_scenario_config(path: str | Path, seed: int | None = None) -> ScenarioConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario config syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return scenario_config_from_doc(doc, base_dir=path.parent, seed=seed)


def scenario_config_from_doc(doc: Mapping[str, Any], base_dir: Path | None = None, seed: int | None = None) -> ScenarioConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("scenario config must be a JSON object")
    try:
        topo = doc.get("topology", {"preset": "power_chain_47"})
        topology: TopologySpec | DependencyGraph | str
        if "preset" in topo:
            topology = str(topo["preset"])
            if topology not in _PRESETS:
                raise ConfigError(f"unknown topology preset {topology!r}")
        elif "file" in topo:
            fpath = Path(topo["file"])
            if base_dir is not None and not fpath.is_absolute():
                fpath = base_dir / fpath
            topology = parse_topology(fpath.read_text())
        elif "spec" in topo:
            topology = TopologySpec.from_doc(topo["spec"])
        else:
            raise ConfigError("topology must give 'preset', 'file' or 'spec'")
        rates = dict(doc.get("rates", {}))
        rates.update(doc.get("recovery", {}))
        defaults = _parse_params(rates, ScenarioConfig.defaults)
        overrides = {d: _parse_params(p, defaults) for d, p in doc.get("overrides", {}).items()}
        faults = tuple(Fault(f["device"], int(f["start"]), f.get("mode", "permanent")) for f in doc.get("faults", []))
        poll = doc.get("poll_ticks")
        return ScenarioConfig(
            topology=topology,
            defaults=defaults,
            overrides=overrides,
            horizon=int(doc.get("horizon", 20000)),
            faults=faults,
            poll_ticks=tuple(int(t) for t in poll) if poll else None,
            seed=int(doc.get("seed", 0) if seed is None else seed),
            replace_after=None if doc.get("replace_after") is None else int(doc["replace_after"]),
            permanent_label_threshold=int(doc.get("permanent_label_threshold", DEFAULT_PERMANENT_AFTER)),
        )
    except (KeyError, TypeError, ValueError, OSError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid scenario config: {exc}") from exc


# -- device dynamics ----------------------------------------------------------


def _recovery_ticks(rng: np.random.Generator, p: DeviceParams) -> int:
    return max(1, int(round(p.lam * rng.weibull(p.k))))


def _run_device(
    rng: np.random.Generator,
    p: DeviceParams,
    start: int,
    state: str,
    horizon: int,
    replace_after: int | None,
) -> list[tuple[int, str]]:
    """Transitions (tick, new_state) after ``start`` until ``horizon``.

    Per tick an active device fails with probability 1 - exp(-(alpha+gamma));
    the failure is permanent with probability gamma / (alpha + gamma).  The
    sojourn is drawn directly as a geometric number of ticks.
    """
    out: list[tuple[int, str]] = []
    rate = p.alpha + p.gamma
    p_fail = -math.expm1(-rate)
    cur = start
    while cur < horizon:
        if state == ACTIVE:
            if p_fail <= 0.0:
                break
            cur += int(rng.geometric(p_fail))
            if cur >= horizon:
                break
            state = PERMANENT if rng.random() * rate < p.gamma else TRANSIENT
        elif state == TRANSIENT:
            cur += _recovery_ticks(rng, p)
            if cur >= horizon:
                break
            state = ACTIVE
        else:
            if replace_after is None:
                break
            cur += replace_after
            if cur >= horizon:
                break
            state = ACTIVE
        out.append((cur, state))
    return out


@dataclass(frozen=True)
class SimulationState:
    """Per-device state trajectories over ticks ``0 .. horizon-1``."""

    graph: DependencyGraph
    config: ScenarioConfig
    trajectories: Mapping[str, tuple[tuple[int, str], ...]]
    injected: tuple[Fault, ...] = ()
    order: tuple[str, ...] = ()

    @property
    def horizon(self) -> int:
        return self.config.horizon

    def state_at(self, device: str, tick: int) -> str:
        traj = self.trajectories[device]
        i = bisect.bisect_right(traj, (tick, "~")) - 1
        return traj[i][1]

    def failed_at(self, tick: int) -> set[str]:
        return {d for d in self.graph.nodes if self.state_at(d, tick) != ACTIVE}

    def alarm_log(self) -> AlarmLog:
        rows = []
        horizon = self.horizon
        for dev, traj in self.trajectories.items():
            for i, (tick, state) in enumerate(traj):
                if state == ACTIVE:
                    continue
                end = traj[i + 1][0] if i + 1 < len(traj) else horizon
                rows.extend((t, dev, ALARM) for t in range(tick, min(end, horizon)))
                if end < horizon:
                    rows.append((end, dev, OK))
        return AlarmLog(rows)

    def transitions(self) -> list[tuple[str, int, str]]:
        rows = [(dev, t, s) for dev, traj in self.trajectories.items() for t, s in traj]
        return sorted(rows, key=lambda r: (r[1], r[0]))


def _device_rng(seed: int, index: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index, *extra]))


def simulate_history(graph: DependencyGraph, config: ScenarioConfig) -> SimulationState:
    """Independent per-device Markov runs over the horizon, no injected faults."""
    cycle = validate_acyclic(graph)
    if cycle is not None:
        raise ConfigError(f"topology has a cycle through {cycle}")
    trajectories = {}
    for i, dev in enumerate(graph.nodes):
        rng = _device_rng(config.seed, i)
        trans = _run_device(rng, config.params(dev), 0, ACTIVE, config.horizon, config.replace_after)
        trajectories[dev] = ((0, ACTIVE), *trans)
    return SimulationState(graph, config, trajectories, (), tuple(topological_sort(graph)))


def generate_history(graph: DependencyGraph, config: ScenarioConfig) -> AlarmLog:
    return simulate_history(graph, config).alarm_log()


def inject_failure(state: SimulationState, device: str, tick: int, mode: str = PERMANENT) -> SimulationState:
    """Force ``device`` into T or P at ``tick``, overriding its own draws.

    An injected permanent failure is never replaced.  After an injected
    transient failure the device recovers after a drawn duration and resumes
    its stochastic dynamics.
    """
    fault = Fault(device, tick, mode)
    if device not in state.graph:
        raise ConfigError(f"unknown device {device!r}")
    if not 0 <= tick < state.horizon:
        raise ConfigError(f"injection tick {tick} outside [0, {state.horizon})")
    traj = [tr for tr in state.trajectories[device] if tr[0] < tick]
    last = traj[-1][1] if traj else None
    if fault.mode == PERMANENT:
        if last != PERMANENT:
            traj.append((tick, PERMANENT))
    else:
        index = list(state.graph.nodes).index(device)
        rng = _device_rng(state.config.seed, index, tick, 1)
        p = state.config.params(device)
        if last != TRANSIENT:
            traj.append((tick, TRANSIENT))
        back = tick + _recovery_ticks(rng, p)
        if back < state.horizon:
            traj.append((back, ACTIVE))
            traj.extend(_run_device(rng, p, back, ACTIVE, state.horizon, state.config.replace_after))
    trajectories = dict(state.trajectories)
    trajectories[device] = tuple(traj)
    return replace(state, trajectories=trajectories, injected=state.injected + (fault,))


def poll_cycle(state: SimulationState, tick: int) -> PollSnapshot:
    if not 0 <= tick < state.horizon:
        raise ConfigError(f"poll tick {tick} outside [0, {state.horizon})")
    status: dict[str, Response] = {}
    graph = state.graph
    for dev in state.order:
        if state.state_at(dev, tick) != ACTIVE:
            status[dev] = Response.FAULTY
            continue
        parents = graph.parents(dev)
        if not parents or any(status[p] is Response.OK for p in parents):
            status[dev] = Response.OK
        else:
            status[dev] = Response.NO_RESPONSE
    return PollSnapshot(tick, status)


def label_failures(log: AlarmLog, threshold: int = DEFAULT_PERMANENT_AFTER) -> list[dict]:
    """Label each ALARM run permanent when it lasts more than ``threshold`` ticks."""
    end = log.last_tick() or 0
    out = []
    for dev, runs in sorted(log.runs().items()):
        for run in runs:
            length = run.duration if run.closed else run.observed_length(end)
            out.append({
                "device": dev,
                "start": run.start,
                "end": run.end,
                "label": "permanent" if length > threshold else "transient",
            })
    return out


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    state: SimulationState
    log: AlarmLog
    snapshots: list[PollSnapshot]
    root_causes: list[str]

    @property
    def graph(self) -> DependencyGraph:
        return self.state.graph

    def snapshot(self, tick: int | None = None) -> PollSnapshot:
        if tick is None:
            return self.snapshots[-1]
        for s in self.snapshots:
            if s.tick == tick:
                return s
        return poll_cycle(self.state, tick)

    def ground_truth(self) -> list[tuple[str, int, str]]:
        return self.state.transitions()

    def labels(self) -> list[dict]:
        return label_failures(self.log, self.config.permanent_label_threshold)


def run_scenario(config: ScenarioConfig) -> ScenarioResult:
    graph = config.graph()
    for f in config.faults:
        if f.device not in graph:
            raise ConfigError(f"fault references unknown device {f.device!r}")
    state = simulate_history(graph, config)
    for f in sorted(config.faults, key=lambda f: (f.start, f.device)):
        state = inject_failure(state, f.device, f.start, f.mode)
    snapshots = [poll_cycle(state, t) for t in config.effective_poll_ticks()]
    return ScenarioResult(config, state, state.alarm_log(), snapshots, sorted({f.device for f in config.faults}))


def sample_internal_devices(graph: DependencyGraph) -> list[str]:
    """Devices with both a parent and a child."""
    return [d for d in graph.nodes if graph.parents(d) and graph.children(d)]


def preset_scenario(
    device: str,
    seed: int,
    graph: DependencyGraph | None = None,
    horizon: int = 20000,
    elapsed: int = 15,
) -> ScenarioConfig:
    """Permanent failure at ``device`` polled ``elapsed`` ticks later, at the
    end of a long history of background failures."""
    start = horizon - 1 - elapsed
    return ScenarioConfig(
        topology=graph if graph is not None else "power_chain_47",
        horizon=horizon,
        faults=(Fault(device, start, PERMANENT),),
        poll_ticks=(horizon - 1,),
        seed=seed,
        replace_after=48,
    )


def write_bundled_preset(path: str | Path, spec: TopologySpec = PRESET_47) -> None:
    from .topology import serialize_topology

    Path(path).write_text(serialize_topology(generate_topology(spec)))


def iter_snapshots_doc(snapshots: Sequence[PollSnapshot]) -> dict:
    return {"snapshots": [s.to_doc() for s in snapshots]}
