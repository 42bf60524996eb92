"""Runtime scaling harness for the three analysis stages."""

from __future__ import annotations

import math
import resource
import time
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .correlation import build_similarity_graph, girvan_newman, node_severity
from .failure_model import FailureStats, WeibullParams, classify_failure, rates_from_stats
from .root_cause import alarming_devices, collect_suspects, marginal_failure_probs, rank_root_causes
from .simulator import Fault, ScenarioConfig, generate_topology, run_scenario, sample_internal_devices, sized_chain_spec
from .topology import build_reachability, depth_levels

MODULES = ("markov", "root_cause", "clustering")
DEFAULT_SIZES = (50, 500, 5000, 12000, 50000, 100000)
DEFAULT_MAX_CLUSTER_SIZE = 500


@dataclass(frozen=True)
class BenchRecord:
    module: str
    n: int
    user_s: float
    system_s: float
    cpu_s: float
    wall_s: float
    repetitions: int

    @property
    def per_run_cpu_s(self) -> float:
        return self.cpu_s / self.repetitions


def normalize_module(name: str) -> str:
    name = name.replace("-", "_")
    if name not in MODULES:
        raise ValueError(f"unknown bench module {name!r}; choose from {', '.join(MODULES)}")
    return name


def _measure(module: str, n: int, reps: int, body: Callable[[], object]) -> BenchRecord:
    ru0 = resource.getrusage(resource.RUSAGE_SELF)
    c0, w0 = time.process_time(), time.perf_counter()
    for _ in range(reps):
        body()
    c1, w1 = time.process_time(), time.perf_counter()
    ru1 = resource.getrusage(resource.RUSAGE_SELF)
    return BenchRecord(module, n, ru1.ru_utime - ru0.ru_utime, ru1.ru_stime - ru0.ru_stime, c1 - c0, w1 - w0, reps)


def bench_markov(n: int, reps: int = 1, seed: int = 0) -> BenchRecord:
    """Per-device rate estimation plus permanence classification for ``n`` failing devices."""
    rng = np.random.default_rng(seed)
    counts = rng.integers(1, 50, size=(n, 3))
    means = rng.uniform([100.0, 2.0, 5000.0], [2000.0, 10.0, 50000.0], size=(n, 3))
    stats = [
        FailureStats(int(c[0]), float(c[0] * m[0]), int(c[1]), float(c[1] * m[1]), int(c[2]), float(c[2] * m[2]))
        for c, m in zip(counts, means)
    ]
    shapes = [WeibullParams(float(k), float(l)) for k, l in zip(rng.uniform(0.8, 3.0, n), rng.uniform(2.0, 8.0, n))]
    elapsed = rng.integers(0, 30, size=n).tolist()
    names = [f"D{i}" for i in range(n)]

    def body() -> None:
        for dev, s, w, t in zip(names, stats, shapes, elapsed):
            classify_failure(dev, t, rates_from_stats(s), w)

    return _measure("markov", n, reps, body)


def _scenario(n: int, seed: int, horizon: int):
    graph = generate_topology(sized_chain_spec(n, seed=seed))
    internal = sample_internal_devices(graph) or list(graph.nodes)
    target = internal[int(np.random.default_rng(seed).integers(len(internal)))]
    cfg = ScenarioConfig(
        topology=graph, horizon=horizon, faults=(Fault(target, horizon - 16),), seed=seed, replace_after=48
    )
    return graph, run_scenario(cfg)


def bench_root_cause(n: int, reps: int = 1, seed: int = 0, horizon: int = 2000) -> BenchRecord:
    graph, res = _scenario(n, seed, horizon)
    snap = res.snapshot()

    def body() -> None:
        table = marginal_failure_probs(res.log, graph)
        reach = build_reachability(graph)
        rank_root_causes(collect_suspects(snap), alarming_devices(snap), graph, table, reach, depth_levels(graph))

    return _measure("root_cause", n, reps, body)


def bench_clustering(n: int, reps: int = 1, seed: int = 0, horizon: int = 2000) -> BenchRecord:
    graph, res = _scenario(n, seed, horizon)
    table = marginal_failure_probs(res.log, graph)

    def body() -> None:
        sim = build_similarity_graph(graph, table, build_reachability(graph))
        girvan_newman(sim)
        node_severity(sim)

    return _measure("clustering", n, reps, body)


_RUNNERS = {"markov": bench_markov, "root_cause": bench_root_cause, "clustering": bench_clustering}


def run_bench(
    modules: Iterable[str],
    sizes: Iterable[int] = DEFAULT_SIZES,
    reps: int = 1,
    seed: int = 0,
    max_cluster_size: int = DEFAULT_MAX_CLUSTER_SIZE,
) -> list[BenchRecord]:
    records = []
    for module in (normalize_module(m) for m in modules):
        for n in sizes:
            if n <= 0:
                raise ValueError("bench sizes must be positive")
            if module == "clustering" and n > max_cluster_size:
                continue
            records.append(_RUNNERS[module](n, reps=reps, seed=seed))
    return records


def cubic_band_ratios(records: list[BenchRecord]) -> list[tuple[int, float, float]]:
    """(n, measured time ratio vs smallest n, cubic ratio) for each record."""
    base = records[0]
    out = []
    for r in records:
        out.append((r.n, r.per_run_cpu_s / base.per_run_cpu_s, math.pow(r.n / base.n, 3)))
    return out
