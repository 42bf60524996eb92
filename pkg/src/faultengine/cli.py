"""``faultengine`` command line: simulate, fit, classify, root-cause, cluster, bench.

Exit status: 0 success, 1 usage error, 2 data or I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Sequence

from . import bench as bench_mod
from .alarmlog import AlarmLog, format_alarm_log, read_alarm_log
from .correlation import (
    CommunityPartition,
    build_similarity_graph,
    cluster_scoped_rank,
    girvan_newman,
    node_severity,
)
from .errors import FaultEngineError, InsufficientDataError
from .failure_model import (
    DEFAULT_PERMANENT_AFTER,
    DEFAULT_THRESHOLD,
    DeviceFit,
    MarkovRates,
    classify_failure,
    fit_devices,
)
from .root_cause import (
    BAYES,
    ALARM_WEIGHTED,
    PollSnapshot,
    alarming_devices,
    collect_suspects,
    load_snapshot,
    marginal_failure_probs,
    rank_root_causes,
)
from .serialize import RunManifest, dumps, write_text
from .simulator import iter_snapshots_doc, load_scenario_config, run_scenario
from .topology import build_reachability, depth_levels, graph_hash, load_topology, serialize_topology

log = logging.getLogger("faultengine")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2
        raise UsageError(f"{self.prog}: error: {message}")


def _sizes(text: str) -> list[int]:
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"sizes must be comma-separated integers, got {text!r}") from None
    if not sizes or any(s <= 0 for s in sizes):
        raise argparse.ArgumentTypeError("sizes must be positive")
    return sizes


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="faultengine", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="run a failure scenario and write logs, snapshots and ground truth")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, type=Path, help="output directory")

    p = sub.add_parser("fit", help="per-device Weibull and Markov rate report")
    p.add_argument("--log", required=True, type=Path)
    p.add_argument("--graph", type=Path, help="topology file; defaults to the devices seen in the log")
    p.add_argument("--permanent-after", type=int, default=DEFAULT_PERMANENT_AFTER)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("classify", help="permanent/transient verdicts for alarming devices")
    p.add_argument("--log", required=True, type=Path)
    p.add_argument("--fit", required=True, type=Path)
    p.add_argument("--snapshot", type=Path)
    p.add_argument("--tick", type=int)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--form", choices=("weibull", "exponential"), default="weibull")
    p.add_argument("--mlt", type=float, help="fallback mean lifetime when the log shows no permanent failure")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("root-cause", help="ranked root-cause report from a poll snapshot")
    p.add_argument("--graph", required=True, type=Path)
    p.add_argument("--log", required=True, type=Path)
    p.add_argument("--snapshot", required=True, type=Path)
    p.add_argument("--tick", type=int)
    p.add_argument("--form", choices=(BAYES, ALARM_WEIGHTED), default=BAYES)
    p.add_argument("--partition", type=Path, help="tag entries with cluster ids from a persisted partition")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("cluster", help="correlated-failure partition and severity")
    p.add_argument("--graph", required=True, type=Path)
    p.add_argument("--log", required=True, type=Path)
    p.add_argument("--floor", type=float, default=0.0, help="drop similarity edges lighter than this")
    p.add_argument("--partition", type=Path, help="reuse a persisted partition instead of re-clustering")
    p.add_argument("--snapshot", type=Path, help="also write a cluster-scoped ranking for its FAULTY devices")
    p.add_argument("--tick", type=int)
    p.add_argument("--out", required=True, type=Path, help="output directory")

    p = sub.add_parser("bench", help="runtime scaling over network sizes")
    p.add_argument("--module", default="all", help="markov, root-cause, clustering or all")
    p.add_argument("--sizes", type=_sizes, default=list(bench_mod.DEFAULT_SIZES))
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-cluster-size", type=int, default=bench_mod.DEFAULT_MAX_CLUSTER_SIZE)
    p.add_argument("--out", type=Path)
    return parser


# -- subcommands --------------------------------------------------------------


def _cmd_simulate(args, manifest: RunManifest) -> None:
    manifest.add_input(args.config)
    cfg = load_scenario_config(args.config, seed=args.seed)
    manifest.seed = cfg.seed
    manifest.config = cfg.to_doc()
    if "inline" in manifest.config["topology"]:
        # graph given as a file: point at the copy written next to the config
        manifest.config["topology"] = {"file": "topology.json"}
    res = run_scenario(cfg)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "topology.json": serialize_topology(res.graph),
        "alarm_log.csv": format_alarm_log(res.log),
        "snapshots.json": dumps(iter_snapshots_doc(res.snapshots)),
        "ground_truth.csv": "device,tick,state\n" + "".join(f"{d},{t},{s}\n" for d, t, s in res.ground_truth()),
        "truth.json": dumps({
            "root_causes": res.root_causes,
            "faults": manifest.config["faults"],
            "labels": res.labels(),
            "graph_hash": graph_hash(res.graph),
        }),
        "config.json": dumps(manifest.config),
    }
    for name, text in files.items():
        manifest.add_output(out / name, write_text(out / name, text))


def _log_devices(log: AlarmLog, graph_path: Path | None, manifest: RunManifest) -> list[str]:
    if graph_path is None:
        return log.devices()
    manifest.add_input(graph_path)
    graph = load_topology(graph_path)
    extra = [d for d in log.devices() if d not in graph]
    if extra:
        raise FaultEngineError(f"alarm log references devices absent from the graph: {extra[:5]}")
    return list(graph.nodes)


def _cmd_fit(args, manifest: RunManifest) -> None:
    manifest.add_input(args.log)
    log_ = read_alarm_log(args.log)
    devices = _log_devices(log_, args.graph, manifest)
    fits = fit_devices(log_, devices, permanent_after=args.permanent_after)
    doc = {
        "metadata": {"log_span": log_.span(), "permanent_after": args.permanent_after, "device_count": len(fits)},
        "records": [f.to_record() for f in fits],
    }
    manifest.add_output(args.out, write_text(args.out, dumps(doc)))


def _failure_onset(log_: AlarmLog, device: str, tick: int) -> int | None:
    for run in log_.runs(device):
        if run.start <= tick and (run.end is None or run.end > tick):
            return run.start
    return None


def _cmd_classify(args, manifest: RunManifest) -> None:
    manifest.add_input(args.log)
    manifest.add_input(args.fit)
    log_ = read_alarm_log(args.log)
    fit_doc = _read_json(args.fit)
    try:
        fits = {r["device"]: DeviceFit.from_record(r) for r in fit_doc["records"]}
    except (KeyError, TypeError) as exc:
        raise FaultEngineError(f"malformed fit report: {exc}") from exc

    if args.snapshot is not None:
        manifest.add_input(args.snapshot)
        snap = load_snapshot(args.snapshot, args.tick)
        tick = snap.tick
        alarming = alarming_devices(snap)
    else:
        tick = args.tick if args.tick is not None else (log_.last_tick() or 0)
        alarming = [d for d in log_.devices() if _failure_onset(log_, d, tick) is not None]

    records = []
    for dev in alarming:
        if dev not in fits:
            raise FaultEngineError(f"no fitted parameters for alarming device {dev!r}")
        fit = fits[dev]
        gamma = fit.gamma
        if gamma is None and args.mlt is not None:
            gamma = 1.0 / args.mlt
        if None in (fit.alpha, fit.beta, gamma):
            raise InsufficientDataError(f"incomplete rates for {dev!r}; supply --mlt or a longer log")
        rates = MarkovRates(fit.alpha, fit.beta, gamma)
        onset = _failure_onset(log_, dev, tick)
        elapsed = 0 if onset is None else tick - onset + 1
        w = fit.weibull() if args.form == "weibull" else None
        c = classify_failure(dev, elapsed, rates, w, args.threshold)
        records.append({"device": dev, "elapsed": elapsed, "g": c.g, "verdict": c.verdict.value, "form": c.form})
    doc = {"metadata": {"tick": tick, "threshold": args.threshold, "form": args.form}, "records": records}
    manifest.add_output(args.out, write_text(args.out, dumps(doc)))


def _load_inputs(args, manifest: RunManifest):
    for path in (args.graph, args.log):
        manifest.add_input(path)
    graph = load_topology(args.graph)
    log_ = read_alarm_log(args.log)
    return graph, log_


def _cmd_root_cause(args, manifest: RunManifest) -> None:
    graph, log_ = _load_inputs(args, manifest)
    manifest.add_input(args.snapshot)
    snap = load_snapshot(args.snapshot, args.tick)
    snap.check_covers(graph)
    table = marginal_failure_probs(log_, graph)
    suspects = collect_suspects(snap)
    report = rank_root_causes(suspects, alarming_devices(snap), graph, table, build_reachability(graph), form=args.form)
    if args.partition is not None:
        manifest.add_input(args.partition)
        report = report.with_clusters(CommunityPartition.from_doc(_read_json(args.partition)).assignment)
    meta = {
        "graph_hash": graph_hash(graph),
        "log_span": log_.span(),
        "suspect_count": len(suspects),
        "snapshot_tick": snap.tick,
    }
    manifest.add_output(args.out, write_text(args.out, dumps(report.to_doc(meta))))


def _cmd_cluster(args, manifest: RunManifest) -> None:
    graph, log_ = _load_inputs(args, manifest)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    table = marginal_failure_probs(log_, graph)
    sim = build_similarity_graph(graph, table, build_reachability(graph), floor=args.floor)
    if args.partition is not None:
        manifest.add_input(args.partition)
        part = CommunityPartition.from_doc(_read_json(args.partition))
        missing = [d for d in graph.nodes if d not in part.assignment]
        if missing:
            raise FaultEngineError(f"partition does not cover devices {missing[:5]}")
    else:
        part = girvan_newman(sim)
    sev = node_severity(sim)
    meta = {"graph_hash": graph_hash(graph), "built_at_tick": log_.last_tick()}
    write = lambda name, doc: manifest.add_output(out / name, write_text(out / name, dumps(doc)))  # noqa: E731
    write("partition.json", part.to_doc(meta))
    write("severity.json", {"records": [{"device_id": d, "severity": s} for d, s in sorted(sev.items())]})
    if args.snapshot is not None:
        manifest.add_input(args.snapshot)
        snap: PollSnapshot = load_snapshot(args.snapshot, args.tick)
        alarming = alarming_devices(snap)
        ordered = cluster_scoped_rank(alarming, part, graph, sev, depth_levels(graph)) if alarming else []
        write("scoped.json", {
            "snapshot_tick": snap.tick,
            "alarming": alarming,
            "ranking": [{"rank": i, "device_id": d, "cluster_id": part.cluster_of(d), "severity": sev[d]} for i, d in enumerate(ordered, 1)],
        })


def _cmd_bench(args, manifest: RunManifest) -> None:
    modules = bench_mod.MODULES if args.module == "all" else (args.module,)
    try:
        modules = [bench_mod.normalize_module(m) for m in modules]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    manifest.seed = args.seed
    records = bench_mod.run_bench(modules, args.sizes, args.reps, args.seed, args.max_cluster_size)
    print(f"{'module':<12}{'n':>8}{'user_s':>11}{'system_s':>11}{'reps':>6}")
    for r in records:
        print(f"{r.module:<12}{r.n:>8}{r.user_s:>11.4f}{r.system_s:>11.4f}{r.repetitions:>6}")
    if args.out is not None:
        manifest.add_output(args.out, write_text(args.out, dumps({"records": records})))


_DIR_OUTPUTS = ("simulate", "cluster")

_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "classify": _cmd_classify,
    "root-cause": _cmd_root_cause,
    "cluster": _cmd_cluster,
    "bench": _cmd_bench,
}


def _read_json(path: Path):
    import json

    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FaultEngineError(f"{path}: syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("faultengine: error: a subcommand is required")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    manifest = RunManifest(args.command, argv)
    w0, c0 = time.perf_counter(), time.process_time()
    try:
        _COMMANDS[args.command](args, manifest)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (FaultEngineError, OSError) as exc:
        print(f"faultengine {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    manifest.wall_time_s = time.perf_counter() - w0
    manifest.cpu_time_s = time.process_time() - c0
    out = getattr(args, "out", None)
    if out is not None:
        # directory outputs hold their manifest; file outputs get a sibling
        target = out / "manifest.json" if args.command in _DIR_OUTPUTS else Path(str(out) + ".manifest.json")
        try:
            manifest.write(target)
        except OSError as exc:
            print(f"faultengine {args.command}: {exc}", file=sys.stderr)
            return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
