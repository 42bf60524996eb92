"""Device dependency DAG: parsing, validation, ordering, levels and reachability.

Edges point along the power/information flow, parent -> child.  A failed parent
can explain alarms anywhere below it, so most of the engine asks "is ``a`` an
ancestor of ``d``?"; :class:`ReachabilityIndex` answers that in one bit test.
"""

from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import CycleError, TopologyError

__all__ = [
    "DependencyGraph",
    "ReachabilityIndex",
    "build_reachability",
    "depth_levels",
    "graph_hash",
    "load_topology",
    "parse_topology",
    "serialize_topology",
    "topological_sort",
    "validate_acyclic",
    "validate_device_id",
]


def validate_device_id(device: object) -> str:
    if not isinstance(device, str) or not device:
        raise TopologyError(f"device id must be a non-empty string, got {device!r}")
    if any(ch.isspace() for ch in device):
        raise TopologyError(f"device id {device!r} contains whitespace")
    return device


@dataclass(frozen=True)
class DependencyGraph:
    """Immutable directed graph of devices.

    ``nodes`` maps device id to a free-form kind label (``""`` when absent).
    Construction checks ids, dangling edges, self-edges and duplicates but not
    acyclicity; use :func:`validate_acyclic` for that.
    """

    nodes: Mapping[str, str]
    edges: tuple[tuple[str, str], ...]
    _children: dict[str, tuple[str, ...]] = field(init=False, repr=False, compare=False)
    _parents: dict[str, tuple[str, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        nodes = {validate_device_id(n): str(k or "") for n, k in sorted(self.nodes.items())}
        children: dict[str, list[str]] = {n: [] for n in nodes}
        parents: dict[str, list[str]] = {n: [] for n in nodes}
        seen: set[tuple[str, str]] = set()
        for u, v in self.edges:
            for end in (u, v):
                if end not in nodes:
                    raise TopologyError(f"edge {u!r} -> {v!r} references unknown device {end!r}")
            if u == v:
                raise TopologyError(f"self-edge on device {u!r}")
            if (u, v) in seen:
                raise TopologyError(f"duplicate edge {u!r} -> {v!r}")
            seen.add((u, v))
            children[u].append(v)
            parents[v].append(u)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", tuple(sorted(seen)))
        object.__setattr__(self, "_children", {n: tuple(sorted(c)) for n, c in children.items()})
        object.__setattr__(self, "_parents", {n: tuple(sorted(p)) for n, p in parents.items()})

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str]], nodes: Iterable[str] = (), kinds: Mapping[str, str] | None = None) -> "DependencyGraph":
        edges = list(edges)
        ids = set(nodes)
        for u, v in edges:
            ids.update((u, v))
        kinds = kinds or {}
        return cls({n: kinds.get(n, "") for n in ids}, tuple(edges))

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, device: object) -> bool:
        return device in self.nodes

    def __iter__(self) -> Iterator[str]:
        return iter(self.nodes)

    def kind(self, device: str) -> str:
        return self.nodes[device]

    def children(self, device: str) -> tuple[str, ...]:
        return self._children[device]

    def parents(self, device: str) -> tuple[str, ...]:
        return self._parents[device]

    def sources(self) -> list[str]:
        return [n for n in self.nodes if not self._parents[n]]

    def sinks(self) -> list[str]:
        return [n for n in self.nodes if not self._children[n]]


# -- file format --------------------------------------------------------------


def parse_topology(text: str) -> DependencyGraph:
    """Parse a topology document (JSON with ``nodes`` and ``edges`` arrays)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TopologyError(f"topology syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("nodes"), list) or not isinstance(doc.get("edges", []), list):
        raise TopologyError("topology document must be an object with 'nodes' and 'edges' arrays")
    nodes: dict[str, str] = {}
    for i, rec in enumerate(doc["nodes"]):
        if not isinstance(rec, dict) or "id" not in rec:
            raise TopologyError(f"nodes[{i}] must be an object with an 'id' field")
        node_id = validate_device_id(rec["id"])
        if node_id in nodes:
            raise TopologyError(f"duplicate node id {node_id!r}")
        nodes[node_id] = str(rec.get("kind") or "")
    edges = []
    for i, rec in enumerate(doc.get("edges", [])):
        if not isinstance(rec, dict) or "from" not in rec or "to" not in rec:
            raise TopologyError(f"edges[{i}] must be an object with 'from' and 'to' fields")
        u, v = rec["from"], rec["to"]
        for end in (u, v):
            if end not in nodes:
                raise TopologyError(f"edges[{i}] references unknown device {end!r}")
        edges.append((u, v))
    return DependencyGraph(nodes, tuple(edges))


def serialize_topology(graph: DependencyGraph) -> str:
    doc = {
        "nodes": [{"id": n, "kind": k} for n, k in graph.nodes.items()],
        "edges": [{"from": u, "to": v} for u, v in graph.edges],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_topology(path: str | Path) -> DependencyGraph:
    return parse_topology(Path(path).read_text())


def graph_hash(graph: DependencyGraph) -> str:
    return hashlib.sha256(serialize_topology(graph).encode()).hexdigest()


# -- ordering -----------------------------------------------------------------


def validate_acyclic(graph: DependencyGraph) -> list[str] | None:
    """Return ``None`` for a DAG, otherwise one witness cycle ``[v0, v1, ...]``
    meaning v0 -> v1 -> ... -> v0."""
    white, grey, black = 0, 1, 2
    color = dict.fromkeys(graph.nodes, white)
    for root in graph.nodes:
        if color[root] != white:
            continue
        stack: list[tuple[str, Iterator[str]]] = [(root, iter(graph.children(root)))]
        path = [root]
        color[root] = grey
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                path.pop()
                color[node] = black
            elif color[nxt] == grey:
                return path[path.index(nxt):]
            elif color[nxt] == white:
                color[nxt] = grey
                path.append(nxt)
                stack.append((nxt, iter(graph.children(nxt))))
    return None


def _require_acyclic(graph: DependencyGraph) -> None:
    cycle = validate_acyclic(graph)
    if cycle is not None:
        raise CycleError(cycle)


def topological_sort(graph: DependencyGraph) -> list[str]:
    """Kahn's algorithm; among ready nodes the smallest id goes first."""
    indegree = {n: len(graph.parents(n)) for n in graph.nodes}
    ready = [n for n, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        node = heapq.heappop(ready)
        order.append(node)
        for child in graph.children(node):
            indegree[child] -= 1
            if indegree[child] == 0:
                heapq.heappush(ready, child)
    if len(order) != len(graph):
        _require_acyclic(graph)
    return order


def depth_levels(graph: DependencyGraph, order: list[str] | None = None) -> dict[str, int]:
    """Longest-path distance from any source node."""
    if order is None:
        order = topological_sort(graph)
    level: dict[str, int] = {}
    for node in order:
        parents = graph.parents(node)
        level[node] = 1 + max(level[p] for p in parents) if parents else 0
    return level


# -- reachability -------------------------------------------------------------


class ReachabilityIndex:
    """Descendant sets as shifted bitsets over DFS post-order positions.

    In a DAG every descendant finishes before its ancestor, so each set lives
    below the owner's position.  Storing ``(offset, mask)`` keeps a subtree's
    set proportional to its extent rather than to its highest position, which
    keeps tree-like power chains near O(n * depth) bits.
    """

    def __init__(self, position: dict[str, int], desc: dict[str, tuple[int, int]], order: list[str]):
        self._pos = position
        self._desc = desc
        self._by_pos = order

    def __len__(self) -> int:
        return len(self._pos)

    def reaches(self, a: str, d: str) -> bool:
        """True iff a directed path a -> ... -> d exists (never for a == d)."""
        off, mask = self._desc[a]
        p = self._pos[d] - off
        return p >= 0 and (mask >> p) & 1 == 1

    def explains(self, f: str, d: str) -> bool:
        """Ancestor-or-self indicator used by the Bayes computations."""
        return f == d or self.reaches(f, d)

    def descendants(self, a: str) -> list[str]:
        off, mask = self._desc[a]
        if not mask:
            return []
        bits = bin(mask)[:1:-1]
        by_pos = self._by_pos
        return sorted(by_pos[off + i] for i, b in enumerate(bits) if b == "1")

    def descendant_count(self, a: str) -> int:
        return self._desc[a][1].bit_count()

    def ancestors_map(self) -> dict[str, list[str]]:
        """Invert the index: device -> sorted list of its ancestors."""
        anc: dict[str, list[str]] = {n: [] for n in self._pos}
        for a in sorted(self._pos):
            for d in self.descendants(a):
                anc[d].append(a)
        return anc


def build_reachability(graph: DependencyGraph) -> ReachabilityIndex:
    _require_acyclic(graph)
    position: dict[str, int] = {}
    order: list[str] = []
    desc: dict[str, tuple[int, int]] = {}
    for root in graph.sources():
        if root in position:
            continue
        stack: list[tuple[str, Iterator[str]]] = [(root, iter(graph.children(root)))]
        visiting = {root}
        while stack:
            node, it = stack[-1]
            child = next(it, None)
            if child is not None:
                if child not in position and child not in visiting:
                    visiting.add(child)
                    stack.append((child, iter(graph.children(child))))
                continue
            stack.pop()
            position[node] = len(order)
            order.append(node)
            off, mask = 0, 0
            for c in graph.children(node):
                c_off, c_mask = desc[c]
                c_pos = position[c]
                # {c} U desc(c); both below c_pos + 1
                if c_mask:
                    lo = min(c_off, c_pos)
                    part = (c_mask << (c_off - lo)) | (1 << (c_pos - lo))
                else:
                    lo, part = c_pos, 1
                if not mask:
                    off, mask = lo, part
                elif lo < off:
                    mask = (mask << (off - lo)) | part
                    off = lo
                else:
                    mask |= part << (lo - off)
            desc[node] = (off, mask)
    return ReachabilityIndex(position, desc, order)
