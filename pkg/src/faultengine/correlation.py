"""Correlated-failure clustering.

Devices that sit on a common dependency path get an undirected edge weighted by
the symmetrised Bayes posterior; Girvan-Newman splits that graph and the split
with the best weighted modularity is kept.  Clustering is a batch step: the
partition is persisted and reused online to narrow a root-cause search to the
clusters of the alarming devices.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import LogFormatError
from .topology import DependencyGraph, ReachabilityIndex, depth_levels

__all__ = [
    "CommunityPartition",
    "SimilarityGraph",
    "build_similarity_graph",
    "cluster_scoped_rank",
    "edge_betweenness",
    "girvan_newman",
    "modularity",
    "node_severity",
]

# relative slack when comparing betweenness values for ties
_TIE_TOL = 1e-9


class SimilarityGraph:
    """Undirected weighted graph without self-loops."""

    def __init__(self, nodes: Iterable[str], edges: Iterable[tuple[str, str, float]] = ()):
        self.nodes: list[str] = sorted(set(nodes))
        self.adj: dict[str, dict[str, float]] = {n: {} for n in self.nodes}
        for u, v, w in edges:
            self.add_edge(u, v, w)

    def add_edge(self, u: str, v: str, w: float) -> None:
        if u == v:
            raise ValueError(f"self-loop on {u!r}")
        if u not in self.adj or v not in self.adj:
            raise KeyError(f"edge ({u!r}, {v!r}) references unknown node")
        self.adj[u][v] = float(w)
        self.adj[v][u] = float(w)

    def weight(self, u: str, v: str) -> float | None:
        return self.adj[u].get(v)

    def edges(self) -> list[tuple[str, str, float]]:
        return sorted((u, v, w) for u in self.nodes for v, w in self.adj[u].items() if u < v)

    def number_of_edges(self) -> int:
        return sum(len(a) for a in self.adj.values()) // 2

    def neighbors(self, u: str) -> dict[str, float]:
        return self.adj[u]


def build_similarity_graph(
    graph: DependencyGraph,
    table: Mapping[str, float],
    reach: ReachabilityIndex,
    floor: float = 0.0,
) -> SimilarityGraph:
    """Edge between every ancestor/descendant pair, weight (P(i|j) + P(j|i)) / 2.

    ``P(i|j)`` is the posterior that ``i`` caused an alarm at ``j`` with every
    device as a candidate.  Only one direction is non-zero in a DAG.  Edges
    lighter than ``floor`` are dropped.
    """
    anc = reach.ancestors_map()
    g = SimilarityGraph(graph.nodes)
    for d in graph.nodes:
        ups = anc[d]
        if not ups:
            continue
        z = table[d] + sum(table[a] for a in ups)
        for a in ups:
            w = 0.5 * (table[a] / z) if z > 0 else 0.0
            if w >= floor:
                g.add_edge(a, d, w)
    return g


# -- betweenness --------------------------------------------------------------


def _brandes_edges(sources: Iterable[int], adj: list[list[int]], out: dict[tuple[int, int], float]) -> None:
    """Accumulate ordered-pair edge dependencies from each source into ``out``."""
    n = len(adj)
    for s in sources:
        sigma = [0] * n
        dist = [-1] * n
        sigma[s] = 1
        dist[s] = 0
        order = []
        queue = deque([s])
        while queue:
            v = queue.popleft()
            order.append(v)
            dv = dist[v] + 1
            sv = sigma[v]
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dv
                    queue.append(w)
                if dist[w] == dv:
                    sigma[w] += sv
        delta = [0.0] * n
        for w in reversed(order):
            dw = dist[w] - 1
            coeff = (1.0 + delta[w]) / sigma[w]
            for v in adj[w]:
                if dist[v] == dw:
                    c = sigma[v] * coeff
                    key = (v, w) if v < w else (w, v)
                    out[key] = out.get(key, 0.0) + c
                    delta[v] += c


def _index(g: SimilarityGraph) -> tuple[dict[str, int], list[list[int]]]:
    idx = {n: i for i, n in enumerate(g.nodes)}
    adj = [sorted(idx[v] for v in g.adj[n]) for n in g.nodes]
    return idx, adj


def edge_betweenness(g: SimilarityGraph) -> dict[tuple[str, str], float]:
    """Hop-count shortest-path edge betweenness over unordered node pairs."""
    idx, adj = _index(g)
    raw: dict[tuple[int, int], float] = {}
    _brandes_edges(range(len(adj)), adj, raw)
    names = g.nodes
    out = {(names[i], names[j]): 0.0 for i in range(len(adj)) for j in adj[i] if i < j}
    for (i, j), v in raw.items():
        out[(names[i], names[j])] = v / 2.0
    return out


# -- partitions ---------------------------------------------------------------


@dataclass(frozen=True)
class CommunityPartition:
    assignment: Mapping[str, int]
    modularity: float

    @property
    def count(self) -> int:
        return len(set(self.assignment.values()))

    def clusters(self) -> list[list[str]]:
        groups: dict[int, list[str]] = {}
        for d, c in self.assignment.items():
            groups.setdefault(c, []).append(d)
        return [sorted(groups[c]) for c in sorted(groups)]

    def cluster_of(self, device: str) -> int:
        return self.assignment[device]

    def members(self, cluster: int) -> list[str]:
        return sorted(d for d, c in self.assignment.items() if c == cluster)

    def to_doc(self, metadata: Mapping | None = None) -> dict:
        return {
            **dict(metadata or {}),
            "modularity": self.modularity,
            "cluster_count": self.count,
            "records": [{"device_id": d, "cluster_id": c} for d, c in sorted(self.assignment.items())],
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "CommunityPartition":
        try:
            assignment = {r["device_id"]: int(r["cluster_id"]) for r in doc["records"]}
            return cls(assignment, float(doc.get("modularity", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise LogFormatError(f"malformed partition file: {exc}") from exc


def _dense_partition(groups: Iterable[Iterable[str]]) -> dict[str, int]:
    """Cluster ids 0..c-1 ordered by each cluster's smallest member."""
    ordered = sorted((sorted(gr) for gr in groups if gr), key=lambda gr: gr[0])
    return {d: cid for cid, gr in enumerate(ordered) for d in gr}


def modularity(g: SimilarityGraph, p: CommunityPartition | Mapping[str, int]) -> float:
    """Weighted Newman modularity; 0 for a graph with no edge weight."""
    assignment = p.assignment if isinstance(p, CommunityPartition) else p
    missing = [n for n in g.nodes if n not in assignment]
    if missing:
        raise ValueError(f"partition does not cover nodes {missing[:5]}")
    total = 0.0
    w_in: dict[int, float] = {}
    w_tot: dict[int, float] = {}
    for u in g.nodes:
        cu = assignment[u]
        for v, w in g.adj[u].items():
            w_tot[cu] = w_tot.get(cu, 0.0) + w
            if u < v:
                total += w
                if assignment[v] == cu:
                    w_in[cu] = w_in.get(cu, 0.0) + w
    if total <= 0.0:
        return 0.0
    return sum(w_in.get(c, 0.0) / total - (w_tot[c] / (2.0 * total)) ** 2 for c in w_tot)


def _component(start: int, adj: list[set[int]]) -> list[int]:
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return sorted(seen)


def girvan_newman(g: SimilarityGraph) -> CommunityPartition:
    """Remove max-betweenness edges until none remain; keep the best split.

    Betweenness is recomputed only inside the component that lost an edge.
    Ties go to the lexicographically smallest edge.  Among partitions with
    equal modularity the earliest (coarsest) one wins.
    """
    names = g.nodes
    n = len(names)
    idx = {name: i for i, name in enumerate(names)}
    adj = [set(idx[v] for v in g.adj[name]) for name in names]

    label = [-1] * n
    comps: list[list[int]] = []
    for i in range(n):
        if label[i] < 0:
            comp = _component(i, adj)
            for v in comp:
                label[v] = len(comps)
            comps.append(comp)

    def as_assignment() -> dict[str, int]:
        groups: dict[int, list[str]] = {}
        for i in range(n):
            groups.setdefault(label[i], []).append(names[i])
        return _dense_partition(groups.values())

    best = as_assignment()
    best_q = modularity(g, best)

    frozen = [sorted(a) for a in adj]
    eb: dict[tuple[int, int], float] = {}
    for comp in comps:
        if len(comp) > 1:
            _brandes_edges(comp, frozen, eb)

    while eb:
        top = max(eb.values())
        cutoff = top - _TIE_TOL * max(1.0, top)
        u, v = min(e for e, val in eb.items() if val >= cutoff)
        adj[u].discard(v)
        adj[v].discard(u)
        frozen[u] = sorted(adj[u])
        frozen[v] = sorted(adj[v])

        comp_u = _component(u, adj)
        affected = [comp_u]
        split = v not in set(comp_u)
        if split:
            comp_v = _component(v, adj)
            affected.append(comp_v)
            new_label = max(label) + 1
            for x in comp_v:
                label[x] = new_label

        stale = set()
        for comp in affected:
            for x in comp:
                stale.add(x)
        eb = {e: val for e, val in eb.items() if e[0] not in stale}
        for comp in affected:
            if len(comp) > 1:
                _brandes_edges(comp, frozen, eb)

        if split:
            cand = as_assignment()
            q = modularity(g, cand)
            if q > best_q + 1e-12:
                best, best_q = cand, q

    return CommunityPartition(best, best_q)


# -- severity and cluster-scoped ranking ---------------------------------------


def node_severity(g: SimilarityGraph) -> dict[str, float]:
    """Mean incident edge weight; 0 for isolated nodes."""
    return {n: (sum(g.adj[n].values()) / len(g.adj[n]) if g.adj[n] else 0.0) for n in g.nodes}


def cluster_scoped_rank(
    alarming: Iterable[str],
    p: CommunityPartition,
    graph: DependencyGraph,
    sev: Mapping[str, float],
    levels: Mapping[str, int] | None = None,
) -> list[str]:
    """Members of every cluster holding an alarming device, most critical first."""
    alarming = sorted(set(alarming))
    if not alarming:
        raise ValueError("cluster_scoped_rank needs at least one alarming device")
    if levels is None:
        levels = depth_levels(graph)
    wanted = {p.cluster_of(d) for d in alarming}
    members = [d for d, c in p.assignment.items() if c in wanted]
    return sorted(members, key=lambda d: (levels[d], -sev.get(d, 0.0), d))
