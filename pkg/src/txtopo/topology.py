"""Ground-truth graphs: generation, structural metrics, and edge-list I/O.

Nodes are dense integer ids in [0, node_count). Edges are undirected,
stored canonically as sorted (u, v) pairs with u < v.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

from . import kernels


@dataclass
class NodeAttrs:
    nat_flagged: bool = False
    initial_sync: bool = True


@dataclass(eq=True)
class Topology:
    """Undirected graph with per-node attributes. Treat instances as immutable."""

    node_count: int
    edges: tuple[tuple[int, int], ...]
    node_attrs: dict[int, NodeAttrs] = field(default_factory=dict)

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("node_count must be >= 1")
        seen = set()
        norm = []
        for u, v in self.edges:
            if u == v:
                raise ValueError(f"self-loop on node {u}")
            if not (0 <= u < self.node_count and 0 <= v < self.node_count):
                raise ValueError(f"edge ({u}, {v}) outside [0, {self.node_count})")
            e = (u, v) if u < v else (v, u)
            if e in seen:
                raise ValueError(f"duplicate edge {e}")
            seen.add(e)
            norm.append(e)
        self.edges = tuple(sorted(norm))
        for nid in self.node_attrs:
            if not 0 <= nid < self.node_count:
                raise ValueError(f"attrs for unknown node {nid}")

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def average_degree(self) -> float:
        return 2.0 * self.edge_count / self.node_count

    def attrs(self, node: int) -> NodeAttrs:
        return self.node_attrs.get(node, _DEFAULT_ATTRS)

    @cached_property
    def edge_array(self) -> np.ndarray:
        return np.array(self.edges, dtype=np.int64).reshape(-1, 2)

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        return kernels.build_csr(self.node_count, self.edge_array)

    @cached_property
    def degrees(self) -> np.ndarray:
        indptr, _ = self.csr
        return np.diff(indptr)

    @cached_property
    def neighbor_lists(self) -> list[list[int]]:
        indptr, indices = self.csr
        return [indices[indptr[i]:indptr[i + 1]].tolist() for i in range(self.node_count)]

    def neighbors(self, node: int) -> list[int]:
        return self.neighbor_lists[node]


_DEFAULT_ATTRS = NodeAttrs()


# ---------------------------------------------------------------------------
# generators

def gen_er(n: int, p: float, seed: int) -> Topology:
    """Erdos-Renyi G(n, p): each unordered pair kept independently with prob p."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    mask = rng.random(iu.shape[0]) < p
    edges = tuple(zip(iu[mask].tolist(), ju[mask].tolist()))
    return Topology(n, edges)


def gen_ba(n: int, m: int, seed: int) -> Topology:
    """Preferential attachment starting from a complete graph on m nodes.

    Each node beyond the seed clique attaches with m edges to distinct
    existing nodes, picked proportionally to current degree. Edge count is
    exactly C(m, 2) + (n - m) * m.
    """
    if not 1 <= m < n:
        raise ValueError(f"need 1 <= m < n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    edges: list[tuple[int, int]] = [(i, j) for i in range(m) for j in range(i + 1, m)]
    # one entry per degree unit; uniform picks from it give degree-proportional targets
    repeated: list[int] = [i for i in range(m) for _ in range(m - 1)]
    for v in range(m, n):
        if repeated:
            targets: set[int] = set()
            while len(targets) < m:
                targets.add(repeated[int(rng.integers(len(repeated)))])
        else:
            targets = {int(rng.integers(v))}  # m == 1 bootstrap: no degree mass yet
        for t in sorted(targets):
            edges.append((t, v))
            repeated.append(t)
            repeated.append(v)
    return Topology(n, tuple(edges))


# ---------------------------------------------------------------------------
# edge-list and DOT I/O

def save_edge_list(topology: Topology) -> str:
    """Canonical text form: '# nodes N' header, then sorted 'u v' lines."""
    lines = [f"# nodes {topology.node_count}"]
    lines.extend(f"{u} {v}" for u, v in topology.edges)
    return "\n".join(lines) + "\n"


def load_edge_list(text: str) -> Topology:
    edges = []
    declared_nodes = None
    max_id = -1
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "nodes":
                declared_nodes = int(parts[1])
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'u v', got {raw!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise ValueError(f"line {lineno}: non-integer node id in {raw!r}") from None
        if u == v:
            raise ValueError(f"line {lineno}: self-loop on node {u}")
        if u < 0 or v < 0:
            raise ValueError(f"line {lineno}: negative node id in {raw!r}")
        edges.append((u, v))
        max_id = max(max_id, u, v)
    n = declared_nodes if declared_nodes is not None else max_id + 1
    if n < 1:
        raise ValueError("edge list defines no nodes")
    return Topology(n, tuple(edges))


def to_dot(topology: Topology, thresholds: "DegreeThresholds | None" = None) -> str:
    """GraphViz export with nodes labeled by degree class."""
    classes = classify_nodes(topology, thresholds or DegreeThresholds())
    lines = ["graph topology {"]
    for node in range(topology.node_count):
        lines.append(f'  {node} [label="{node}:{classes[node].value}"];')
    for u, v in topology.edges:
        lines.append(f"  {u} -- {v};")
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# metrics

@dataclass
class DegreeStats:
    degrees: np.ndarray
    pdf: np.ndarray  # pdf[d] = fraction of nodes with degree d
    cdf: np.ndarray
    average: float


def degree_stats(topology: Topology) -> DegreeStats:
    degrees = topology.degrees
    counts = np.bincount(degrees, minlength=int(degrees.max(initial=0)) + 1)
    pdf = counts / topology.node_count
    return DegreeStats(degrees=degrees, pdf=pdf, cdf=np.cumsum(pdf), average=topology.average_degree)


@dataclass
class PathStats:
    average_shortest_path: float
    diameter: int
    disconnected: bool
    lcc_size: int


def shortest_path_stats(topology: Topology) -> PathStats:
    """Unweighted average shortest path and diameter.

    Disconnected graphs are measured over the largest connected component
    and flagged; the average is over ordered pairs of distinct reachable
    nodes.
    """
    indptr, indices = topology.csr
    labels = kernels.component_labels(indptr, indices)
    sizes = np.bincount(labels)
    disconnected = sizes.shape[0] > 1
    lcc_size = int(sizes.max())
    total, pairs, diameter = kernels.all_pairs_stats(indptr, indices)
    avg = total / pairs if pairs else 0.0
    return PathStats(avg, int(diameter), disconnected, lcc_size)


@dataclass
class HopProfile:
    origin: int
    coverage: tuple[float, ...]  # coverage[h] = reachable fraction within <= h hops

    def hops_to_fraction(self, q: float) -> int:
        for h, c in enumerate(self.coverage):
            if c >= q - 1e-12:
                return h
        return len(self.coverage)


def broadcast_hops(topology: Topology, origin: int) -> HopProfile:
    """Cumulative fraction of reachable nodes (origin excluded) per BFS hop."""
    if not 0 <= origin < topology.node_count:
        raise ValueError(f"unknown origin {origin}")
    indptr, indices = topology.csr
    dist = kernels.bfs_distances(indptr, indices, origin)
    reach = dist[dist > 0]
    if reach.size == 0:
        return HopProfile(origin, (0.0,))
    max_hop = int(reach.max())
    layer = np.bincount(reach, minlength=max_hop + 1)
    coverage = np.cumsum(layer) / reach.size
    coverage[0] = 0.0
    return HopProfile(origin, tuple(float(c) for c in coverage))


class DegreeClass(Enum):
    LOW = "low"
    ORDINARY = "ordinary"
    SUPER = "super"


@dataclass(frozen=True)
class DegreeThresholds:
    # Geth-default peer limits: ~16 outbound, 50 total
    low_max: int = 16
    ordinary_max: int = 50

    def __post_init__(self):
        if not 0 < self.low_max < self.ordinary_max:
            raise ValueError("need 0 < low_max < ordinary_max")

    def classify(self, degree: int) -> DegreeClass:
        if degree <= self.low_max:
            return DegreeClass.LOW
        if degree <= self.ordinary_max:
            return DegreeClass.ORDINARY
        return DegreeClass.SUPER


def classify_nodes(
    topology: Topology, thresholds: DegreeThresholds | None = None
) -> dict[int, DegreeClass]:
    thresholds = thresholds or DegreeThresholds()
    degrees = topology.degrees
    return {node: thresholds.classify(int(degrees[node])) for node in range(topology.node_count)}


@dataclass
class LccResult:
    nodes: frozenset[int]
    relative_size: float


def largest_connected_component(topology: Topology) -> LccResult:
    indptr, indices = topology.csr
    labels = kernels.component_labels(indptr, indices)
    sizes = np.bincount(labels)
    best = int(sizes.argmax())
    members = frozenset(np.flatnonzero(labels == best).tolist())
    return LccResult(members, len(members) / topology.node_count)


def metrics_dict(topology: Topology) -> dict:
    """Summary document: n, edges, avg_degree, avg_shortest_path, diameter."""
    stats = shortest_path_stats(topology)
    return {
        "n": topology.node_count,
        "edges": topology.edge_count,
        "avg_degree": round(topology.average_degree, 6),
        "avg_shortest_path": round(stats.average_shortest_path, 6),
        "diameter": stats.diameter,
        "disconnected": stats.disconnected,
    }


def metrics_json(topology: Topology) -> str:
    return json.dumps(metrics_dict(topology), sort_keys=True, indent=2) + "\n"


def subgraph(topology: Topology, keep: set[int]) -> Topology:
    """Induced subgraph relabeled to dense ids (ascending original id order)."""
    kept = sorted(keep)
    if not kept:
        raise ValueError("cannot build an empty subgraph")
    relabel = {old: new for new, old in enumerate(kept)}
    edges = tuple(
        (relabel[u], relabel[v]) for u, v in topology.edges if u in keep and v in keep
    )
    attrs = {
        relabel[n]: topology.node_attrs[n] for n in topology.node_attrs if n in keep
    }
    return Topology(len(kept), edges, attrs)
