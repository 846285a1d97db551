"""Scoring of measurement reports and the network-characteristics study:
precision/recall/F1, degree-class hop summaries, and robustness curves
under random and targeted node-removal attacks.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from . import kernels
from .topology import (
    DegreeClass,
    DegreeThresholds,
    Topology,
    broadcast_hops,
    classify_nodes,
    subgraph,
)


def _norm_edges(edges) -> set[tuple[int, int]]:
    out = set()
    for a, b in edges:
        out.add((a, b) if a < b else (b, a))
    return out


@dataclass(frozen=True)
class Score:
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


def score(inferred, truth, measured) -> Score:
    """Precision/recall over the measured pair set.

    Zero-division policy (test-pinned): an empty inferred set claims nothing,
    so precision is 1.0; recall is 1.0 only when there was nothing to find.
    """
    inferred_set = _norm_edges(inferred)
    measured_set = _norm_edges(measured)
    if not inferred_set <= measured_set:
        raise ValueError("inferred edges must be a subset of measured pairs")
    relevant = _norm_edges(truth) & measured_set
    hits = len(inferred_set & relevant)
    precision = hits / len(inferred_set) if inferred_set else 1.0
    recall = hits / len(relevant) if relevant else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return Score(precision, recall, f1)


# ---------------------------------------------------------------------------
# robustness

@dataclass
class AttackCurve:
    kind: str  # "random" | "targeted" | "targeted-adaptive"
    seed: int | None
    points: list[tuple[float, float]]  # (fraction_removed, relative_lcc)

    def auc(self) -> float:
        xs = [p[0] for p in self.points]
        ys = [p[1] for p in self.points]
        return float(np.trapezoid(ys, xs))

    def csv_rows(self) -> list[str]:
        seed = "" if self.seed is None else str(self.seed)
        return [f"{f},{lcc},{self.kind},{seed}" for f, lcc in self.points]


def curves_to_csv(curves: list[AttackCurve]) -> str:
    lines = ["fraction_removed,relative_lcc,kind,seed"]
    for curve in curves:
        lines.extend(curve.csv_rows())
    return "\n".join(lines) + "\n"


def _check_fractions(fractions) -> list[float]:
    fracs = list(fractions)
    if any(not 0 <= f < 1 for f in fracs):
        raise ValueError("fractions must lie in [0, 1)")
    if any(b <= a for a, b in zip(fracs, fracs[1:])):
        raise ValueError("fractions must be strictly increasing")
    if not fracs or fracs[0] != 0.0:
        fracs.insert(0, 0.0)
    return fracs


def _lcc_after_removal(topology: Topology, removed: set[int]) -> float:
    remaining = topology.node_count - len(removed)
    if remaining <= 0:
        return 0.0
    keep_edges = [
        (u, v) for u, v in topology.edges if u not in removed and v not in removed
    ]
    indptr, indices = kernels.build_csr(
        topology.node_count, np.array(keep_edges, dtype=np.int64).reshape(-1, 2)
    )
    labels = kernels.component_labels(indptr, indices)
    keep_mask = np.ones(topology.node_count, dtype=bool)
    if removed:
        keep_mask[list(removed)] = False
    sizes = np.bincount(labels[keep_mask])
    return int(sizes.max()) / topology.node_count


def _removal_curve(topology: Topology, fractions, order: list[int], kind: str, seed: int | None) -> AttackCurve:
    n = topology.node_count
    points = []
    for f in _check_fractions(fractions):
        count = math.ceil(f * n)
        points.append((f, _lcc_after_removal(topology, set(order[:count]))))
    return AttackCurve(kind=kind, seed=seed, points=points)


def attack_random(topology: Topology, removal_fractions, seed: int) -> AttackCurve:
    """Cumulative removal of ceil(f*N) seeded-random nodes; relative LCC is
    measured against the original node count."""
    order = list(range(topology.node_count))
    random.Random(seed).shuffle(order)
    return _removal_curve(topology, removal_fractions, order, "random", seed)


def attack_targeted(topology: Topology, removal_fractions, adaptive: bool = False) -> AttackCurve:
    """Removal in descending degree order, ties broken by ascending node id.

    Default is a static ranking on original degrees; adaptive mode re-ranks
    on the shrinking graph after every removal.
    """
    n = topology.node_count
    if not adaptive:
        degrees = topology.degrees
        order = sorted(range(n), key=lambda v: (-int(degrees[v]), v))
        return _removal_curve(topology, removal_fractions, order, "targeted", None)

    adj = {v: set(topology.neighbors(v)) for v in range(n)}
    degrees = {v: len(adj[v]) for v in range(n)}
    order = []
    alive = set(range(n))
    for _ in range(n):
        v = min(alive, key=lambda u: (-degrees[u], u))
        order.append(v)
        alive.remove(v)
        for w in adj[v]:
            if w in alive:
                degrees[w] -= 1
                adj[w].discard(v)
    return _removal_curve(topology, removal_fractions, order, "targeted-adaptive", None)


def remove_low_degree(topology: Topology, low_max: int) -> Topology:
    """Single pass on original degrees: drop every node with degree <= low_max
    (and incident edges), relabeling survivors to dense ids."""
    if low_max < 0:
        raise ValueError("low_max must be >= 0")
    degrees = topology.degrees
    keep = {v for v in range(topology.node_count) if degrees[v] > low_max}
    if not keep:
        raise ValueError(f"no nodes with degree > {low_max} remain")
    return subgraph(topology, keep)


# ---------------------------------------------------------------------------
# broadcast-hop study

@dataclass
class ClassHopSummary:
    degree_class: DegreeClass
    sampled_origins: list[int]
    mean_coverage: tuple[float, ...]
    mean_hops_to_full: float
    empty: bool = False


def hops_by_class(
    topology: Topology,
    samples_per_class: int,
    seed: int,
    thresholds: DegreeThresholds | None = None,
) -> dict[DegreeClass, ClassHopSummary]:
    """Average broadcast-hop coverage curves over sampled origins per degree
    class; empty classes are flagged rather than skipped silently."""
    if samples_per_class < 1:
        raise ValueError("samples_per_class must be >= 1")
    classes = classify_nodes(topology, thresholds)
    members: dict[DegreeClass, list[int]] = {c: [] for c in DegreeClass}
    for node, cls in classes.items():
        members[cls].append(node)
    rng = random.Random(seed)
    out: dict[DegreeClass, ClassHopSummary] = {}
    for cls in DegreeClass:
        nodes = members[cls]
        if not nodes:
            out[cls] = ClassHopSummary(cls, [], (), float("nan"), empty=True)
            continue
        origins = sorted(rng.sample(nodes, min(samples_per_class, len(nodes))))
        profiles = [broadcast_hops(topology, origin) for origin in origins]
        width = max(len(p.coverage) for p in profiles)
        mean = np.zeros(width)
        for p in profiles:
            padded = np.array(p.coverage + (p.coverage[-1],) * (width - len(p.coverage)))
            mean += padded
        mean /= len(profiles)
        hops_full = float(np.mean([len(p.coverage) - 1 for p in profiles]))
        out[cls] = ClassHopSummary(
            cls, origins, tuple(float(x) for x in mean), hops_full
        )
    return out


def hops_to_csv(summaries: dict[DegreeClass, ClassHopSummary]) -> str:
    lines = ["class,hop,mean_coverage"]
    for cls in DegreeClass:
        summary = summaries.get(cls)
        if summary is None or summary.empty:
            continue
        for hop, cov in enumerate(summary.mean_coverage):
            lines.append(f"{cls.value},{hop},{cov}")
    return "\n".join(lines) + "\n"
