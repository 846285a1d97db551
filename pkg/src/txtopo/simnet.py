"""Deterministic discrete-event gossip network over a ground-truth topology.

Every node runs a TxPool; deliveries are scheduled per-link with a latency
model and processed in a total deterministic order (time, kind, from, to,
tx_id), so identical inputs always produce identical traces. Transactions
that become pending at a Synced node are forwarded to every neighbor that
has not seen them, and to any registered external monitoring endpoint that
is linked to the node and was not the transaction's own source. Unsynced
nodes accept but never forward; Offline nodes drop deliveries entirely.
"""
from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field
from enum import Enum

from .seeding import unit_float
from .topology import Topology
from .txpool import PoolConfig, Transaction, TxPool

# Event kinds in processing priority at equal times: status flips apply
# before deliveries so a node that goes Offline at t drops a delivery at t.
_RANK_STATUS = 0
_RANK_DELIVER = 1
_RANK_ACTION = 2

# Source marker for test injections that do not belong to any endpoint.
EXTERNAL_SOURCE = -(10**9)


class NodeStatus(Enum):
    SYNCED = "synced"
    UNSYNCED = "unsynced"
    OFFLINE = "offline"


@dataclass
class LatencyModel:
    """Per-delivery delay in simulated ms, sampled once per (link, tx).

    Draws are keyed by (run seed, unordered link, tx), so they are symmetric
    per link and independent of event processing order. Table entries use
    unordered (u, v) keys; `default_ms` covers pairs absent from the table
    (endpoint links in particular).
    """

    kind: str = "uniform"  # constant | uniform | table
    constant_ms: float = 50.0
    low_ms: float = 20.0
    high_ms: float = 120.0
    table: dict[tuple[int, int], float] = field(default_factory=dict)
    default_ms: float = 50.0

    def __post_init__(self):
        if self.kind not in ("constant", "uniform", "table"):
            raise ValueError(f"unknown latency kind {self.kind!r}")
        if self.kind == "constant" and self.constant_ms <= 0:
            raise ValueError("constant delay must be > 0")
        if self.kind == "uniform" and not 0 < self.low_ms <= self.high_ms:
            raise ValueError("need 0 < low_ms <= high_ms")
        if self.kind == "table":
            normalized = {}
            for (u, v), ms in self.table.items():
                if ms <= 0:
                    raise ValueError(f"non-positive delay for link ({u}, {v})")
                normalized[(u, v) if u < v else (v, u)] = float(ms)
            self.table = normalized
            if self.default_ms <= 0:
                raise ValueError("default_ms must be > 0")

    @property
    def max_ms(self) -> float:
        if self.kind == "constant":
            return self.constant_ms
        if self.kind == "uniform":
            return self.high_ms
        return max(self.table.values(), default=self.default_ms)

    def delay_ms(self, u: int, v: int, tx_key: int, run_seed: int) -> float:
        if self.kind == "constant":
            return self.constant_ms
        a, b = (u, v) if u < v else (v, u)
        if self.kind == "table":
            return self.table.get((a, b), self.default_ms)
        return self.low_ms + unit_float(run_seed, a, b, tx_key) * (self.high_ms - self.low_ms)

    def respects_triangle_inequality(self) -> bool:
        """Metric check over table entries (complete tables only)."""
        if self.kind != "table":
            return True
        nodes = sorted({x for pair in self.table for x in pair})
        get = lambda x, y: self.table.get((x, y) if x < y else (y, x), self.default_ms)
        for i in nodes:
            for j in nodes:
                if j == i:
                    continue
                for k in nodes:
                    if k in (i, j):
                        continue
                    if get(i, j) > get(i, k) + get(k, j) + 1e-9:
                        return False
        return True

    @classmethod
    def metric_table(
        cls, node_count: int, seed: int, low_ms: float = 20.0, high_ms: float = 120.0
    ) -> "LatencyModel":
        """Complete per-link table from a random planar embedding; satisfies
        the triangle inequality by construction."""
        rng = random.Random(seed)
        pts = [(rng.random(), rng.random()) for _ in range(node_count)]
        scale = (high_ms - low_ms) / (2**0.5)
        table = {}
        for i in range(node_count):
            for j in range(i + 1, node_count):
                d = ((pts[i][0] - pts[j][0]) ** 2 + (pts[i][1] - pts[j][1]) ** 2) ** 0.5
                table[(i, j)] = low_ms + d * scale
        return cls(kind="table", table=table, default_ms=low_ms)


@dataclass
class NodeState:
    status: NodeStatus
    pool: TxPool
    seen: set[str] = field(default_factory=set)
    received_from: dict[str, int] = field(default_factory=dict)


@dataclass
class Endpoint:
    endpoint_id: int  # negative, disjoint from node ids
    links: frozenset[int]
    inbox: list[tuple[float, int, Transaction]] = field(default_factory=list)


class Sim:
    """Event-driven network; single-threaded by contract."""

    def __init__(
        self,
        topology: Topology,
        latency_model: LatencyModel,
        pool_config: PoolConfig,
        base_fee: int,
        seed: int,
        keep_trace: bool = True,
    ):
        self.topology = topology
        self.latency = latency_model
        self.pool_config = pool_config
        self.base_fee = base_fee
        self.seed = seed
        self.rng = random.Random(seed)
        self.clock = 0.0
        self.keep_trace = keep_trace
        self.trace: list[tuple[float, int, int, str, str]] = []
        self.nodes = {
            nid: NodeState(
                status=NodeStatus.SYNCED
                if topology.attrs(nid).initial_sync
                else NodeStatus.UNSYNCED,
                pool=TxPool(pool_config),
            )
            for nid in range(topology.node_count)
        }
        self.endpoints: dict[int, Endpoint] = {}
        self._endpoint_by_links: dict[frozenset[int], int] = {}
        self._heap: list = []
        self._seq = 0
        self._watched: dict[str, list[tuple[float, int, str]]] = {}
        # every transaction enters via inject(); keep fields for trace replay
        self.tx_registry: dict[str, Transaction] = {}

    # -- configuration -----------------------------------------------------

    def register_endpoint(self, links: set[int]) -> int:
        """External monitoring endpoint with direct links into the network."""
        for n in links:
            if n not in self.nodes:
                raise ValueError(f"endpoint link to unknown node {n}")
        key = frozenset(links)
        if key in self._endpoint_by_links:
            return self._endpoint_by_links[key]
        endpoint_id = -(len(self.endpoints) + 1)
        self.endpoints[endpoint_id] = Endpoint(endpoint_id, key)
        self._endpoint_by_links[key] = endpoint_id
        return endpoint_id

    def watch(self, tx_ids) -> None:
        """Record pool outcomes for these tx ids at every node (cheap tap
        used instead of a full trace on large runs)."""
        for tx_id in tx_ids:
            self._watched.setdefault(tx_id, [])

    def watched_records(self, tx_id: str) -> list[tuple[float, int, str]]:
        return self._watched.get(tx_id, [])

    def seed_account_nonce(self, account: int, next_nonce: int) -> None:
        """Chain state is global: set the account's nonce at every node."""
        for state in self.nodes.values():
            state.pool.seed_next_nonce(account, next_nonce)

    # -- scheduling ---------------------------------------------------------

    def _push(self, time: float, rank: int, a: int, b: int, key: str, payload) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (time, rank, a, b, key, self._seq, payload))

    def inject(self, at_node: int, tx: Transaction, time: float, src: int = EXTERNAL_SOURCE) -> None:
        """Direct delivery from an external endpoint, bypassing topology links."""
        if at_node not in self.nodes:
            raise ValueError(f"unknown node {at_node}")
        if time < self.clock:
            raise ValueError(f"cannot schedule at {time} before clock {self.clock}")
        self.tx_registry[tx.tx_id] = tx
        self._push(time, _RANK_DELIVER, src, at_node, tx.tx_id, tx)

    def set_status(self, node: int, status: NodeStatus, time: float) -> None:
        if node not in self.nodes:
            raise ValueError(f"unknown node {node}")
        if time < self.clock:
            raise ValueError(f"cannot schedule at {time} before clock {self.clock}")
        self._push(time, _RANK_STATUS, node, _status_rank(status), "", status)

    def mark(self, tag: str, time: float) -> None:
        """Trace-visible marker event (probe step boundaries etc.)."""
        self._push(time, _RANK_ACTION, 0, 0, tag, tag)

    # -- execution ----------------------------------------------------------

    def run_until(self, t_end: float) -> list[tuple[float, int, int, str, str]]:
        """Process all events with time <= t_end; returns the trace slice
        appended during this call (empty when tracing is off)."""
        if t_end < self.clock:
            raise ValueError(f"t_end {t_end} before clock {self.clock}")
        slice_start = len(self.trace)
        while self._heap and self._heap[0][0] <= t_end:
            time, rank, a, b, key, _, payload = heapq.heappop(self._heap)
            self.clock = time
            if rank == _RANK_DELIVER:
                self._process_delivery(time, a, b, payload)
            elif rank == _RANK_STATUS:
                self.nodes[a].status = payload
            elif self.keep_trace:  # marker event
                self.trace.append((time, 0, 0, key, "mark"))
        self.clock = t_end
        return self.trace[slice_start:]

    def run_to_quiescence(self) -> None:
        while self._heap:
            self.run_until(self._heap[0][0])

    def _process_delivery(self, time: float, frm: int, to: int, tx: Transaction) -> None:
        if to < 0:  # endpoint inbox arrival
            self.endpoints[to].inbox.append((time, frm, tx))
            if self.keep_trace:
                self.trace.append((time, frm, to, tx.tx_id, "probe"))
            return
        node = self.nodes[to]
        if node.status is NodeStatus.OFFLINE:
            outcome = "offline"
        elif tx.tx_id in node.seen:
            outcome = "dup"
        else:
            node.seen.add(tx.tx_id)
            node.received_from[tx.tx_id] = frm
            result = node.pool.submit(tx, self.base_fee)
            outcome = result.kind.value
            newly = node.pool.drain_forwardable()
            if newly and node.status is NodeStatus.SYNCED:
                for fwd in newly:
                    self._forward(time, to, fwd)
            if tx.tx_id in self._watched:
                self._watched[tx.tx_id].append((time, to, outcome))
        if self.keep_trace:
            self.trace.append((time, frm, to, tx.tx_id, outcome))

    def _forward(self, time: float, src: int, tx: Transaction) -> None:
        tx_id = tx.tx_id
        for v in self.topology.neighbors(src):
            if tx_id in self.nodes[v].seen:
                continue
            delay = self.latency.delay_ms(src, v, tx.tx_key, self.seed)
            self._push(time + delay, _RANK_DELIVER, src, v, tx_id, tx)
        origin = self.nodes[src].received_from.get(tx_id)
        for ep in self.endpoints.values():
            if src in ep.links and ep.endpoint_id != origin:
                delay = self.latency.delay_ms(src, ep.endpoint_id, tx.tx_key, self.seed)
                self._push(time + delay, _RANK_DELIVER, src, ep.endpoint_id, tx_id, tx)

    # -- exports ------------------------------------------------------------

    def trace_jsonl(self) -> str:
        lines = [
            json.dumps(
                {"t": t, "from": frm, "to": to, "tx_id": tx_id, "outcome": outcome},
                sort_keys=True,
            )
            for t, frm, to, tx_id, outcome in self.trace
        ]
        return "\n".join(lines) + ("\n" if lines else "")


def _status_rank(status: NodeStatus) -> int:
    return {"synced": 0, "unsynced": 1, "offline": 2}[status.value]


def build_sim(
    topology: Topology,
    latency_model: LatencyModel,
    pool_config: PoolConfig,
    base_fee: int,
    seed: int,
    keep_trace: bool = True,
) -> Sim:
    return Sim(topology, latency_model, pool_config, base_fee, seed, keep_trace)


def visible_set(sim: Sim, probe_links: set[int], targets: set[int] | frozenset[int] = frozenset()) -> dict:
    """Partition of non-target nodes into probe-connected C and invisible C'."""
    unknown = set(probe_links) - set(sim.nodes)
    if unknown:
        raise ValueError(f"probe links to unknown nodes {sorted(unknown)}")
    c = {n for n in probe_links if n not in targets}
    c_prime = {n for n in sim.nodes if n not in probe_links and n not in targets}
    return {"C": c, "C_prime": c_prime}
