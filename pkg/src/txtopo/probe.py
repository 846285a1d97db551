"""Marked-transaction link inference and the multi-probe measurement stack.

A measurement round for links (A_k, B_k), k = 1..K, issued from one fresh
account with base nonce n and base price b_t:

  step 1 (t0):        tx_a[k] -> A_k, tx_b[k] -> B_k, and tx_c[k] -> every
                      probe-linked node except A_k and B_k, all with nonce
                      n+k, so they sit in queues as future transactions.
  step 2 (t0 + t_w):  tx_m (nonce n, price b_t) -> every probe-linked node
                      that is not a target of any pair in the round.

tx_m triggers promotion; tx_b[k] can replace tx_a[k] (price ratio alpha)
but cannot displace tx_c[k] (ratio alpha/2), so it escapes B_k only across
a real A_k-B_k link and the probe receives it iff the link exists.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction

from .seeding import derive_seed
from .simnet import NodeStatus, Sim
from .txpool import Transaction, as_fraction, replacement_allowed, tx_with_effective_price

MARKER_WORD = "DEthna"

FAIL_QUEUE_FULL = "QueueFull"
FAIL_UNSYNCED = "Unsynced"
FAIL_C_PRIME_LEAK = "CPrimeLeak"
FAIL_TIMEOUT = "Timeout"

_POOL_ACCEPT_OUTCOMES = ("pending", "future", "replaced")


def _scaled_price(b_t: int, alpha: Fraction, half: bool) -> int:
    factor = 1 + (alpha / 2 if half else alpha)
    value = b_t * factor
    if value.denominator != 1:
        raise ValueError(
            f"b_t={b_t} does not give integer marked prices for alpha={alpha}; "
            f"choose b_t divisible by {2 * alpha.denominator}"
        )
    return int(value)


@dataclass(frozen=True)
class MarkedTxSet:
    """The 3K+1 transactions of one account-round."""

    account: int
    base_nonce: int
    b_t: int
    alpha: Fraction
    pairs: tuple[tuple[int, int], ...]
    tx_m: Transaction
    tx_a: tuple[Transaction, ...]
    tx_b: tuple[Transaction, ...]
    tx_c: tuple[Transaction, ...]

    @property
    def link_count(self) -> int:
        return len(self.pairs)

    @property
    def transaction_count(self) -> int:
        return 1 + 3 * len(self.pairs)

    def all_transactions(self) -> tuple[Transaction, ...]:
        return (self.tx_m, *self.tx_a, *self.tx_b, *self.tx_c)


def plan_marked_txs(
    account: int,
    nonce: int,
    b_t: int,
    alpha,
    pairs: list[tuple[int, int]],
    max_pending: int = 16,
) -> MarkedTxSet:
    """Build the marked-transaction set for up to max_pending - 1 links."""
    frac = as_fraction(alpha)
    if b_t <= 0:
        raise ValueError(f"b_t must be > 0, got {b_t}")
    k = len(pairs)
    if not 1 <= k <= max_pending - 1:
        raise ValueError(
            f"{k} links per round exceeds the {max_pending}-pending-per-account "
            f"limit (max {max_pending - 1})"
        )
    norm = []
    for a, b in pairs:
        if a == b:
            raise ValueError(f"degenerate pair ({a}, {b})")
        norm.append((a, b))
    if len({p for ab in norm for p in ab}) != 2 * k:
        raise ValueError("pairs within one round must use distinct nodes")
    price_b = _scaled_price(b_t, frac, half=False)
    price_c = _scaled_price(b_t, frac, half=True)
    all_targets = ",".join(f"{a}-{b}" for a, b in norm)
    tx_m = tx_with_effective_price(account, nonce, b_t, marker=f"{MARKER_WORD} m {all_targets}")
    tx_a, tx_b, tx_c = [], [], []
    for i, (a, b) in enumerate(norm, start=1):
        tag = f"{MARKER_WORD} {a}-{b}"
        tx_a.append(tx_with_effective_price(account, nonce + i, b_t, marker=f"{tag} a"))
        tx_b.append(tx_with_effective_price(account, nonce + i, price_b, marker=f"{tag} b"))
        tx_c.append(tx_with_effective_price(account, nonce + i, price_c, marker=f"{tag} c"))
    return MarkedTxSet(
        account=account,
        base_nonce=nonce,
        b_t=b_t,
        alpha=frac,
        pairs=tuple(norm),
        tx_m=tx_m,
        tx_a=tuple(tx_a),
        tx_b=tuple(tx_b),
        tx_c=tuple(tx_c),
    )


def price_ratio_facts(b_t: int, alpha) -> dict[str, bool]:
    """Executable statements of the three price properties the protocol
    relies on (replace-up by alpha allowed, half-step denied both ways)."""
    frac = as_fraction(alpha)
    price_b = _scaled_price(b_t, frac, half=False)
    price_c = _scaled_price(b_t, frac, half=True)
    return {
        "b_replaces_a": replacement_allowed(b_t, price_b, frac),
        "c_replaces_a": replacement_allowed(b_t, price_c, frac),
        "b_replaces_c": replacement_allowed(price_c, price_b, frac),
    }


@dataclass
class InferenceTask:
    pairs: list[tuple[int, int]]
    t_w_ms: float = 3_500.0
    assigned_probe: int = 0

    def __post_init__(self):
        targets = [n for ab in self.pairs for n in ab]
        if len(set(targets)) != len(targets):
            raise ValueError("task pairs must use distinct nodes")


@dataclass
class PairDiagnostics:
    tx_b_returned: bool
    return_path_hint: tuple[int, ...] = ()  # senders the probe received tx_b from
    failure_class: str | None = None
    leak_nodes: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "tx_b_returned": self.tx_b_returned,
            "return_path_hint": list(self.return_path_hint),
            "failure_class": self.failure_class,
            "leak_nodes": list(self.leak_nodes),
        }


@dataclass
class MeasurementReport:
    measured_pairs: set[tuple[int, int]] = field(default_factory=set)
    inferred_edges: set[tuple[int, int]] = field(default_factory=set)
    diagnostics: dict[tuple[int, int], PairDiagnostics] = field(default_factory=dict)
    tx_counts: dict[str, int] = field(
        default_factory=lambda: {"tx_m": 0, "tx_a": 0, "tx_b": 0, "tx_c": 0}
    )
    unmeasurable: list[tuple[tuple[int, int], str]] = field(default_factory=list)

    def merge_round(self, plan: MarkedTxSet, results: dict[tuple[int, int], PairDiagnostics]) -> None:
        self.tx_counts["tx_m"] += 1
        self.tx_counts["tx_a"] += plan.link_count
        self.tx_counts["tx_b"] += plan.link_count
        self.tx_counts["tx_c"] += plan.link_count
        for pair, diag in results.items():
            key = _norm_pair(pair)
            self.measured_pairs.add(key)
            self.diagnostics[key] = diag
            if diag.tx_b_returned:
                self.inferred_edges.add(key)

    @property
    def transactions_issued(self) -> int:
        return sum(self.tx_counts.values())

    def to_dict(self) -> dict:
        return {
            "measured_pairs": sorted(self.measured_pairs),
            "inferred_edges": sorted(self.inferred_edges),
            "diagnostics": {
                f"{a}-{b}": diag.to_dict() for (a, b), diag in sorted(self.diagnostics.items())
            },
            "tx_counts": dict(sorted(self.tx_counts.items())),
            "transactions_issued": self.transactions_issued,
            "unmeasurable": [
                {"pair": list(pair), "reason": reason} for pair, reason in self.unmeasurable
            ],
        }


def _norm_pair(pair: tuple[int, int]) -> tuple[int, int]:
    a, b = pair
    return (a, b) if a < b else (b, a)


@dataclass
class _RoundHandle:
    plan: MarkedTxSet
    endpoint: int
    t0: float
    t_release: float
    inbox_start: int
    inject_outcome_ids: dict[int, tuple[str, str]]  # k -> (tx_a id, tx_b id)
    target_status: dict[int, bool]  # node -> was Synced at schedule time


def _monitor_horizon(sim: Sim, t_w_ms: float) -> float:
    # upper-bounds the longest legal return path: flood + B->A hop + hop to probe
    return t_w_ms + (sim.topology.node_count + 3) * sim.latency.max_ms


def schedule_round(
    sim: Sim, probe_links: set[int], task: InferenceTask, plan: MarkedTxSet, endpoint: int
) -> _RoundHandle:
    targets = {n for ab in plan.pairs for n in ab}
    missing = targets - set(probe_links)
    if missing:
        raise ValueError(f"probe lacks links to targets {sorted(missing)}")
    tx_m_receivers = sorted(set(probe_links) - targets)
    if not tx_m_receivers:
        raise ValueError("no non-target probe-linked nodes left to receive tx_m")
    t0 = sim.clock
    t_release = t0 + task.t_w_ms
    ep = sim.endpoints[endpoint]
    sim.watch(tx.tx_id for tx in plan.all_transactions())
    for k, (a, b) in enumerate(plan.pairs):
        sim.inject(a, plan.tx_a[k], t0, src=endpoint)
        sim.inject(b, plan.tx_b[k], t0, src=endpoint)
        for c in sorted(set(probe_links) - {a, b}):
            sim.inject(c, plan.tx_c[k], t0, src=endpoint)
    for c in tx_m_receivers:
        sim.inject(c, plan.tx_m, t_release, src=endpoint)
    return _RoundHandle(
        plan=plan,
        endpoint=endpoint,
        t0=t0,
        t_release=t_release,
        inbox_start=len(ep.inbox),
        inject_outcome_ids={
            k: (plan.tx_a[k].tx_id, plan.tx_b[k].tx_id) for k in range(plan.link_count)
        },
        target_status={
            n: sim.nodes[n].status is NodeStatus.SYNCED for n in targets
        },
    )


def collect_round(sim: Sim, handle: _RoundHandle) -> dict[tuple[int, int], PairDiagnostics]:
    plan = handle.plan
    inbox = sim.endpoints[handle.endpoint].inbox[handle.inbox_start :]
    round_tx_ids = {tx.tx_id for tx in plan.all_transactions()}
    # nodes heard from during this round; a healthy target echoes the tx_m
    # gossip to the probe even when the measured link does not exist
    active_nodes = {frm for _, frm, tx in inbox if tx.tx_id in round_tx_ids}
    results: dict[tuple[int, int], PairDiagnostics] = {}
    for k, pair in enumerate(plan.pairs):
        a_node, b_node = pair
        b_id = plan.tx_b[k].tx_id
        senders = tuple(sorted({frm for _, frm, tx in inbox if tx.tx_id == b_id}))
        returned = bool(senders)
        leak_nodes = tuple(
            sorted(
                {
                    node
                    for _, node, outcome in sim.watched_records(b_id)
                    if outcome in _POOL_ACCEPT_OUTCOMES and node not in (a_node, b_node)
                }
            )
        )
        failure = None
        aid, bid = handle.inject_outcome_ids[k]
        dropped = any(
            outcome == "queue-full"
            for wid in (aid, bid)
            for _, node, outcome in sim.watched_records(wid)
            if node in (a_node, b_node)
        )
        if dropped:
            failure = FAIL_QUEUE_FULL
        elif not (handle.target_status[a_node] and handle.target_status[b_node]):
            failure = FAIL_UNSYNCED
        elif leak_nodes:
            failure = FAIL_C_PRIME_LEAK
        elif not returned and (a_node not in active_nodes or b_node not in active_nodes):
            failure = FAIL_TIMEOUT
        results[pair] = PairDiagnostics(
            tx_b_returned=returned,
            return_path_hint=senders,
            failure_class=failure,
            leak_nodes=leak_nodes,
        )
    return results


def execute_inference(
    sim: Sim,
    probe_links: set[int],
    task: InferenceTask,
    plan: MarkedTxSet,
    endpoint: int | None = None,
) -> dict[tuple[int, int], PairDiagnostics]:
    """Run one account-round to completion and classify each pair."""
    if endpoint is None:
        endpoint = sim.register_endpoint(probe_links)
    handle = schedule_round(sim, probe_links, task, plan, endpoint)
    sim.run_until(handle.t0 + _monitor_horizon(sim, task.t_w_ms))
    return collect_round(sim, handle)


def identify_synchronized(
    sim: Sim, probe_links: set[int], observation_window_ms: float, account_base: int = 10**9
) -> set[int]:
    """Nodes that forwarded at least one verifiable (pending) transaction to
    the probe during the window. Beacon transactions injected at each linked
    node stand in for organic traffic; Unsynced and Offline nodes never
    forward, so they are never identified."""
    if observation_window_ms <= 0:
        raise ValueError("observation window must be > 0")
    endpoint = sim.register_endpoint(probe_links)
    ep = sim.endpoints[endpoint]
    start = len(ep.inbox)
    t0 = sim.clock
    beacon_ids = set()
    for i, node in enumerate(sorted(probe_links)):
        beacon = tx_with_effective_price(
            account_base + i, 0, 1_000, marker=f"{MARKER_WORD} beacon {node}"
        )
        beacon_ids.add(beacon.tx_id)
        sim.inject(node, beacon, t0, src=endpoint)
    sim.run_until(t0 + observation_window_ms)
    return {
        frm
        for _, frm, tx in ep.inbox[start:]
        if tx.tx_id in beacon_ids and frm in probe_links
    }


# ---------------------------------------------------------------------------
# multi-probe coordination

@dataclass
class Performer:
    endpoint_id: int
    links: frozenset[int]
    controller_link: str = "direct"  # direct | relayed | none


@dataclass
class ProbeSwarm:
    performers: list[Performer]
    completed_pairs: set[tuple[int, int]] = field(default_factory=set)

    @property
    def coverage(self) -> frozenset[int]:
        cov: set[int] = set()
        for p in self.reachable_performers():
            cov |= p.links
        return frozenset(cov)

    def reachable_performers(self) -> list[Performer]:
        # a performer cut off from the controller (no direct or relayed path)
        # cannot receive tasks; relays are pass-through otherwise
        return [p for p in self.performers if p.controller_link != "none"]


def build_swarm(
    sim: Sim, n_performers: int, visibility: float, seed: int
) -> ProbeSwarm:
    """Performers with seeded random visibility fractions of the node set."""
    if n_performers < 1:
        raise ValueError("need at least one performer")
    if not 0 < visibility <= 1:
        raise ValueError("visibility must be in (0, 1]")
    n = sim.topology.node_count
    k = max(1, round(visibility * n))
    performers = []
    for i in range(n_performers):
        rng = random.Random(derive_seed(seed, f"visibility:{i}"))
        links = frozenset(rng.sample(range(n), k)) if k < n else frozenset(range(n))
        performers.append(Performer(sim.register_endpoint(set(links)), links))
    return ProbeSwarm(performers)


def partition_tasks(
    candidate_pairs,
    performers: list[Performer],
    batch_size: int = 15,
    t_w_ms: float = 3_500.0,
) -> tuple[list[InferenceTask], list[tuple[tuple[int, int], str]]]:
    """Deduplicate pairs, assign each to one covering performer, and batch
    per performer into rounds of up to batch_size pairs with all-distinct
    endpoints and at least one spare linked node to carry tx_m."""
    if not performers:
        raise ValueError("performers must be nonempty")
    seen: set[tuple[int, int]] = set()
    ordered: list[tuple[int, int]] = []
    for pair in candidate_pairs:
        key = _norm_pair(tuple(pair))
        if key[0] == key[1]:
            raise ValueError(f"degenerate pair {key}")
        if key not in seen:
            seen.add(key)
            ordered.append(key)
    ordered.sort()

    assigned: dict[int, list[tuple[int, int]]] = {i: [] for i in range(len(performers))}
    unmeasurable: list[tuple[tuple[int, int], str]] = []
    load = [0] * len(performers)
    for pair in ordered:
        covering = [
            i
            for i, p in enumerate(performers)
            if p.controller_link != "none" and pair[0] in p.links and pair[1] in p.links
        ]
        if not covering:
            unmeasurable.append((pair, "no covering performer"))
            continue
        best = min(covering, key=lambda i: (load[i], i))
        assigned[best].append(pair)
        load[best] += 1

    tasks: list[InferenceTask] = []
    for i, pairs in assigned.items():
        pending = list(pairs)
        links = performers[i].links
        while pending:
            batch: list[tuple[int, int]] = []
            used: set[int] = set()
            rest: list[tuple[int, int]] = []
            for pair in pending:
                a, b = pair
                would_use = used | {a, b}
                if (
                    len(batch) < batch_size
                    and a not in used
                    and b not in used
                    and len(links - would_use) >= 1
                ):
                    batch.append(pair)
                    used = would_use
                else:
                    rest.append(pair)
            if not batch:  # cannot place even one pair (no spare tx_m carrier)
                for pair in rest:
                    unmeasurable.append((pair, "no spare probe-linked node for tx_m"))
                break
            tasks.append(InferenceTask(pairs=batch, t_w_ms=t_w_ms, assigned_probe=i))
            pending = rest
    return tasks, unmeasurable


@dataclass
class ProbeRunConfig:
    pair_strategy: str = "all-pairs"  # all-pairs | neighbor-candidates
    k_max: int = 15
    t_w_ms: float = 3_500.0
    accounts_parallel: int = 11  # ~160 parallel links / 15 links per account
    b_t: int = 2_000
    account_base: int = 1_000_000
    check_sync: bool = False
    sync_window_ms: float = 2_000.0


def enumerate_candidates(sim: Sim, swarm: ProbeSwarm, config: ProbeRunConfig) -> list[tuple[int, int]]:
    coverage = sorted(swarm.coverage)
    if config.pair_strategy == "all-pairs":
        return [(coverage[i], coverage[j]) for i in range(len(coverage)) for j in range(i + 1, len(coverage))]
    if config.pair_strategy == "neighbor-candidates":
        return _neighbor_candidates(sim, swarm, config)
    raise ValueError(f"unknown pair strategy {config.pair_strategy!r}")


def _neighbor_candidates(sim: Sim, swarm: ProbeSwarm, config: ProbeRunConfig) -> list[tuple[int, int]]:
    """Pre-filter heuristic: flood a few beacons and propose pairs whose
    forwarding arrivals at the probe are within one link latency of each
    other. Cheap, but offers no recall guarantee."""
    performer = swarm.reachable_performers()[0]
    endpoint = performer.endpoint_id
    ep = sim.endpoints[endpoint]
    window = _monitor_horizon(sim, 0.0)
    candidates: set[tuple[int, int]] = set()
    for i, origin in enumerate(sorted(performer.links)[:3]):
        start = len(ep.inbox)
        beacon = tx_with_effective_price(
            config.account_base - 1 - i, 0, 1_000, marker=f"{MARKER_WORD} scout {origin}"
        )
        t0 = sim.clock
        sim.inject(origin, beacon, t0, src=endpoint)
        sim.run_until(t0 + window)
        arrivals = sorted(
            (t, frm) for t, frm, tx in ep.inbox[start:] if tx.tx_id == beacon.tx_id
        )
        for x in range(len(arrivals)):
            for y in range(x + 1, len(arrivals)):
                if arrivals[y][0] - arrivals[x][0] <= sim.latency.max_ms:
                    candidates.add(_norm_pair((arrivals[x][1], arrivals[y][1])))
    return sorted(candidates)


def discover_topology(sim: Sim, swarm: ProbeSwarm, config: ProbeRunConfig) -> MeasurementReport:
    """Full measurement sweep: enumerate candidate pairs, partition them into
    account-rounds across performers, and execute rounds in waves of up to
    accounts_parallel concurrent accounts on the simulated clock."""
    report = MeasurementReport()
    candidates = enumerate_candidates(sim, swarm, config)

    if config.check_sync:
        synced: set[int] = set()
        for performer in swarm.reachable_performers():
            synced |= identify_synchronized(sim, set(performer.links), config.sync_window_ms)
        kept = []
        for pair in candidates:
            if pair[0] in synced and pair[1] in synced:
                kept.append(pair)
            else:
                report.unmeasurable.append((_norm_pair(pair), "endpoint not synchronized"))
        candidates = kept

    performers = swarm.performers
    tasks, unmeasurable = partition_tasks(
        candidates, performers, batch_size=config.k_max, t_w_ms=config.t_w_ms
    )
    report.unmeasurable.extend(unmeasurable)

    account = config.account_base
    wave_size = max(1, config.accounts_parallel)
    for w in range(0, len(tasks), wave_size):
        wave = tasks[w : w + wave_size]
        handles = []
        horizon = 0.0
        for task in wave:
            performer = performers[task.assigned_probe]
            plan = plan_marked_txs(account, 0, config.b_t, sim.pool_config.alpha, task.pairs)
            account += 1
            handles.append(
                schedule_round(sim, set(performer.links), task, plan, performer.endpoint_id)
            )
            horizon = max(horizon, _monitor_horizon(sim, task.t_w_ms))
        sim.run_until(sim.clock + horizon)
        for handle in handles:
            report.merge_round(handle.plan, collect_round(sim, handle))
            swarm.completed_pairs.update(_norm_pair(p) for p in handle.plan.pairs)
    return report
