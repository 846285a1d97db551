import hashlib
import json
import random

import pytest

from txtopo.kernels import bfs_distances
from txtopo.simnet import LatencyModel, NodeStatus, Sim, build_sim, visible_set
from txtopo.topology import NodeAttrs, Topology, gen_er
from txtopo.txpool import PoolConfig, tx_with_effective_price

BASE_FEE = 7


def make_sim(topo, seed=1, latency=None, pool=None, **kwargs):
    return Sim(topo, latency or LatencyModel(kind="constant", constant_ms=50), pool or PoolConfig(), BASE_FEE, seed, **kwargs)


def complete(n):
    return Topology(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def trace_hash(sim):
    return hashlib.sha256(json.dumps(sim.trace).encode()).hexdigest()


class TestBuild:
    def test_initial_state(self):
        sim = make_sim(complete(4))
        assert all(s.status is NodeStatus.SYNCED for s in sim.nodes.values())
        assert sim.clock == 0.0
        assert all(s.pool.pending_count() == 0 for s in sim.nodes.values())

    def test_initial_sync_attr(self):
        topo = Topology(4, ((0, 1), (1, 2), (2, 3)), {3: NodeAttrs(initial_sync=False)})
        sim = make_sim(topo)
        assert sim.nodes[3].status is NodeStatus.UNSYNCED

    def test_identical_inputs_identical_state(self):
        a = make_sim(complete(4), seed=9)
        b = make_sim(complete(4), seed=9)
        a.inject(0, tx_with_effective_price(1, 0, 100), 0.0)
        b.inject(0, tx_with_effective_price(1, 0, 100), 0.0)
        a.run_to_quiescence()
        b.run_to_quiescence()
        assert trace_hash(a) == trace_hash(b)

    def test_build_sim_helper(self):
        sim = build_sim(complete(3), LatencyModel(kind="constant", constant_ms=10), PoolConfig(), 5, 0)
        assert sim.base_fee == 5


class TestInject:
    def test_future_injection_stays_local(self):
        sim = make_sim(complete(4))
        sim.inject(0, tx_with_effective_price(1, 9, 100), 0.0)
        sim.run_to_quiescence()
        assert sim.nodes[0].pool.queued_count() == 1
        for other in (1, 2, 3):
            assert sim.nodes[other].pool.queued_count() == 0

    def test_pending_injection_floods(self):
        sim = make_sim(complete(4))
        t = tx_with_effective_price(1, 0, 100)
        sim.inject(0, t, 0.0)
        sim.run_to_quiescence()
        for node in sim.nodes.values():
            assert node.pool.contains(t)

    def test_offline_injection_dropped(self):
        sim = make_sim(complete(3))
        sim.set_status(1, NodeStatus.OFFLINE, 0.0)
        sim.run_until(0.5)
        t = tx_with_effective_price(1, 0, 100)
        sim.inject(1, t, 1.0)
        sim.run_to_quiescence()
        assert not sim.nodes[1].pool.contains(t)
        assert any(entry[4] == "offline" for entry in sim.trace)

    def test_unknown_node_rejected(self):
        sim = make_sim(complete(3))
        with pytest.raises(ValueError):
            sim.inject(7, tx_with_effective_price(1, 0, 100), 0.0)

    def test_past_time_rejected(self):
        sim = make_sim(complete(3))
        sim.run_until(100.0)
        with pytest.raises(ValueError):
            sim.inject(0, tx_with_effective_price(1, 0, 100), 50.0)


class TestRunUntil:
    def test_flood_bounded_by_diameter_times_latency(self):
        topo = gen_er(40, 0.15, 3)
        indptr, indices = topo.csr
        dist = bfs_distances(indptr, indices, 0)
        assert dist.min() >= 0, "test graph must be connected"
        max_latency = 50.0
        sim = make_sim(topo, latency=LatencyModel(kind="constant", constant_ms=max_latency))
        t = tx_with_effective_price(1, 0, 100)
        sim.inject(0, t, 0.0)
        sim.run_until(float(dist.max()) * max_latency)
        for node in sim.nodes.values():
            assert node.pool.contains(t)

    def test_future_never_crosses_a_link(self):
        sim = make_sim(gen_er(20, 0.3, 1))
        t = tx_with_effective_price(1, 5, 100)
        sim.inject(4, t, 0.0)
        sim.run_to_quiescence()
        deliveries = [e for e in sim.trace if e[3] == t.tx_id]
        assert len(deliveries) == 1  # the injection only

    def test_run_until_now_is_noop(self):
        sim = make_sim(complete(3))
        assert sim.run_until(sim.clock) == []

    def test_dedup_no_double_accept(self):
        sim = make_sim(complete(5))
        t = tx_with_effective_price(1, 0, 100)
        sim.inject(0, t, 0.0)
        sim.run_to_quiescence()
        for node_id in sim.nodes:
            accepts = [
                e for e in sim.trace if e[2] == node_id and e[3] == t.tx_id and e[4] == "pending"
            ]
            assert len(accepts) <= 1


class TestStatus:
    def test_offline_before_delivery_drops(self):
        sim = make_sim(Topology(2, ((0, 1),)))
        sim.set_status(1, NodeStatus.OFFLINE, 10.0)
        t = tx_with_effective_price(1, 0, 100)
        sim.inject(0, t, 0.0)  # forward reaches node 1 at t=50 > 10
        sim.run_to_quiescence()
        assert not sim.nodes[1].pool.contains(t)

    def test_unsynced_accepts_but_never_forwards(self):
        sim = make_sim(Topology(3, ((0, 1), (1, 2))))
        sim.set_status(1, NodeStatus.UNSYNCED, 0.0)
        sim.run_until(0.5)
        t = tx_with_effective_price(1, 0, 100)
        sim.inject(1, t, 1.0)
        sim.run_to_quiescence()
        assert sim.nodes[1].pool.contains(t)
        assert not sim.nodes[0].pool.contains(t)
        assert not sim.nodes[2].pool.contains(t)

    def test_offline_then_synced_missed_the_flood(self):
        sim = make_sim(complete(4))
        sim.set_status(3, NodeStatus.OFFLINE, 0.0)
        t = tx_with_effective_price(1, 0, 100)
        sim.inject(0, t, 1.0)
        sim.run_until(5_000.0)
        sim.set_status(3, NodeStatus.SYNCED, 5_000.0)
        sim.run_to_quiescence()
        assert not sim.nodes[3].pool.contains(t)

    def test_unsynced_to_synced_flushes_nothing(self):
        sim = make_sim(Topology(2, ((0, 1),)))
        sim.set_status(0, NodeStatus.UNSYNCED, 0.0)
        sim.run_until(0.5)
        t = tx_with_effective_price(1, 0, 100)
        sim.inject(0, t, 1.0)
        sim.run_until(10.0)
        sim.set_status(0, NodeStatus.SYNCED, 10.0)
        sim.run_to_quiescence()
        assert sim.nodes[0].pool.contains(t)  # pool content persists
        assert not sim.nodes[1].pool.contains(t)  # but no retroactive forwarding


class TestDeterminism:
    def test_same_time_insertion_order_shuffle(self):
        txs = [tx_with_effective_price(acct, 0, 100) for acct in range(6)]
        hashes = []
        for order_seed in range(3):
            sim = make_sim(complete(5), seed=42)
            shuffled = txs[:]
            random.Random(order_seed).shuffle(shuffled)
            for t in shuffled:
                sim.inject(t.account % 5, t, 0.0)
            sim.run_to_quiescence()
            hashes.append(trace_hash(sim))
        assert len(set(hashes)) == 1

    def test_trace_repeatable_with_uniform_latency(self):
        hashes = []
        for _ in range(2):
            sim = make_sim(gen_er(20, 0.3, 2), seed=77, latency=LatencyModel(kind="uniform", low_ms=20, high_ms=120))
            sim.inject(0, tx_with_effective_price(1, 0, 100), 0.0)
            sim.run_to_quiescence()
            hashes.append(trace_hash(sim))
        assert hashes[0] == hashes[1]


class TestLatencyModel:
    def test_uniform_symmetric_per_link_and_tx(self):
        lat = LatencyModel(kind="uniform", low_ms=20, high_ms=120)
        t = tx_with_effective_price(1, 0, 100)
        assert lat.delay_ms(3, 9, t.tx_key, 5) == lat.delay_ms(9, 3, t.tx_key, 5)
        other = tx_with_effective_price(1, 1, 100)
        assert lat.delay_ms(3, 9, t.tx_key, 5) != lat.delay_ms(3, 9, other.tx_key, 5)

    def test_uniform_range_respected(self):
        lat = LatencyModel(kind="uniform", low_ms=20, high_ms=120)
        for k in range(200):
            d = lat.delay_ms(0, 1, k, 9)
            assert 20 <= d < 120

    def test_table_lookup_and_default(self):
        lat = LatencyModel(kind="table", table={(0, 1): 10.0}, default_ms=99.0)
        assert lat.delay_ms(1, 0, 0, 0) == 10.0
        assert lat.delay_ms(2, 5, 0, 0) == 99.0

    def test_metric_table_respects_triangle(self):
        lat = LatencyModel.metric_table(12, seed=4, low_ms=20, high_ms=120)
        assert lat.respects_triangle_inequality()

    def test_violating_table_detected(self):
        lat = LatencyModel(
            kind="table", table={(0, 1): 500.0, (0, 2): 10.0, (1, 2): 10.0}, default_ms=10.0
        )
        assert not lat.respects_triangle_inequality()

    def test_invalid_models_rejected(self):
        with pytest.raises(ValueError):
            LatencyModel(kind="uniform", low_ms=0, high_ms=10)
        with pytest.raises(ValueError):
            LatencyModel(kind="constant", constant_ms=0)
        with pytest.raises(ValueError):
            LatencyModel(kind="warp")


class TestVisibleSet:
    def test_full_visibility(self):
        sim = make_sim(complete(5))
        parts = visible_set(sim, set(range(5)))
        assert parts["C_prime"] == set()

    def test_no_visibility(self):
        sim = make_sim(complete(5))
        parts = visible_set(sim, set())
        assert parts["C"] == set()
        assert parts["C_prime"] == set(range(5))

    def test_partial_with_targets_excluded(self):
        sim = make_sim(complete(100), seed=8)
        rng = random.Random(8)
        links = set(rng.sample(range(100), 80))
        targets = set(list(links)[:2])
        parts = visible_set(sim, links, targets)
        assert len(parts["C_prime"]) == 20
        assert len(parts["C"]) == 78
        assert not (parts["C"] | parts["C_prime"]) & targets

    def test_unknown_link_rejected(self):
        sim = make_sim(complete(3))
        with pytest.raises(ValueError):
            visible_set(sim, {5})


class TestTraceExport:
    def test_jsonl_round_trip(self):
        sim = make_sim(complete(3))
        sim.inject(0, tx_with_effective_price(1, 0, 100), 0.0)
        sim.run_to_quiescence()
        lines = sim.trace_jsonl().strip().splitlines()
        assert len(lines) == len(sim.trace)
        entry = json.loads(lines[0])
        assert set(entry) == {"t", "from", "to", "tx_id", "outcome"}
