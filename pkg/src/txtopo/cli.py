"""Experiment runner.

Subcommands:
  gen      write a generated graph as a canonical edge list
  measure  run a measurement campaign against a config, emit report + score
  analyze  graph metrics, attack curves, hop summaries, optional null models
  replay   re-apply a recorded delivery trace and verify outcomes

Exit codes: 0 success, 2 config error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analysis, topology
from .config import ExperimentConfig
from .probe import build_swarm, discover_topology
from .seeding import derive_seed
from .simnet import Sim
from .txpool import Transaction, TxPool

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _load_graph_arg(path: str) -> topology.Topology:
    return topology.load_edge_list(Path(path).read_text())


# ---------------------------------------------------------------------------
# gen

def cmd_gen(args) -> int:
    if args.model == "er":
        topo = topology.gen_er(args.n, args.p, args.seed)
    else:
        topo = topology.gen_ba(args.n, args.m, args.seed)
    text = topology.save_edge_list(topo)
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# measure

def build_experiment(cfg: ExperimentConfig) -> tuple[topology.Topology, Sim]:
    if cfg.graph.kind == "er":
        topo = topology.gen_er(cfg.graph.n, cfg.graph.p, derive_seed(cfg.master_seed, "graph"))
    elif cfg.graph.kind == "ba":
        topo = topology.gen_ba(cfg.graph.n, cfg.graph.m, derive_seed(cfg.master_seed, "graph"))
    else:
        topo = _load_graph_arg(cfg.graph.path)
    sim = Sim(
        topo,
        cfg.latency_model(),
        cfg.pool_config(),
        cfg.base_fee,
        derive_seed(cfg.master_seed, "sim"),
        keep_trace=cfg.keep_trace,
    )
    for event in cfg.churn:
        sim.set_status(event.node, event.node_status(), event.time_ms)
    return topo, sim


def cmd_measure(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.trace:
        cfg.keep_trace = True
    out = Path(args.out)
    topo, sim = build_experiment(cfg)
    swarm = build_swarm(
        sim, cfg.performers, cfg.visibility, derive_seed(cfg.master_seed, "swarm")
    )
    report = discover_topology(sim, swarm, cfg.probe_config())
    measured_truth = analysis.score(
        report.inferred_edges, topo.edges, report.measured_pairs
    )
    _write(out / "report.json", json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    _write(out / "score.json", json.dumps(measured_truth.to_dict(), sort_keys=True, indent=2) + "\n")
    inferred = topology.Topology(topo.node_count, tuple(report.inferred_edges))
    _write(out / "inferred.edges", topology.save_edge_list(inferred))
    _write(out / "config.json", cfg.to_json())
    if cfg.keep_trace:
        _write(out / "trace.jsonl", sim.trace_jsonl())
        txs = _transactions_in_trace(sim)
        _write(out / "txs.json", json.dumps(txs, sort_keys=True, indent=2) + "\n")
    sys.stdout.write(
        f"measured {len(report.measured_pairs)} pairs, inferred "
        f"{len(report.inferred_edges)} edges, precision {measured_truth.precision:.3f} "
        f"recall {measured_truth.recall:.3f}\n"
    )
    return EXIT_OK


def _transactions_in_trace(sim: Sim) -> dict:
    return {tx_id: _tx_fields(tx) for tx_id, tx in sorted(sim.tx_registry.items())}


def _tx_fields(tx: Transaction) -> dict:
    return {
        "account": tx.account,
        "nonce": tx.nonce,
        "gas_tip_cap": tx.gas_tip_cap,
        "gas_fee_cap": tx.gas_fee_cap,
        "gas_used": tx.gas_used,
        "marker": tx.marker,
    }


# ---------------------------------------------------------------------------
# analyze

def cmd_analyze(args) -> int:
    topo = _load_graph_arg(args.graph)
    out = Path(args.out)
    if args.remove_low_degree is not None:
        topo = analysis.remove_low_degree(topo, args.remove_low_degree)
        _write(out / "reduced.edges", topology.save_edge_list(topo))
    _write(out / "metrics.json", topology.metrics_json(topo))
    _write(out / "graph.dot", topology.to_dot(topo))

    fractions = [float(x) for x in args.fractions.split(",")] if args.fractions else []
    if args.attack in ("random", "both"):
        curves = [
            analysis.attack_random(topo, fractions, derive_seed(args.seed, f"attack:random:{i}"))
            for i in range(args.attack_seeds)
        ]
        _write(out / "attack_random.csv", analysis.curves_to_csv(curves))
    if args.attack in ("targeted", "both"):
        curves = [analysis.attack_targeted(topo, fractions, adaptive=args.adaptive)]
        _write(out / "attack_targeted.csv", analysis.curves_to_csv(curves))

    if args.hops:
        summaries = analysis.hops_by_class(
            topo, args.samples_per_class, derive_seed(args.seed, "hops")
        )
        _write(out / "hops.csv", analysis.hops_to_csv(summaries))

    if args.null:
        n = topo.node_count
        if args.null == "er":
            p = topo.average_degree / (n - 1) if n > 1 else 0.0
            null_topo = topology.gen_er(n, min(1.0, p), derive_seed(args.seed, "null:er"))
        else:
            m = max(1, round(topo.average_degree / 2))
            null_topo = topology.gen_ba(n, min(m, n - 1), derive_seed(args.seed, "null:ba"))
        _write(out / f"null_{args.null}.edges", topology.save_edge_list(null_topo))
        _write(out / f"null_{args.null}_metrics.json", topology.metrics_json(null_topo))
        if args.attack in ("random", "both"):
            curves = [
                analysis.attack_random(
                    null_topo, fractions, derive_seed(args.seed, f"null-attack:random:{i}")
                )
                for i in range(args.attack_seeds)
            ]
            _write(out / f"attack_random_null_{args.null}.csv", analysis.curves_to_csv(curves))
        if args.attack in ("targeted", "both"):
            curves = [analysis.attack_targeted(null_topo, fractions, adaptive=args.adaptive)]
            _write(out / f"attack_targeted_null_{args.null}.csv", analysis.curves_to_csv(curves))

    metrics = topology.metrics_dict(topo)
    sys.stdout.write(json.dumps(metrics, sort_keys=True) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# replay

def cmd_replay(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    topo, _ = build_experiment(cfg)
    txs = json.loads(Path(args.txs).read_text())
    by_id = {tx_id: Transaction(**fields) for tx_id, fields in txs.items()}
    pools = {n: TxPool(cfg.pool_config()) for n in range(topo.node_count)}
    seen: dict[int, set[str]] = {n: set() for n in range(topo.node_count)}
    mismatches = 0
    applied = 0
    for line in Path(args.trace).read_text().splitlines():
        if not line.strip():
            continue
        entry = json.loads(line)
        outcome = entry["outcome"]
        if outcome in ("probe", "offline", "mark"):
            continue
        to = entry["to"]
        tx = by_id.get(entry["tx_id"])
        if outcome == "dup":
            if entry["tx_id"] not in seen[to]:
                mismatches += 1
            continue
        if tx is None:
            mismatches += 1
            continue
        seen[to].add(tx.tx_id)
        result = pools[to].submit(tx, cfg.base_fee)
        applied += 1
        if result.kind.value != outcome:
            mismatches += 1
    sys.stdout.write(f"replayed {applied} deliveries, {mismatches} mismatches\n")
    return EXIT_OK if mismatches == 0 else EXIT_RUNTIME


# ---------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="txtopo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a graph edge list")
    gen_sub = p_gen.add_subparsers(dest="model", required=True)
    p_er = gen_sub.add_parser("er")
    p_er.add_argument("--n", type=int, required=True)
    p_er.add_argument("--p", type=float, required=True)
    p_ba = gen_sub.add_parser("ba")
    p_ba.add_argument("--n", type=int, required=True)
    p_ba.add_argument("--m", type=int, required=True)
    for p in (p_er, p_ba):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("-o", "--out", default=None)
        p.set_defaults(func=cmd_gen)

    p_measure = sub.add_parser("measure", help="run a measurement campaign")
    p_measure.add_argument("--config", required=True)
    p_measure.add_argument("--out", required=True)
    p_measure.add_argument("--seed", type=int, default=None)
    p_measure.add_argument("--trace", action="store_true")
    p_measure.set_defaults(func=cmd_measure)

    p_analyze = sub.add_parser("analyze", help="graph metrics and robustness study")
    p_analyze.add_argument("--graph", required=True)
    p_analyze.add_argument("--out", required=True)
    p_analyze.add_argument("--seed", type=int, default=0)
    p_analyze.add_argument("--attack", choices=["random", "targeted", "both", "none"], default="none")
    p_analyze.add_argument("--fractions", default="0.05,0.1,0.2,0.3,0.4,0.5")
    p_analyze.add_argument("--attack-seeds", type=int, default=10)
    p_analyze.add_argument("--adaptive", action="store_true")
    p_analyze.add_argument("--hops", action="store_true")
    p_analyze.add_argument("--samples-per-class", type=int, default=10)
    p_analyze.add_argument("--remove-low-degree", type=int, default=None)
    p_analyze.add_argument("--null", choices=["er", "ba"], default=None)
    p_analyze.set_defaults(func=cmd_analyze)

    p_replay = sub.add_parser("replay", help="verify a recorded delivery trace")
    p_replay.add_argument("--config", required=True)
    p_replay.add_argument("--trace", required=True)
    p_replay.add_argument("--txs", required=True)
    p_replay.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - surfaced as runtime failure
        sys.stderr.write(f"runtime failure: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
