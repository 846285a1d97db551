"""Experiment configuration: a JSON document from which a seeded run is
fully reproducible. Defaults mirror stock client behaviour (replacement
rate 0.1, 16 pending per account, 1,024 queued futures, 3.5 s settle
interval, rounds of up to 15 links).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .probe import ProbeRunConfig
from .simnet import LatencyModel, NodeStatus
from .txpool import EvictionPolicy, PoolConfig


@dataclass
class GraphSpec:
    kind: str = "er"  # er | ba | file
    n: int = 30
    p: float = 0.2
    m: int = 3
    path: str | None = None

    def validate(self) -> None:
        if self.kind not in ("er", "ba", "file"):
            raise ValueError(f"unknown graph kind {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ValueError("graph kind 'file' needs a path")


@dataclass
class ChurnEvent:
    node: int
    status: str  # synced | unsynced | offline
    time_ms: float

    def node_status(self) -> NodeStatus:
        return NodeStatus(self.status)


@dataclass
class ExperimentConfig:
    master_seed: int = 42
    graph: GraphSpec = field(default_factory=GraphSpec)
    base_fee: int = 7
    alpha: str = "0.1"
    max_pending_per_account: int = 16
    queue_capacity: int = 1024
    eviction_policy: str = "drop_stalest"
    latency: dict = field(
        default_factory=lambda: {"kind": "constant", "constant_ms": 50.0}
    )
    churn: list[ChurnEvent] = field(default_factory=list)
    performers: int = 1
    visibility: float = 1.0
    pair_strategy: str = "all-pairs"
    k_max: int = 15
    t_w_ms: float = 3500.0
    accounts_parallel: int = 11
    b_t: int = 2000
    check_sync: bool = False
    attack_fractions: list[float] = field(
        default_factory=lambda: [0.05, 0.1, 0.2, 0.3, 0.4, 0.5]
    )
    attack_seeds: int = 10
    keep_trace: bool = False

    def pool_config(self) -> PoolConfig:
        return PoolConfig(
            alpha=self.alpha,
            max_pending_per_account=self.max_pending_per_account,
            queue_capacity=self.queue_capacity,
            eviction_policy=EvictionPolicy(self.eviction_policy),
        )

    def latency_model(self) -> LatencyModel:
        spec = dict(self.latency)
        kind = spec.pop("kind", "constant")
        if kind == "table":
            table = {
                (int(k.split("-")[0]), int(k.split("-")[1])): float(v)
                for k, v in spec.pop("table", {}).items()
            }
            return LatencyModel(kind="table", table=table, **spec)
        return LatencyModel(kind=kind, **spec)

    def probe_config(self) -> ProbeRunConfig:
        return ProbeRunConfig(
            pair_strategy=self.pair_strategy,
            k_max=self.k_max,
            t_w_ms=self.t_w_ms,
            accounts_parallel=self.accounts_parallel,
            b_t=self.b_t,
            check_sync=self.check_sync,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "graph" in data:
            data["graph"] = GraphSpec(**data["graph"])
        if "churn" in data:
            data["churn"] = [ChurnEvent(**e) for e in data["churn"]]
        if "alpha" in data:
            data["alpha"] = str(data["alpha"])
        cfg = cls(**data)
        cfg.graph.validate()
        cfg.pool_config()
        cfg.latency_model()
        for event in cfg.churn:
            event.node_status()
        if cfg.performers < 1:
            raise ValueError("performers must be >= 1")
        if not 0 < cfg.visibility <= 1:
            raise ValueError("visibility must be in (0, 1]")
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))
