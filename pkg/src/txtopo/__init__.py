"""Transaction-pool gossip simulation and marked-transaction topology
measurement toolkit."""

from .analysis import (
    AttackCurve,
    Score,
    attack_random,
    attack_targeted,
    hops_by_class,
    remove_low_degree,
    score,
)
from .probe import (
    InferenceTask,
    MarkedTxSet,
    MeasurementReport,
    ProbeRunConfig,
    ProbeSwarm,
    build_swarm,
    discover_topology,
    execute_inference,
    identify_synchronized,
    partition_tasks,
    plan_marked_txs,
)
from .simnet import LatencyModel, NodeStatus, Sim, build_sim, visible_set
from .topology import (
    DegreeClass,
    DegreeThresholds,
    Topology,
    broadcast_hops,
    classify_nodes,
    degree_stats,
    gen_ba,
    gen_er,
    largest_connected_component,
    load_edge_list,
    save_edge_list,
    shortest_path_stats,
)
from .txpool import (
    EvictionPolicy,
    PoolConfig,
    SubmitKind,
    Transaction,
    TxPool,
    effective_price,
    replacement_allowed,
    tx_with_effective_price,
)

__version__ = "0.1.0"
