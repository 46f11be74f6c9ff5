"""Availability analysis, repositioning synthesis, and simulation for
station-based shared vehicle fleets."""

from .congestion import (
    CongestionReport,
    RoadGraph,
    StudyResult,
    VirtualCapacities,
    congestion_study,
    evaluate_system,
    finite_mva,
    virtual_capacities,
)
from .cityio import (
    StationClustering,
    SynthSpec,
    TripRecord,
    cluster_stations,
    estimate_profile,
    generate_synthetic_city,
    load_profile,
    parse_trips,
    parse_trips_file,
    save_profile,
)
from .dispatch import DispatchOrder, FleetState, excess_and_target, plan_dispatch
from .errors import ConvergenceError, ValidationError
from .jackson import (
    PerfReport,
    Throughputs,
    mva_metrics,
    normalization_by_enumeration,
    oracle_metrics,
    solve_throughputs,
    utilization_identity_residual,
)
from .netmodel import (
    AbstractQueueNet,
    Network,
    NodeSpec,
    RebalancePromotion,
    build_abstract_net,
    road_index,
    road_pair,
)
from .rebalance import (
    FlowProblem,
    RebalancePlan,
    plan_from_flow,
    solve_min_cost_flow,
    solve_rebalancing,
    verify_balance,
)
from .sim import DemandProfile, SimConfig, SimTrace, availability_from_trace, run

__version__ = "0.1.0"

__all__ = [
    "AbstractQueueNet",
    "CongestionReport",
    "ConvergenceError",
    "DemandProfile",
    "DispatchOrder",
    "FleetState",
    "FlowProblem",
    "Network",
    "NodeSpec",
    "PerfReport",
    "RebalancePlan",
    "RebalancePromotion",
    "RoadGraph",
    "SimConfig",
    "SimTrace",
    "StationClustering",
    "StudyResult",
    "SynthSpec",
    "Throughputs",
    "TripRecord",
    "ValidationError",
    "VirtualCapacities",
    "availability_from_trace",
    "build_abstract_net",
    "cluster_stations",
    "congestion_study",
    "estimate_profile",
    "evaluate_system",
    "excess_and_target",
    "finite_mva",
    "generate_synthetic_city",
    "load_profile",
    "mva_metrics",
    "normalization_by_enumeration",
    "oracle_metrics",
    "parse_trips",
    "parse_trips_file",
    "plan_dispatch",
    "plan_from_flow",
    "road_index",
    "road_pair",
    "run",
    "save_profile",
    "solve_min_cost_flow",
    "solve_rebalancing",
    "solve_throughputs",
    "utilization_identity_residual",
    "verify_balance",
    "virtual_capacities",
]
