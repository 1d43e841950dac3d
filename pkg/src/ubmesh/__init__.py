"""Flow-level modelling of nD-FullMesh AI training clusters.

Submodules: ``topology`` (builders and inventory), ``routing`` (path sets,
tables, source-routing headers), ``flowctl`` (virtual-lane assignment and
deadlock checks), ``simengine`` (max-min flow simulator), ``collectives``
(schedules and cost model), ``workloads`` (models and traffic), ``planner``
(parallelism search), ``analytics`` (reliability and cost), ``scenarios``
and ``cli``.
"""

from .errors import UBMeshError
from .topology import (
    BASELINE_ARCHS, Dim, LaneAllocation, Medium, NodeKind, RackConfig, Topology, build_baseline, build_full_mesh,
    build_nd_full_mesh, build_pod, build_rack, build_superpod, link_inventory,
)
from .routing import Path, PathSet, Strategy, route
from .flowctl import assign_vls, build_cdg, check_deadlock, verify_acyclic
from .simengine import FailureEvent, Flow, SimConfig, SimResult, run
from .collectives import (
    CollectiveSchedule, comm_cost, hierarchical_bcast_reduce_a2a, multipath_all2all, multiring_allreduce, replay,
)
from .workloads import ModelSpec, ParallelismConfig, catalog, get_model, traffic
from .planner import PlannerConfig, PlanResult, search
from .analytics import activate_backup, availability, mtbf, savings_report
from .scenarios import Scenario, run_scenario

__version__ = "0.1.0"

__all__ = [
    "UBMeshError", "BASELINE_ARCHS", "Dim", "LaneAllocation", "Medium", "NodeKind", "RackConfig", "Topology",
    "build_baseline", "build_full_mesh", "build_nd_full_mesh", "build_pod", "build_rack", "build_superpod",
    "link_inventory", "Path", "PathSet", "Strategy", "route", "assign_vls", "build_cdg", "check_deadlock",
    "verify_acyclic", "FailureEvent", "Flow", "SimConfig", "SimResult", "run", "CollectiveSchedule", "comm_cost",
    "hierarchical_bcast_reduce_a2a", "multipath_all2all", "multiring_allreduce", "replay", "ModelSpec",
    "ParallelismConfig", "catalog", "get_model", "traffic", "PlannerConfig", "PlanResult", "search",
    "activate_backup", "availability", "mtbf", "savings_report", "Scenario", "run_scenario",
]
