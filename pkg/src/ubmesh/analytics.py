"""Reliability and economics: backup NPU substitution, AFR and MTBF, cost models.

Per-unit failure rates are back-calibrated: a published class total divided
by the number of such components in the matching 8K preset. Prices are
relative placeholders meant to be overridden from config.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

from .collectives import CollectiveSchedule, Phase, Transfer, reserve
from .errors import InvalidConfigError, ScaleMismatchError, UnrecoverableRackError
from .routing import PathSet, RouteSegment, RoutingTables, make_path, route
from .topology import Medium, NodeKind, Topology, build_baseline, build_superpod

HOURS_PER_YEAR = 365 * 24
MTTR_DEFAULT_H = 75 / 60
MTTR_FAST_H = 13 / 60

AFR_CLASSES = ("electrical_cable", "optical_cable", "lrs", "hrs")
# published class totals (failures per year) for the two 8K systems
PRESET_AFR_TOTALS = {
    "UB-Mesh": {"electrical_cable": 5.82, "optical_cable": 1.55, "lrs": 81.0, "hrs": 0.56},
    "Clos": {"electrical_cable": 13.8, "optical_cable": 574.0, "lrs": 18.0, "hrs": 27.0},
}


# ---------------------------------------------------------------------------
# 64+1 backup


@dataclass(frozen=True)
class BackupPatch:
    topology: Topology
    tables: RoutingTables
    failed: int
    substitute: int | None
    rerouted: tuple[int, ...] = ()
    degraded_racks: frozenset = frozenset()


def _backup_of(t: Topology, rack: int) -> int | None:
    for n in t.nodes:
        if n.rack == rack and n.role == "backup":
            return n.id
    return None


def _drop_links(t: Topology, nodes: dict, dead: int) -> Topology:
    links = [l for l in t.links if dead not in (l.a, l.b)]
    links = tuple(replace(l, id=i) for i, l in enumerate(links))
    return replace(t, nodes=tuple(nodes[i] for i in range(len(nodes))), links=links)


def activate_backup(t: Topology, failed: int) -> BackupPatch:
    """Substitute the rack's backup NPU for ``failed``.

    The backup inherits the failed NPU's address. Former mesh neighbours of
    the failed NPU reach it through one LRS, and their tables switch to
    shortest-path lookups for in-rack destinations; every NPU-facing LRS of
    the rack pins the inherited address to the backup. Failing the backup
    itself only marks the rack degraded.

    Raises:
        UnrecoverableRackError: the rack's backup is already in use.
    """
    node = t.nodes[failed]
    if node.kind is not NodeKind.NPU or node.rack is None:
        raise InvalidConfigError(f"{node.name} is not a rack NPU")
    nodes = {n.id: n for n in t.nodes}
    if node.role == "backup":
        nodes[failed] = replace(node, role="failed")
        patched = _drop_links(t, nodes, failed)
        return BackupPatch(patched, RoutingTables(patched), failed, None, (), frozenset({node.rack}))
    if node.role != "npu" or node.addr is None:
        raise InvalidConfigError(f"{node.name} is not an active NPU")
    backup = _backup_of(t, node.rack)
    if backup is None:
        raise UnrecoverableRackError(f"rack {node.rack} has no idle backup NPU left for {node.name}",
                                     context={"rack": node.rack, "failed": node.name})
    neighbours = tuple(sorted(v for v, l in t.adjacency[failed] if t.nodes[v].kind is NodeKind.NPU))
    nodes[failed] = replace(node, role="failed", addr=None)
    nodes[backup] = replace(nodes[backup], role="npu", addr=node.addr)
    patched = _drop_links(t, nodes, failed)
    s = t.shape
    rack_base = s.flat(node.addr) - s.flat(node.addr) % s.rack_size
    seg = (RouteSegment("rack", rack_base, s.rack_size, "oracle"),)
    overrides = {u: seg for u in neighbours + (backup,)}
    # NPU-facing switches deliver the inherited address straight to the backup
    pin = (RouteSegment("rack", s.flat(node.addr), 1, "const", (backup,)),)
    for n in patched.nodes:
        if n.rack == node.rack and n.role == "lrs-npu":
            overrides[n.id] = pin
    return BackupPatch(patched, RoutingTables(patched, overrides), failed, backup, neighbours)


def _min_hop_paths(t: Topology, src: int, dst: int) -> PathSet:
    ps = route(t, src, dst, "detour")
    fewest = min(p.hops for p in ps.paths)
    keep = [p for p in ps.paths if p.hops == fewest]
    bw = [p.bottleneck(t) for p in keep]
    return PathSet(src, dst, tuple(keep), tuple(b / sum(bw) for b in bw))


def remap_schedule(schedule: CollectiveSchedule, patch: BackupPatch) -> CollectiveSchedule:
    """Rewrite a schedule for the patched topology.

    The failed NPU is replaced by its substitute everywhere. Paths that
    survive keep their weights; transfers whose paths all broke are spread
    over every minimum-hop path (one LRS relay for former mesh neighbours).
    """
    t = patch.topology
    swap = (lambda n: patch.substitute if n == patch.failed else n) if patch.substitute is not None else (lambda n: n)

    def alive(nodes):
        return all(t.link_between(u, v) is not None for u, v in zip(nodes, nodes[1:]))

    phases = []
    for ph in schedule.phases:
        trs = []
        for tr in ph.transfers:
            src, dst = swap(tr.src), swap(tr.dst)
            kept = [(make_path(t, [swap(n) for n in p.nodes]), w) for p, w in tr.paths
                    if alive([swap(n) for n in p.nodes])]
            if kept:
                tot = sum(w for _, w in kept)
                ps = PathSet(src, dst, tuple(p for p, _ in kept), tuple(w / tot for _, w in kept))
            else:
                ps = _min_hop_paths(t, src, dst)
            trs.append(Transfer(src, dst, tr.bytes, ps, tr.labels, tr.mode))
        phases.append(reserve(Phase(tuple(trs), ph.repeat), t))
    return CollectiveSchedule(schedule.op, tuple(swap(n) for n in schedule.group), schedule.bytes, phases,
                              [[swap(n) for n in r] for r in schedule.rings], dict(schedule.meta))


# ---------------------------------------------------------------------------
# failure rates


@dataclass(frozen=True)
class AfrTable:
    """Annual failures per deployed unit of each component class."""

    electrical_cable: float
    optical_cable: float
    lrs: float
    hrs: float

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise InvalidConfigError(f"AFR rate {k} must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def class_counts(t: Topology) -> dict[str, int]:
    out = dict.fromkeys(AFR_CLASSES, 0)
    for l in t.links:
        out["optical_cable" if l.medium is Medium.OPTICAL else "electrical_cable"] += 1
    for n in t.nodes:
        if n.kind is NodeKind.LRS:
            out["lrs"] += 1
        elif n.kind is NodeKind.HRS:
            out["hrs"] += 1
    return out


def calibrate_afr(t: Topology, totals: dict[str, float]) -> AfrTable:
    counts = class_counts(t)
    return AfrTable(**{k: (totals[k] / counts[k] if counts[k] else 0.0) for k in AFR_CLASSES})


@lru_cache(maxsize=None)
def preset_afr(arch: str) -> AfrTable:
    """Per-unit rates calibrated on the 8K preset of ``arch`` (UB-Mesh or Clos)."""
    if arch not in PRESET_AFR_TOTALS:
        raise InvalidConfigError(f"no calibration for {arch!r}; expected one of {sorted(PRESET_AFR_TOTALS)}")
    t = build_superpod(8) if arch == "UB-Mesh" else build_baseline("Clos", 8192)
    return calibrate_afr(t, PRESET_AFR_TOTALS[arch])


def afr_breakdown(t: Topology, afr: AfrTable) -> dict[str, float]:
    counts = class_counts(t)
    rates = afr.to_dict()
    return {k: counts[k] * rates[k] for k in AFR_CLASSES}


def system_afr(t: Topology, afr: AfrTable) -> float:
    return sum(afr_breakdown(t, afr).values())


def mtbf(afr_total: float) -> float:
    """Hours between failures for a system failing ``afr_total`` times a year."""
    if afr_total <= 0:
        raise InvalidConfigError("AFR must be positive")
    return HOURS_PER_YEAR / afr_total


def availability(mtbf_h: float, mttr_h: float = MTTR_DEFAULT_H) -> float:
    if mtbf_h <= 0 or mttr_h < 0:
        raise InvalidConfigError("MTBF must be positive and MTTR non-negative")
    return mtbf_h / (mtbf_h + mttr_h)


def reliability_report(t: Topology, afr: AfrTable, mttr_h: float = MTTR_DEFAULT_H) -> dict:
    parts = afr_breakdown(t, afr)
    total = sum(parts.values())
    m = mtbf(total)
    return {"afr": {k: round(v, 4) for k, v in parts.items()}, "afr_total": round(total, 4),
            "mtbf_h": m, "mttr_h": mttr_h, "availability": availability(m, mttr_h)}


# ---------------------------------------------------------------------------
# economics


@dataclass(frozen=True)
class CostTable:
    """Relative unit prices; defaults are placeholders, not vendor numbers.

    ``opex_share`` is the OpEx fraction of TCO for the reference system and
    ``opex_scale`` multiplies OpEx for the system being priced.
    """

    npu: float = 100.0
    cpu: float = 10.0
    lrs: float = 2.0
    hrs: float = 40.0
    passive_cable: float = 0.05
    active_cable: float = 0.3
    optical_cable: float = 0.3
    optical_module: float = 0.6
    opex_share: float = 0.30
    opex_scale: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise InvalidConfigError(f"cost {k} must be >= 0")
        if not 0 <= self.opex_share < 1:
            raise InvalidConfigError("opex_share must be in [0, 1)")


def optical_modules(t: Topology) -> int:
    """Transceivers: one per end of every optical link, four lanes each."""
    return sum(2 * math.ceil(l.lanes / 4) for l in t.links if l.medium is Medium.OPTICAL)


def capex(t: Topology, costs: CostTable = CostTable()) -> dict[str, float]:
    out = {"npu": 0.0, "cpu": 0.0, "lrs": 0.0, "hrs": 0.0, "cable": 0.0, "optical_module": 0.0}
    for n in t.nodes:
        out[n.kind.value.lower()] += getattr(costs, n.kind.value.lower())
    price = {Medium.PASSIVE: costs.passive_cable, Medium.ACTIVE: costs.active_cable,
             Medium.OPTICAL: costs.optical_cable}
    for l in t.links:
        out["cable"] += price[l.medium]
    out["optical_module"] = optical_modules(t) * costs.optical_module
    out["network"] = out["lrs"] + out["hrs"] + out["cable"] + out["optical_module"]
    out["total"] = out["npu"] + out["cpu"] + out["network"]
    return out


def tco(t: Topology, costs: CostTable = CostTable()) -> dict[str, float]:
    cap = capex(t, costs)["total"]
    opex = cap * costs.opex_share / (1 - costs.opex_share) * costs.opex_scale
    return {"capex": cap, "opex": opex, "tco": cap + opex}


def cost_efficiency(avg_perf: float, capex: float, opex: float = 0.0) -> float:
    if capex + opex <= 0:
        raise InvalidConfigError("CapEx + OpEx must be positive")
    return avg_perf / (capex + opex)


def relative_cost_efficiency(perf: float, tco_: float, base_perf: float = 1.0, base_tco: float = 1.0) -> float:
    return cost_efficiency(perf, tco_) / cost_efficiency(base_perf, base_tco)


def linearity(perf_per_npu_target: float, perf_per_npu_base: float) -> float:
    """Percent of base-scale per-NPU performance retained at the target scale."""
    if perf_per_npu_base <= 0:
        raise InvalidConfigError("base per-NPU performance must be positive")
    return 100.0 * perf_per_npu_target / perf_per_npu_base


def hardware_counts(t: Topology) -> dict[str, int]:
    c = class_counts(t)
    return {"npu": len(t.npus), "hrs": c["hrs"], "lrs": c["lrs"], "optical_cable": c["optical_cable"],
            "electrical_cable": c["electrical_cable"], "optical_module": optical_modules(t)}


@dataclass
class SavingsReport:
    counts_a: dict[str, int]
    counts_b: dict[str, int]
    reduction: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"a": self.counts_a, "b": self.counts_b, "reduction": self.reduction}


def savings_report(ubmesh: Topology, clos: Topology) -> SavingsReport:
    """Fraction of each hardware class that ``ubmesh`` saves relative to ``clos``.

    Negative values mean ``ubmesh`` needs more. Classes absent from both
    systems report 0.
    """
    a, b = hardware_counts(ubmesh), hardware_counts(clos)
    if a["npu"] != b["npu"]:
        raise ScaleMismatchError(f"NPU counts differ: {a['npu']} vs {b['npu']}")
    red = {}
    for k in ("hrs", "lrs", "optical_module", "optical_cable", "electrical_cable"):
        if b[k]:
            red[k] = 1.0 - a[k] / b[k]
        else:
            red[k] = 0.0 if a[k] == 0 else -math.inf
    return SavingsReport(a, b, red)
