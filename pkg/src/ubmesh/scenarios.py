"""Experiment scenarios: plan every sweep point, score it and collect rows.

Each scenario kind maps to one function returning a list of flat dict rows;
``run_scenario`` dispatches on the kind, optionally fans sweep points out to
worker processes, and returns the rows in sweep order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

from .errors import InvalidConfigError, UBMeshError
from .planner import PlannerConfig, search
from .topology import BASELINE_ARCHS, LaneAllocation, RackConfig, Topology, build_baseline, build_pod, \
    build_rack, build_superpod
from .workloads import ModelSpec, get_model

KINDS = ("intra-rack", "inter-rack", "bandwidth-sweep", "linearity")
STRATEGIES = ("shortest", "detour", "borrow")


@dataclass
class Scenario:
    """One experiment.

    ``workloads`` entries name a catalog model plus optional field
    overrides. ``sweep`` holds the swept axis for the kind: ``arch`` for
    intra-rack, ``strategy`` for inter-rack, ``inter_rack_lanes`` for the
    bandwidth sweep and ``scale`` (multiples of the base NPU count) for
    linearity.
    """

    name: str
    kind: str
    workloads: list[dict]
    sweep: dict[str, list]
    topology: dict = field(default_factory=dict)
    planner: dict = field(default_factory=dict)
    outputs: list[str] = field(default_factory=lambda: ["csv", "json", "png"])
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidConfigError(f"unknown scenario kind {self.kind!r}; expected one of {KINDS}")
        if not self.workloads:
            raise InvalidConfigError(f"scenario {self.name!r} has no workloads")
        if not self.sweep or any(not v for v in self.sweep.values()):
            raise InvalidConfigError(f"scenario {self.name!r} has an empty sweep")
        axis = _AXIS[self.kind]
        if axis not in self.sweep:
            raise InvalidConfigError(f"{self.kind} scenario must sweep {axis!r}")
        for w in self.workloads:
            workload_model(w)  # resolve early so bad references fail before any work
        if self.workers < 1:
            raise InvalidConfigError("workers must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise InvalidConfigError(f"unknown scenario keys: {sorted(extra)}")
        missing = {"name", "kind", "workloads", "sweep"} - set(d)
        if missing:
            raise InvalidConfigError(f"scenario is missing {sorted(missing)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


_AXIS = {"intra-rack": "arch", "inter-rack": "strategy", "bandwidth-sweep": "inter_rack_lanes", "linearity": "scale"}


def workload_model(w: dict) -> ModelSpec:
    if "model" not in w:
        raise InvalidConfigError(f"workload entry needs a 'model': {w}")
    overrides = {k: v for k, v in w.items() if k != "model"}
    base = get_model(w["model"])
    try:
        return base.with_(**overrides)
    except TypeError as e:
        raise InvalidConfigError(f"bad workload fields {sorted(overrides)}: {e}") from None


def planner_config(d: dict) -> PlannerConfig:
    try:
        return PlannerConfig(**d)
    except TypeError as e:
        raise InvalidConfigError(f"bad planner fields: {e}") from None


def ubmesh_topology(npus: int, lanes: LaneAllocation | None = None, cfg: RackConfig | None = None) -> Topology:
    """UB-Mesh system with ``npus`` NPUs: a rack, a pod, or 1..8 pods."""
    if npus == 64:
        return build_rack(lanes, cfg)
    if npus == 1024:
        return build_pod(lanes, cfg)
    if npus % 1024 == 0 and 1 <= npus // 1024 <= 8:
        return build_superpod(npus // 1024, lanes, cfg)
    if npus % 64 == 0 and npus < 1024:
        racks = npus // 64
        for rows in range(int(math.isqrt(racks)), 0, -1):
            if racks % rows == 0 and racks // rows <= 4 and rows <= 4:
                return build_pod(lanes, cfg, rack_rows=rows, rack_cols=racks // rows)
    raise InvalidConfigError(f"no UB-Mesh preset with {npus} NPUs")


def inter_rack_allocation(lanes: int) -> tuple[LaneAllocation, RackConfig]:
    """Lane plan with ``lanes`` inter-rack lanes per NPU; switch plumbing scales along."""
    if lanes < 4 or lanes % 4:
        raise InvalidConfigError(f"inter-rack lanes must be a positive multiple of 4, got {lanes}")
    alloc = LaneAllocation(inter_rack_lanes=lanes, inter_rack_link_lanes=8 * lanes, uplink_lanes_per_rack=16 * lanes)
    cfg = RackConfig(bp_npu_ir_lanes=max(1, math.ceil(3 * lanes / 16)))
    return alloc, cfg


def _score(model: ModelSpec, t: Topology, cfg: PlannerConfig) -> dict:
    r = search(model, t, cfg)
    return {
        "config": "x".join(str(v) for v in r.config.as_tuple()),
        "iteration_ms": r.iteration_ns / 1e6,
        "comm_ms": r.cost_ns / 1e6,
        "compute_ms": r.compute_ns / 1e6,
        "tokens_per_s": r.throughput(model),
        "tokens_per_s_per_npu": r.throughput(model) / r.config.npus,
    }


def _point(kind: str, axis_value, workload: dict, topo: dict, planner: dict) -> dict:
    model = workload_model(workload)
    cfg = replace(PlannerConfig(objective="iteration"), **planner) if planner else PlannerConfig(objective="iteration")
    row = {"model": model.name, "seq_len": model.seq_len}
    if kind == "intra-rack":
        scale = topo.get("scale", 256)
        row.update(arch=axis_value, npus=scale, **_score(model, build_baseline(axis_value, scale), cfg))
    elif kind == "inter-rack":
        scale = topo.get("scale", 1024)
        if axis_value == "clos":
            t = build_baseline("Clos", scale)
        else:
            t = ubmesh_topology(scale)
            cfg = replace(cfg, strategy=axis_value)
        row.update(strategy=axis_value, npus=scale, **_score(model, t, cfg))
    elif kind == "bandwidth-sweep":
        scale = topo.get("scale", 1024)
        alloc, rcfg = inter_rack_allocation(int(axis_value))
        t = ubmesh_topology(scale, alloc, rcfg)
        row.update(inter_rack_lanes=int(axis_value), npus=scale, **_score(model, t, cfg))
    else:
        base = topo.get("base_npus", 64)
        npus = base * int(axis_value)
        scaled = model.with_(global_batch=model.global_batch * int(axis_value))
        row.update(scale=int(axis_value), npus=npus, **_score(scaled, ubmesh_topology(npus), cfg))
    return row


def _relative(rows: list[dict], axis: str, reference) -> None:
    """Add ``relative`` = throughput over the reference point of the same workload."""
    ref = {}
    for r in rows:
        if r[axis] == reference:
            ref[r["model"], r["seq_len"]] = r["tokens_per_s"]
    for r in rows:
        base = ref.get((r["model"], r["seq_len"]))
        r["relative"] = r["tokens_per_s"] / base if base else float("nan")


def _linearity(rows: list[dict]) -> None:
    base = {}
    for r in rows:
        key = (r["model"], r["seq_len"])
        if key not in base or r["scale"] < base[key][0]:
            base[key] = (r["scale"], r["tokens_per_s_per_npu"])
    for r in rows:
        r["linearity_pct"] = 100.0 * r["tokens_per_s_per_npu"] / base[r["model"], r["seq_len"]][1]


def run_scenario(s: Scenario) -> list[dict]:
    """Run every (workload, sweep value) point and return rows in sweep order."""
    axis = _AXIS[s.kind]
    jobs = [(s.kind, v, w, s.topology, s.planner) for w in s.workloads for v in s.sweep[axis]]
    try:
        if s.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=s.workers) as pool:
                rows = list(pool.map(_point_star, jobs))
        else:
            rows = [_point(*j) for j in jobs]
    except UBMeshError as e:
        e.context.setdefault("scenario", s.name)
        raise
    if s.kind == "intra-rack":
        _relative(rows, "arch", "Clos")
    elif s.kind == "inter-rack":
        _relative(rows, "strategy", "clos" if "clos" in s.sweep[axis] else s.sweep[axis][0])
    elif s.kind == "bandwidth-sweep":
        _relative(rows, "inter_rack_lanes", max(s.sweep[axis]))
    else:
        _linearity(rows)
    return rows


def _point_star(args):
    return _point(*args)


def default_scenarios() -> list[Scenario]:
    """Desk-scale versions of the figure experiments."""
    dense = [{"model": m, "seq_len": q, "global_batch": 1024}
             for m in ("LLAMA-70B", "GPT3-175B") for q in (8192, 16384, 32768)]
    return [
        Scenario("intra-rack", "intra-rack", dense, {"arch": list(BASELINE_ARCHS)}, {"scale": 256}),
        Scenario("inter-rack", "inter-rack", [{"model": "GPT3-175B", "global_batch": 1024}],
                 {"strategy": [*STRATEGIES, "clos"]}, {"scale": 1024}),
        Scenario("bandwidth-sweep", "bandwidth-sweep", [{"model": "GPT3-175B", "seq_len": 32768, "global_batch": 512}],
                 {"inter_rack_lanes": [4, 8, 16, 32]}, {"scale": 1024}),
        Scenario("linearity", "linearity", [{"model": "LLAMA-70B", "global_batch": 128}],
                 {"scale": [1, 2, 4, 16]}, {"base_npus": 64}),
    ]
