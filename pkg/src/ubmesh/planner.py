"""Topology-aware parallelism search.

Ranks are laid out over NPUs in address order with TP fastest, then SP,
then the part of DP that expert groups need, then PP, then the rest of DP.
High-volume axes therefore land in the highest-bandwidth domains. Each
candidate is scored by building one representative collective per axis on
the real topology and pricing it with the closed-form cost model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .collectives import comm_cost, direct_all2all, multipath_all2all, multiring_allreduce, p2p
from .errors import InfeasibleParallelismError, NotMeshEmbeddableError
from .topology import Topology
from .workloads import (
    KINDS, ModelSpec, ParallelismConfig, activation_bytes, compute_time_ns, gradient_bytes, microbatches, traffic,
)

TIERS = ("npu", "board", "rack", "rack-row", "pod", "superpod")


@dataclass(frozen=True)
class PlannerConfig:
    """Knobs of the search.

    Attributes:
        b_lane: bytes per ns carried by one lane.
        overlap: fraction of communication hidden behind compute.
        memory_gib: per-NPU memory budget; None disables the memory check.
        objective: "comm" minimises communication time, "iteration" adds
            compute and the pipeline bubble.
    """

    strategy: str = "detour"
    use_apr: bool = True
    b_lane: float = 6.25
    overlap: float = 0.0
    memory_gib: float | None = 64.0
    objective: str = "comm"
    npu_tflops: float = 400.0
    mfu: float = 0.5
    pruned: bool = True


@dataclass(frozen=True)
class Mapping:
    groups: dict  # kind -> representative NPU ids
    tiers: dict  # kind -> smallest tier holding the group

    def to_dict(self, t: Topology | None = None) -> dict:
        name = (lambda n: t.nodes[n].name) if t is not None else (lambda n: n)
        return {k: {"tier": self.tiers[k], "size": len(g), "group": [name(n) for n in g]}
                for k, g in self.groups.items()}


@dataclass
class PlanResult:
    config: ParallelismConfig
    mapping: Mapping
    cost_ns: float
    breakdown: dict[str, float]
    compute_ns: float
    iteration_ns: float
    evaluated: int = 0
    skipped: dict[str, int] = field(default_factory=dict)

    def throughput(self, model: ModelSpec) -> float:
        """Tokens per second for the whole system."""
        return model.global_batch * model.seq_len / (self.iteration_ns * 1e-9)

    def to_dict(self, t: Topology | None = None) -> dict:
        return {
            "config": self.config.to_dict(),
            "mapping": self.mapping.to_dict(t),
            "comm_ns": self.cost_ns,
            "breakdown_ns": self.breakdown,
            "compute_ns": self.compute_ns,
            "iteration_ns": self.iteration_ns,
            "evaluated": self.evaluated,
            "skipped": self.skipped,
        }


def divisors(n: int) -> list[int]:
    return [d for d in range(1, n + 1) if n % d == 0]


def candidates(model: ModelSpec, npus: int, *, pruned: bool = True, fixed: dict | None = None,
               rack_size: int = 64):
    """Yield (config, violations); violations is empty for feasible configs.

    Pruning keeps TP*SP inside one rack once the system spans racks.
    """
    fixed = fixed or {}
    eps = divisors(model.experts) if model.is_moe else [1]
    for tp in divisors(npus):
        for sp in divisors(npus // tp):
            if pruned and npus >= rack_size and tp * sp > rack_size:
                continue
            for pp in divisors(npus // (tp * sp)):
                dp = npus // (tp * sp * pp)
                for ep in eps:
                    p = ParallelismConfig(tp, sp, ep, pp, dp)
                    if any(getattr(p, k) != v for k, v in fixed.items()):
                        continue
                    yield p, p.violations(model, npus)


def _expert_inner_dp(p: ParallelismConfig) -> int:
    return p.ep // math.gcd(p.ep, p.sp)


def rank_of(p: ParallelismConfig, tp: int = 0, sp: int = 0, pp: int = 0, dp: int = 0) -> int:
    d_in = _expert_inner_dp(p)
    di, do = dp % d_in, dp // d_in
    return tp + p.tp * (sp + p.sp * (di + d_in * (pp + p.pp * do)))


def axis_groups(p: ParallelismConfig, npus: tuple[int, ...]) -> dict[str, tuple[int, ...]]:
    """Representative group (the one holding rank 0) of every axis with degree > 1."""
    g = {}
    if p.tp > 1:
        g["TP"] = tuple(npus[rank_of(p, tp=i)] for i in range(p.tp))
    if p.sp > 1:
        g["SP"] = tuple(npus[rank_of(p, sp=i)] for i in range(p.sp))
    if p.ep > 1:
        g["EP"] = tuple(npus[rank_of(p, sp=j % p.sp, dp=j // p.sp)] for j in range(p.ep))
    if p.pp > 1:
        g["PP"] = (npus[rank_of(p)], npus[rank_of(p, pp=1)])
    if p.dp > 1:
        g["DP"] = tuple(npus[rank_of(p, dp=i)] for i in range(p.dp))
    return g


def group_tier(t: Topology, group) -> str:
    addrs = [t.nodes[n].addr for n in group]
    if len(set(addrs)) == 1:
        return "npu"
    for tier, key in (("board", lambda a: (a.pod, a.rack_row, a.rack_col, a.board)),
                      ("rack", lambda a: (a.pod, a.rack_row, a.rack_col)),
                      ("rack-row", lambda a: (a.pod, a.rack_row)),
                      ("pod", lambda a: a.pod)):
        if len({key(a) for a in addrs}) == 1:
            return tier
    return "superpod"


def _op_cost(t: Topology, kind: str, group: tuple[int, ...], cfg: PlannerConfig) -> tuple[float, float]:
    """(ns per byte at one byte per lane-ns, fixed latency ns) for one collective."""
    cache = t.__dict__.setdefault("_planner_cost_cache", {})
    key = (kind, group, cfg.strategy, cfg.use_apr)
    if key in cache:
        return cache[key]

    def build(nbytes):
        if kind in ("TP", "DP"):
            return multiring_allreduce(group, nbytes, t, cfg.use_apr, strategy=cfg.strategy)
        if kind == "SP":
            return multiring_allreduce(group, nbytes, t, cfg.use_apr, op="allgather", strategy=cfg.strategy)
        if kind == "EP":
            try:
                return multipath_all2all(group, nbytes, t)
            except NotMeshEmbeddableError:
                return direct_all2all({s: list(group) for s in group}, nbytes, t, cfg.strategy)
        return p2p(group[0], group[1], nbytes, t, cfg.strategy)

    slope = comm_cost(build(1.0), t, latency=False)
    lat = comm_cost(build(0.0), t)
    cache[key] = (slope, lat)
    return slope, lat


def memory_bytes(model: ModelSpec, p: ParallelismConfig) -> float:
    """Weights, gradients and DP-sharded optimiser state plus in-flight activations."""
    grads = gradient_bytes(model, p)
    params = grads / model.bytes_per_elem
    state = 2 * grads + 12 * params / p.dp
    in_flight = min(p.pp, microbatches(model, p))
    acts = 16 * activation_bytes(model, p) / p.tp * model.layers / p.pp * in_flight
    return state + acts


def evaluate(model: ModelSpec, p: ParallelismConfig, t: Topology, cfg: PlannerConfig = PlannerConfig(),
             npus: tuple[int, ...] | None = None) -> PlanResult:
    npus = npus or t.npus
    p.validate(model, len(npus))
    prof = traffic(model, p)
    groups = axis_groups(p, npus)
    breakdown = {}
    for k in KINDS:
        e = prof.entries[k]
        if not e.transfers or k not in groups:
            breakdown[k] = 0.0
            continue
        slope, lat = _op_cost(t, k, groups[k], cfg)
        breakdown[k] = sum(c * (slope * v / cfg.b_lane + lat) for v, c in e.transfers)
    comm = sum(breakdown.values())
    m = microbatches(model, p)
    compute = compute_time_ns(model, p, cfg.npu_tflops, cfg.mfu) * (m + p.pp - 1) / m
    iteration = compute + (1.0 - cfg.overlap) * comm
    mapping = Mapping(groups, {k: group_tier(t, g) for k, g in groups.items()})
    return PlanResult(p, mapping, comm, breakdown, compute, iteration)


def search(model: ModelSpec, t: Topology, cfg: PlannerConfig = PlannerConfig(), *,
           fixed: dict | None = None, npus: tuple[int, ...] | None = None) -> PlanResult:
    """Exhaustive search over the (optionally pruned) config space.

    Ties on cost break toward the lexicographically smallest (tp, sp, ep, pp, dp).
    """
    npus = tuple(npus or t.npus)
    rack = t.shape.rack_size if t.shape else 64
    best = None
    evaluated = 0
    skipped: dict[str, int] = {}
    reasons: list[str] = []
    for p, bad in candidates(model, len(npus), pruned=cfg.pruned, fixed=fixed, rack_size=rack):
        if bad:
            skipped["invalid"] = skipped.get("invalid", 0) + 1
            reasons.extend(b for b in bad if b not in reasons)
            continue
        if cfg.memory_gib is not None and memory_bytes(model, p) > cfg.memory_gib * (1 << 30):
            skipped["memory"] = skipped.get("memory", 0) + 1
            reason = f"memory over {cfg.memory_gib} GiB"
            if reason not in reasons:
                reasons.append(reason)
            continue
        r = evaluate(model, p, t, cfg, npus)
        evaluated += 1
        score = r.cost_ns if cfg.objective == "comm" else r.iteration_ns
        key = (round(score, 6), p.as_tuple())
        if best is None or key < best[0]:
            best = (key, r)
    if best is None:
        raise InfeasibleParallelismError(
            f"no feasible parallelism for {model.name} on {len(npus)} NPUs", violations=reasons[:20])
    res = best[1]
    res.evaluated = evaluated
    res.skipped = skipped
    return res
