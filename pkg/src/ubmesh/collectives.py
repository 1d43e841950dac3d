"""Topology-aware collective schedules and their cost.

A schedule is a list of phases separated by barriers. Each phase holds
transfers that run concurrently, and ``repeat`` expresses identical
back-to-back steps such as the 2(n-1) steps of a ring all-reduce. Every
transfer carries a weighted path set plus the data labels it moves, so the
same object feeds the closed-form cost model, the flow simulator and the
symbolic dataflow checker.
"""

from __future__ import annotations

import sys
from collections import defaultdict
from dataclasses import dataclass, field, replace
from functools import lru_cache

from .errors import GroupTooSmallError, NotMeshEmbeddableError
from .routing import PathSet, make_path, route
from .simengine import Flow, SimConfig, directed_resource, run
from .topology import MESH_DIMS, NodeKind, Topology, _coord


@dataclass(frozen=True)
class Transfer:
    src: int
    dst: int
    bytes: float
    paths: PathSet
    labels: tuple = ()
    mode: str = "copy"  # "copy" overwrites/adds labels at dst, "reduce" merges contributions
    lanes: float | None = None  # reserved lanes; None claims each path's bottleneck


@dataclass(frozen=True)
class Phase:
    transfers: tuple[Transfer, ...]
    repeat: int = 1


@dataclass
class CollectiveSchedule:
    op: str
    group: tuple[int, ...]
    bytes: float
    phases: list[Phase]
    rings: list[list[int]] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def transfers(self):
        for ph in self.phases:
            yield from ph.transfers

    def to_dict(self, t: Topology | None = None) -> dict:
        name = (lambda n: t.nodes[n].name) if t is not None else (lambda n: n)
        return {
            "op": self.op,
            "group": [name(n) for n in self.group],
            "bytes": self.bytes,
            "rings": [[name(n) for n in r] for r in self.rings],
            "meta": self.meta,
            "phases": [
                {
                    "repeat": ph.repeat,
                    "transfers": [
                        {"src": name(tr.src), "dst": name(tr.dst), "bytes": tr.bytes, "mode": tr.mode,
                         "paths": [{"nodes": [name(n) for n in p.nodes], "weight": w} for p, w in tr.paths]}
                        for tr in ph.transfers
                    ],
                }
                for ph in self.phases
            ],
        }


def _direct(t: Topology, u: int, v: int) -> PathSet:
    p = make_path(t, (u, v))
    return PathSet(u, v, (p,), (1.0,))


# ---------------------------------------------------------------------------
# ring construction


class _Budget(Exception):
    pass


def arc_disjoint_cycles(nodes, arcs, target: int, budget: int = 50000):
    """Backtracking search for ``target`` arc-disjoint directed Hamiltonian cycles.

    Candidates are tried fewest-onward-options first; the search moves on to
    the next cycle as soon as one closes and backtracks across cycles. Returns
    ``None`` when the step budget runs out or no solution exists.
    """
    nodes = list(nodes)
    n = len(nodes)
    out = {u: set() for u in nodes}
    for u, v in arcs:
        out[u].add(v)
    start = nodes[0]
    cycles: list[list] = []
    steps = [0]

    def extend(path, on, k):
        steps[0] += 1
        if steps[0] > budget:
            raise _Budget
        u = path[-1]
        if len(path) == n:
            if start in out[u]:
                out[u].discard(start)
                cycles.append(list(path))
                if k + 1 == target or extend([start], {start}, k + 1):
                    return True
                cycles.pop()
                out[u].add(start)
            return False
        cands = sorted((v for v in out[u] if v not in on),
                       key=lambda v: (sum(1 for w in out[v] if w not in on), v))
        for v in cands:
            out[u].discard(v)
            path.append(v)
            on.add(v)
            if extend(path, on, k):
                return True
            on.discard(v)
            path.pop()
            out[u].add(v)
        return False

    if target < 1 or n < 2:
        return None
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 4 * n * target + 1000))
    try:
        ok = extend([start], {start}, 0)
    except _Budget:
        return None
    finally:
        sys.setrecursionlimit(old)
    return cycles if ok else None


@lru_cache(maxsize=None)
def complete_digraph_rings(n: int) -> tuple[tuple[int, ...], ...]:
    """Directed Hamiltonian decomposition of the complete digraph on n nodes.

    n-1 rings exist for every n except 4 and 6, where n-2 is the maximum.
    """
    if n < 2:
        raise GroupTooSmallError(f"need at least 2 nodes, got {n}")
    if n == 2:
        return ((0, 1),)
    nodes = list(range(n))
    arcs = [(u, v) for u in nodes for v in nodes if u != v]
    for target in range(n - 1, 0, -1):
        found = arc_disjoint_cycles(nodes, arcs, target, budget=400000)
        if found:
            return tuple(tuple(c) for c in found)
    raise AssertionError("a single Hamiltonian cycle always exists")  # pragma: no cover


def _group_grid(t: Topology, group):
    """Classify a group: ("line", dim, order) / ("grid", (d1, vals1), (d2, vals2)) / None."""
    coords = []
    for n in group:
        a = t.nodes[n].addr
        if a is None:
            return None
        coords.append(_coord(a))
    varying = [d for d in range(5) if len({c[d] for c in coords}) > 1]
    if len(varying) == 1:
        d = varying[0]
        return ("line", d)
    if len(varying) == 2:
        d1, d2 = varying
        v1 = sorted({c[d1] for c in coords})
        v2 = sorted({c[d2] for c in coords})
        if len(coords) == len(v1) * len(v2) and len(set(map(tuple, coords))) == len(coords):
            return ("grid", (d1, v1), (d2, v2))
    return None


def _all_pairs_linked(t, nodes) -> bool:
    return all(t.link_between(u, v) is not None for i, u in enumerate(nodes) for v in nodes[i + 1:])


def _grid_lines_linked(t, group, d1, d2) -> bool:
    by = defaultdict(list)
    for n in group:
        c = _coord(t.nodes[n].addr)
        by["a", c[d2]].append(n)
        by["b", c[d1]].append(n)
    return all(_all_pairs_linked(t, line) for line in by.values())


def _snake_rings(t, group, d1, v1, d2, v2):
    """Row-major snakes pairing the k-th row ring with the k-th column ring."""
    a, b = len(v1), len(v2)
    if b % a:
        if a % b:
            return None
        d1, v1, d2, v2 = d2, v2, d1, v1
        a, b = b, a
    pos = {}
    for n in group:
        c = _coord(t.nodes[n].addr)
        pos[v1.index(c[d1]), v2.index(c[d2])] = n
    xr, yr = complete_digraph_rings(a), complete_digraph_rings(b)
    rings = []
    for k in range(min(len(xr), len(yr))):
        sx = {u: xr[k][(i + 1) % a] for i, u in enumerate(xr[k])}
        sy = {u: yr[k][(i + 1) % b] for i, u in enumerate(yr[k])}
        ring = []
        x, y = 0, yr[k][0]
        for _ in range(b):
            for _ in range(a):
                ring.append(pos[x, y])
                last = x
                x = sx[x]
            x = last
            y = sy[y]
        rings.append(ring)
    return rings


def build_rings(t: Topology, group) -> tuple[list[list[int]], bool]:
    """Arc-disjoint rings over direct links when possible; else one routed logical ring.

    Returns (rings, direct).
    """
    group = list(group)
    n = len(group)
    if n < 2:
        raise GroupTooSmallError(f"collective needs at least 2 nodes, got {n}")
    shape = _group_grid(t, group)
    if shape and shape[0] == "line" and _all_pairs_linked(t, group):
        order = sorted(group, key=lambda g: _coord(t.nodes[g].addr)[shape[1]])
        return [[order[i] for i in ring] for ring in complete_digraph_rings(n)], True
    if shape is None and _all_pairs_linked(t, group):
        order = sorted(group)
        return [[order[i] for i in ring] for ring in complete_digraph_rings(n)], True
    if shape and shape[0] == "grid":
        (d1, v1), (d2, v2) = shape[1], shape[2]
        if _grid_lines_linked(t, group, d1, d2):
            if n <= 16:
                arcs = [(u, v) for u in group for v in group if u != v and t.link_between(u, v)]
                deg = len(v1) - 1 + len(v2) - 1
                ordered = sorted(group, key=lambda g: t.nodes[g].addr)
                for target in range(deg, 0, -1):
                    found = arc_disjoint_cycles(ordered, arcs, target, budget=30000)
                    if found:
                        return found, True
            rings = _snake_rings(t, group, d1, v1, d2, v2)
            if rings:
                return rings, True
    order = sorted(group, key=lambda g: (t.nodes[g].addr is None, t.nodes[g].addr or g))
    return [order], False


def _borrow_idle(t: Topology, group, rings) -> dict[tuple[int, int], list[tuple[int, ...]]]:
    """Assign idle direct arcs to ring arcs as two-hop detours u->w->v.

    Relays may be group members or NPUs outside the group that neighbour it.
    """
    used = {(r[i], r[(i + 1) % len(r)]) for r in rings for i in range(len(r))}
    members = set(group)
    relays = sorted(members | {v for u in group for v, _ in t.adjacency[u]
                               if t.nodes[v].kind is NodeKind.NPU and t.nodes[v].addr is not None})
    idle = {(u, v) for u in relays for v in relays
            if u != v and (u in members or v in members) and (u, v) not in used and t.link_between(u, v)}
    ring_arcs = [(r[i], r[(i + 1) % len(r)]) for r in rings for i in range(len(r))]
    extra: dict[tuple[int, int], list] = defaultdict(list)
    progress = True
    while progress and idle:
        progress = False
        for u, v in ring_arcs:
            for w in relays:
                if (u, w) in idle and (w, v) in idle:
                    idle.discard((u, w))
                    idle.discard((w, v))
                    extra[u, v].append((u, w, v))
                    progress = True
                    break
    # a ring runs at its weakest arc, so detours only help when every arc gains
    for r in rings:
        arcs = [(r[i], r[(i + 1) % len(r)]) for i in range(len(r))]
        cap = {a: t.link_between(*a).lanes + sum(_two_hop_lanes(t, p) for p in extra.get(a, ())) for a in arcs}
        floor = min(cap.values())
        for a in arcs:
            while extra.get(a) and cap[a] - _two_hop_lanes(t, extra[a][-1]) >= floor:
                cap[a] -= _two_hop_lanes(t, extra[a].pop())
    return {a: ps for a, ps in extra.items() if ps}


def _two_hop_lanes(t: Topology, p) -> int:
    return min(t.link_between(p[0], p[1]).lanes, t.link_between(p[1], p[2]).lanes)


# ---------------------------------------------------------------------------
# multi-ring all-reduce / all-gather / reduce-scatter

ROUTED_MULTIRING_MAX = 16


def _ring_lanes(t: Topology, rings, arc_paths) -> list[float]:
    def arc_bw(ps: PathSet) -> float:
        return sum(p.bottleneck(t) for p in ps.paths)

    return [min(arc_bw(arc_paths[r[i], r[(i + 1) % len(r)]]) for i in range(len(r))) for r in rings]


def _fit_reservations(t: Topology, rings, arc_paths, lanes: list[float]) -> list[float]:
    """Scale ring reservations down uniformly until no directed link is over-committed."""
    claim: dict[int, float] = defaultdict(float)
    for r, l in zip(rings, lanes):
        for i, u in enumerate(r):
            for p, w in arc_paths[u, r[(i + 1) % len(r)]]:
                for a, b in zip(p.nodes, p.nodes[1:]):
                    claim[directed_resource(t, a, b)] += w * l
    f = max((c / t.links[res // 2].lanes for res, c in claim.items()), default=1.0)
    return [l / f for l in lanes] if f > 1.0 else list(lanes)


def _routed_rings(t: Topology, order: list[int], strategy: str):
    """Rings whose arcs are routed paths: one logical ring, or n-1 rings for small groups.

    The multi-ring variant uses switch and relay capacity that a single ring
    leaves idle; it is kept only when the link-load model prices it cheaper.
    """
    n = len(order)
    options = [[list(order)]]
    if 3 <= n <= ROUTED_MULTIRING_MAX:
        options.append([[order[i] for i in ring] for ring in complete_digraph_rings(n)])
    best = None
    for rings in options:
        arc_paths = {}
        for r in rings:
            for i, u in enumerate(r):
                v = r[(i + 1) % n]
                arc_paths[u, v] = route(t, u, v, strategy)
        lanes = _ring_lanes(t, rings, arc_paths)
        trs = tuple(Transfer(r[i], r[(i + 1) % n], lanes[ri] / sum(lanes), arc_paths[r[i], r[(i + 1) % n]])
                    for ri, r in enumerate(rings) for i in range(n))
        score = comm_cost(CollectiveSchedule("probe", tuple(order), 1.0, [Phase(trs)]), t, latency=False)
        if best is None or score < best[0] - 1e-12:
            best = (score, rings, arc_paths, lanes)
    return best[1], best[2], best[3]


_STEPS = {"allreduce": lambda n: 2 * (n - 1), "allgather": lambda n: n - 1, "reducescatter": lambda n: n - 1}


def multiring_allreduce(group, nbytes: float, t: Topology, use_apr: bool = False, *,
                        op: str = "allreduce", expand: bool = False,
                        strategy: str | None = None) -> CollectiveSchedule:
    """Ring collective over arc-disjoint rings, bytes split by ring bandwidth.

    ``op`` selects all-reduce, all-gather or reduce-scatter; ``nbytes`` is the
    full per-node buffer. ``expand`` emits one phase per ring step with data
    labels (for the dataflow checker) instead of one repeated phase.
    ``strategy`` routes the arcs of a logical ring; it defaults to detour
    with APR and shortest without.
    """
    group = tuple(group)
    n = len(group)
    if n < 2:
        raise GroupTooSmallError(f"collective needs at least 2 nodes, got {n}")
    if op not in _STEPS:
        raise ValueError(f"unknown ring op {op!r}")
    rings, direct = build_rings(t, group)
    arc_paths: dict[tuple[int, int], PathSet] = {}
    borrowed = 0
    if direct:
        extra = _borrow_idle(t, group, rings) if use_apr else {}
        for r in rings:
            for i, u in enumerate(r):
                v = r[(i + 1) % len(r)]
                paths = [make_path(t, (u, v))] + [make_path(t, p) for p in extra.get((u, v), ())]
                borrowed += len(paths) - 1
                bw = [p.bottleneck(t) for p in paths]
                arc_paths[u, v] = PathSet(u, v, tuple(paths), tuple(b / sum(bw) for b in bw))
        ring_bw = _ring_lanes(t, rings, arc_paths)
    else:
        strategy = strategy or ("detour" if use_apr else "shortest")
        rings, arc_paths, ring_bw = _routed_rings(t, rings[0], strategy)
        ring_bw = _fit_reservations(t, rings, arc_paths, ring_bw)
    total_bw = sum(ring_bw)
    shares = [nbytes * b / total_bw for b in ring_bw]
    steps = _STEPS[op](n)

    phases: list[Phase] = []
    if not expand:
        trs = []
        for ri, r in enumerate(rings):
            for i, u in enumerate(r):
                v = r[(i + 1) % len(r)]
                trs.append(Transfer(u, v, shares[ri] / n, arc_paths[u, v], lanes=ring_bw[ri]))
        phases.append(Phase(tuple(trs), steps))
    else:
        for s in range(steps):
            trs = []
            for ri, r in enumerate(rings):
                for j, u in enumerate(r):
                    v = r[(j + 1) % n]
                    if op == "allreduce":
                        rs = s < n - 1
                        k = (j - s) % n if rs else (j + 1 - (s - (n - 1))) % n
                        mode = "reduce" if rs else "copy"
                    elif op == "reducescatter":
                        k, mode = (j - s) % n, "reduce"
                    else:
                        k, mode = (j - s) % n, "copy"
                    trs.append(Transfer(u, v, shares[ri] / n, arc_paths[u, v], ((ri, k),), mode, ring_bw[ri]))
            phases.append(Phase(tuple(trs), 1))
    meta = {"rings": len(rings), "direct": direct, "use_apr": use_apr, "borrowed_paths": borrowed,
            "ring_lanes": ring_bw}
    return CollectiveSchedule(op, group, nbytes, phases, [list(r) for r in rings], meta)


# ---------------------------------------------------------------------------
# all-to-all


def multipath_all2all(group, pair_bytes: float, t: Topology, split: float = 0.5) -> CollectiveSchedule:
    """All-to-all on a 2-D mesh section: each off-axis pair sends an X-first and a Y-first part.

    Pairs sharing a row or column use their direct link for the whole
    message; every other part takes exactly one relay.
    """
    group = tuple(group)
    if len(group) < 2:
        raise GroupTooSmallError("all-to-all needs at least 2 nodes")
    shape = _group_grid(t, group)
    if shape is None:
        raise NotMeshEmbeddableError("group is not a full line or grid of the mesh")
    if shape[0] == "line":
        if not _all_pairs_linked(t, group):
            raise NotMeshEmbeddableError("group members are not directly linked")
        trs = [Transfer(s, d, pair_bytes, _direct(t, s, d), ((s, d),)) for s in group for d in group if s != d]
        phase = reserve(Phase(tuple(trs)), t)
        return CollectiveSchedule("all2all", group, pair_bytes, [phase], meta={"split": 1.0})
    (d1, _), (d2, _) = shape[1], shape[2]
    if not _grid_lines_linked(t, group, d1, d2):
        raise NotMeshEmbeddableError("grid rows or columns are not full meshes")
    at = {tuple(_coord(t.nodes[n].addr)): n for n in group}
    trs = []
    for s in group:
        cs = _coord(t.nodes[s].addr)
        for d in group:
            if s == d:
                continue
            cd = _coord(t.nodes[d].addr)
            if cs[d1] == cd[d1] or cs[d2] == cd[d2]:
                trs.append(Transfer(s, d, pair_bytes, _direct(t, s, d), ((s, d),)))
                continue
            r1 = list(cs)
            r1[d1] = cd[d1]  # move along the first dimension first
            r2 = list(cs)
            r2[d2] = cd[d2]
            p1 = make_path(t, (s, at[tuple(r1)], d))
            p2 = make_path(t, (s, at[tuple(r2)], d))
            trs.append(Transfer(s, d, pair_bytes, PathSet(s, d, (p1, p2), (split, 1 - split)), ((s, d),)))
    return CollectiveSchedule("all2all", group, pair_bytes, [reserve(Phase(tuple(trs)), t)],
                              meta={"split": split, "dims": [MESH_DIMS[d1].value, MESH_DIMS[d2].value]})


def direct_all2all(expert_map: dict, block_bytes: float, t: Topology, strategy: str = "shortest") -> CollectiveSchedule:
    """Reference all-to-all: one separate copy per (source, destination)."""
    trs = []
    for s in sorted(expert_map):
        for d in sorted(set(expert_map[s])):
            if d != s:
                trs.append(Transfer(s, d, block_bytes, route(t, s, d, strategy), ((s,),)))
    group = tuple(sorted(set(expert_map) | {d for ds in expert_map.values() for d in ds}))
    return CollectiveSchedule("all2all", group, block_bytes, [reserve(Phase(tuple(trs)), t)])


def hierarchical_bcast_reduce_a2a(group, expert_map: dict, t: Topology, block_bytes: float = 1.0,
                                  direction: str = "broadcast") -> CollectiveSchedule:
    """Token dispatch as per-source broadcast trees (rack, then board, then NPU).

    ``expert_map`` maps a source NPU to the NPUs that need its token block.
    One copy crosses into each destination rack and one copy into each
    destination board; the board fans out over X links. ``direction="reduce"``
    mirrors every tree for the combine step.
    """
    phases = [[], [], []]
    for s in sorted(expert_map):
        dests = sorted(set(expert_map[s]) - {s})
        if not dests:
            continue
        sa = t.nodes[s].addr
        racks = defaultdict(list)
        for d in dests:
            racks[t.shape.rack_index(t.nodes[d].addr)].append(d)
        for rack, members in sorted(racks.items()):
            if rack == t.shape.rack_index(sa):
                root = s
            else:
                same_pos = [d for d in members if (t.nodes[d].addr.board, t.nodes[d].addr.npu) == (sa.board, sa.npu)]
                root = same_pos[0] if same_pos else members[0]
                phases[0].append(Transfer(s, root, block_bytes, route(t, s, root, "shortest"), ((s,),)))
            ra = t.nodes[root].addr
            boards = defaultdict(list)
            for d in members:
                boards[t.nodes[d].addr.board].append(d)
            for board, bm in sorted(boards.items()):
                if board == ra.board:
                    broot = root
                else:
                    relay = t.npu_by_addr[ra.__class__(ra.pod, ra.rack_row, ra.rack_col, board, ra.npu)]
                    broot = relay
                    phases[1].append(Transfer(root, relay, block_bytes, route(t, root, relay, "shortest"), ((s,),)))
                for d in bm:
                    if d != broot:
                        phases[2].append(Transfer(broot, d, block_bytes, route(t, broot, d, "shortest"), ((s,),)))
    ordered = [Phase(tuple(p)) for p in phases if p]
    if direction == "reduce":
        ordered = [Phase(tuple(Transfer(tr.dst, tr.src, tr.bytes, route(t, tr.dst, tr.src, "shortest"), tr.labels,
                                        "reduce") for tr in ph.transfers)) for ph in reversed(ordered)]
    elif direction != "broadcast":
        raise ValueError(f"direction must be broadcast or reduce, got {direction!r}")
    return CollectiveSchedule(f"hier-{direction}", tuple(group), block_bytes, [reserve(ph, t) for ph in ordered],
                              meta={"expert_map": {str(k): list(v) for k, v in expert_map.items()}})


def p2p(src: int, dst: int, nbytes: float, t: Topology, strategy: str = "detour") -> CollectiveSchedule:
    tr = Transfer(src, dst, nbytes, route(t, src, dst, strategy), ((src, dst),))
    return CollectiveSchedule("p2p", (src, dst), nbytes, [reserve(Phase((tr,)), t)])


def tier_bytes(schedule: CollectiveSchedule, t: Topology) -> dict[str, float]:
    """Bytes per hierarchy tier crossed by a transfer (rack, board, npu)."""
    out = {"rack": 0.0, "board": 0.0, "npu": 0.0}
    for ph in schedule.phases:
        for tr in ph.transfers:
            a, b = t.nodes[tr.src].addr, t.nodes[tr.dst].addr
            if t.shape.rack_index(a) != t.shape.rack_index(b):
                out["rack"] += tr.bytes * ph.repeat
            elif a.board != b.board:
                out["board"] += tr.bytes * ph.repeat
            else:
                out["npu"] += tr.bytes * ph.repeat
    return out


# ---------------------------------------------------------------------------
# cost, replay, checks


def phase_loads(phase: Phase, t: Topology) -> dict[int, float]:
    load: dict[int, float] = defaultdict(float)
    for tr in phase.transfers:
        for p, w in tr.paths:
            for u, v in zip(p.nodes, p.nodes[1:]):
                load[directed_resource(t, u, v)] += tr.bytes * w
    return load


def reserve(phase: Phase, t: Topology) -> Phase:
    """Give every transfer the lanes that finish the phase at its busiest link's pace.

    A transfer of ``b`` bytes reserves ``b / T`` lanes, ``T`` being the phase
    occupancy at one byte per lane-ns, so each link carries at most its capacity.
    """
    load = phase_loads(phase, t)
    busy = max((x / t.links[r // 2].lanes for r, x in load.items()), default=0.0)
    if busy <= 0:
        return phase
    return Phase(tuple(replace(tr, lanes=tr.bytes / busy) for tr in phase.transfers), phase.repeat)


def comm_cost(schedule: CollectiveSchedule, t: Topology, b_lane: float = 1.0, latency: bool = True) -> float:
    """Sum over phases of repeat * (max link occupancy + max path latency), in ns."""
    total = 0.0
    for ph in schedule.phases:
        if not ph.transfers:
            continue
        load = phase_loads(ph, t)
        busy = max((x / (t.links[r // 2].lanes * b_lane) for r, x in load.items()), default=0.0)
        lat = max(p.latency_ns(t) for tr in ph.transfers for p, w in tr.paths if w > 0) if latency else 0.0
        total += ph.repeat * (busy + lat)
    return total


def replay(schedule: CollectiveSchedule, t: Topology, cfg: SimConfig | None = None) -> float:
    """Simulate each phase with barriers in between; returns total time in ns."""
    cfg = cfg or SimConfig(include_latency=True)
    total = 0.0
    for ph in schedule.phases:
        flows = [Flow(tr.src, tr.dst, tr.bytes, tr.paths, id=i) for i, tr in enumerate(ph.transfers) if tr.bytes > 0]
        if flows:
            dt = run(t, flows, cfg=cfg).makespan
        elif ph.transfers and cfg.include_latency:
            dt = max(p.latency_ns(t) for tr in ph.transfers for p, _ in tr.paths)
        else:
            dt = 0.0
        total += ph.repeat * dt
    return total


def conflicts(schedule: CollectiveSchedule, t: Topology) -> list[tuple[int, int, float]]:
    """(phase, directed resource, claimed lanes) wherever claims exceed capacity.

    A transfer claims ``weight * lanes`` on every link of each path, where
    ``lanes`` is its reservation or, when it has none, the path bottleneck.
    """
    bad = []
    for pi, ph in enumerate(schedule.phases):
        claim: dict[int, float] = defaultdict(float)
        for tr in ph.transfers:
            for p, w in tr.paths:
                lanes = w * (p.bottleneck(t) if tr.lanes is None else tr.lanes)
                for u, v in zip(p.nodes, p.nodes[1:]):
                    claim[directed_resource(t, u, v)] += lanes
        for r, c in claim.items():
            if c > t.links[r // 2].lanes + 1e-9:
                bad.append((pi, r, c))
    return bad


def check_dataflow(schedule: CollectiveSchedule, expect: str | None = None) -> bool:
    """Symbolic replay of an expanded schedule; True when the postcondition holds.

    Within a phase all transfers read the state from before the phase.
    """
    op = expect or schedule.op
    group = list(schedule.group)
    labels = sorted({lab for tr in schedule.transfers() for lab in tr.labels})
    if op in ("allreduce", "reducescatter"):
        state = {n: {lab: {n} for lab in labels} for n in group}
    elif op == "allgather":
        state = {u: {} for u in group}
        for ri, ring in enumerate(schedule.rings):
            for j, u in enumerate(ring):
                state[u][(ri, j)] = {u}
    elif op == "all2all":
        state = {u: {lab: {u} for lab in labels if lab[0] == u} for u in group}
    elif op.startswith("hier-"):
        state = {}
    else:
        raise ValueError(op)

    if op == "hier-reduce":
        # every tree member starts with its own contribution to each source block
        for tr in schedule.transfers():
            for lab in tr.labels:
                state.setdefault(tr.src, {}).setdefault(lab, {tr.src})
                state.setdefault(tr.dst, {}).setdefault(lab, {tr.dst})
    if op == "hier-broadcast":
        for tr in schedule.transfers():
            for lab in tr.labels:
                state.setdefault(lab[0], {})[lab] = {lab[0]}

    for ph in schedule.phases:
        for _ in range(ph.repeat):
            snap = {u: {k: set(v) for k, v in d.items()} for u, d in state.items()}
            for tr in ph.transfers:
                for lab in tr.labels:
                    if lab not in snap.get(tr.src, {}):
                        return False
                    val = snap[tr.src][lab]
                    dst = state.setdefault(tr.dst, {})
                    if tr.mode == "reduce":
                        dst[lab] = dst.get(lab, set()) | val
                    else:
                        dst[lab] = set(val)

    full = set(group)
    if op == "allreduce":
        return all(state[u][lab] == full for u in group for lab in labels)
    if op == "reducescatter":
        return all(any(state[u][lab] == full for u in group) for lab in labels)
    if op == "allgather":
        want = {(ri, j) for ri, ring in enumerate(schedule.rings) for j in range(len(ring))}
        return all(set(state[u]) >= want for u in group)
    if op == "all2all":
        return all(lab in state.get(lab[1], {}) for lab in labels)
    emap = schedule.meta.get("expert_map", {})
    if op == "hier-broadcast":
        return all((int(s),) in state.get(d, {}) for s, ds in emap.items() for d in ds if d != int(s))
    # hier-reduce: every source gathers the contributions of all its destinations
    return all(state.get(int(s), {}).get((int(s),), set()) >= set(ds) for s, ds in emap.items() if ds)
