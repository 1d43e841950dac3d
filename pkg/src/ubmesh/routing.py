"""All-Path Routing: segment tables, the 8-byte source-routing header and path sets.

Forwarding tables hold a handful of address segments per node. A lookup scans
the segments linearly and resolves the next hop with offset arithmetic, so the
table size does not grow with the number of destinations.

Path sets are built by bounded depth-first enumeration with distance pruning.
Three strategies pick from them: ``shortest`` (the table route only),
``detour`` (every minimal path at the pair's base tier plus one-relay
detours) and ``borrow`` (adds switch-transiting paths one tier up).
"""

from __future__ import annotations

import enum
from collections import OrderedDict, deque
from dataclasses import dataclass, field

from .errors import HeaderError, MalformedHeaderError, NoRouteError
from .topology import MESH_DIMS, Address, Dim, NodeKind, Topology, _coord

DIM_ORDER = (Dim.X, Dim.Y, Dim.Z_ROW, Dim.Z_COL, Dim.ALPHA, Dim.BETA, Dim.ACCESS, Dim.BACKPLANE)
DIM_RANK = {d: i for i, d in enumerate(DIM_ORDER)}

UPLINK_DIMS = frozenset({Dim.ACCESS, Dim.BACKPLANE, Dim.ALPHA, Dim.BETA})

SR_MAX_HOPS = 12
SR_MAX_INSTR = 6


# ---------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class Path:
    nodes: tuple[int, ...]
    dims: tuple[Dim, ...]
    detour: int = 0

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1

    @property
    def src(self) -> int:
        return self.nodes[0]

    @property
    def dst(self) -> int:
        return self.nodes[-1]

    def links(self, t: Topology):
        out = []
        for u, v in zip(self.nodes, self.nodes[1:]):
            l = t.link_between(u, v)
            if l is None:
                raise NoRouteError(f"no link {u}-{v}")
            out.append(l)
        return out

    def bottleneck(self, t: Topology) -> int:
        return min(l.lanes for l in self.links(t))

    def latency_ns(self, t: Topology) -> float:
        return sum(l.latency_ns for l in self.links(t))

    def max_tier(self, t: Topology) -> int:
        return max(t.nodes[n].tier for n in self.nodes)

    def is_valid(self, t: Topology) -> bool:
        if len(set(self.nodes)) != len(self.nodes) or len(self.dims) != self.hops:
            return False
        for (u, v), d in zip(zip(self.nodes, self.nodes[1:]), self.dims):
            l = t.link_between(u, v)
            if l is None or l.dim is not d:
                return False
        return True


def make_path(t: Topology, nodes, shortest_hops: int | None = None) -> Path:
    nodes = tuple(nodes)
    dims = []
    for u, v in zip(nodes, nodes[1:]):
        l = t.link_between(u, v)
        if l is None:
            raise NoRouteError(f"no link {u}-{v}")
        dims.append(l.dim)
    hops = len(nodes) - 1
    return Path(nodes, tuple(dims), hops - (shortest_hops if shortest_hops is not None else hops))


@dataclass(frozen=True)
class PathSet:
    src: int
    dst: int
    paths: tuple[Path, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.paths) != len(self.weights):
            raise ValueError("paths and weights differ in length")

    def __len__(self):
        return len(self.paths)

    def __iter__(self):
        return iter(zip(self.paths, self.weights))

    @property
    def shortest(self) -> Path:
        return min(self.paths, key=lambda p: p.hops)

    def aggregate_lanes(self, t: Topology) -> int:
        """Sum of bottlenecks; an upper bound on the set's usable bandwidth."""
        return sum(p.bottleneck(t) for p in self.paths)


class Strategy(enum.Enum):
    SHORTEST = "shortest"
    DETOUR = "detour"
    BORROW = "borrow"

    @classmethod
    def parse(cls, value) -> "Strategy":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


# ---------------------------------------------------------------------------
# graph helpers


def transit_ok(t: Topology, n: int) -> bool:
    """CPUs and spare NPUs terminate traffic but never relay it."""
    node = t.nodes[n]
    if node.kind is NodeKind.CPU:
        return False
    if node.kind is NodeKind.NPU and node.addr is None:
        return False
    return True


class _Cache:
    def __init__(self, size=512):
        self.size = size
        self.data: OrderedDict = OrderedDict()

    def get(self, key, fn):
        if key in self.data:
            self.data.move_to_end(key)
            return self.data[key]
        val = fn()
        self.data[key] = val
        if len(self.data) > self.size:
            self.data.popitem(last=False)
        return val


def _cache_for(t: Topology, name: str, size: int) -> _Cache:
    """Per-topology memo table, stored on the instance so it dies with it."""
    c = t.__dict__.get(name)
    if c is None:
        c = _Cache(size)
        t.__dict__[name] = c
    return c


def _allowed(t: Topology, n: int, src: int, dst: int, max_tier, mesh_relay: bool) -> bool:
    if n == src or n == dst:
        return True
    if not transit_ok(t, n):
        return False
    node = t.nodes[n]
    if max_tier is not None and node.tier > max_tier:
        return False
    if not mesh_relay and node.kind is NodeKind.NPU:
        return False
    return True


def distances_to(t: Topology, dst: int, max_tier=None, mesh_relay=True, src=None) -> dict[int, int]:
    """BFS hop distance to ``dst``; only permitted transit nodes are expanded.

    Nodes that may not relay still receive a distance, so they can act as
    path endpoints. ``src`` is accepted for call-site symmetry and ignored.
    """
    key = (dst, max_tier, mesh_relay)

    def run():
        dist = {dst: 0}
        q = deque([dst])
        while q:
            u = q.popleft()
            if u != dst and not _allowed(t, u, -1, dst, max_tier, mesh_relay):
                continue
            du = dist[u] + 1
            for v, _ in t.adjacency[u]:
                if v not in dist:
                    dist[v] = du
                    q.append(v)
        return dist

    return _cache_for(t, "_dist_cache", 512).get(key, run)


def base_tier(t: Topology, src: int, dst: int) -> int:
    """Smallest switch tier through which ``dst`` is reachable from ``src``."""
    top = max(n.tier for n in t.nodes)
    for tau in range(0, top + 1):
        if src in distances_to(t, dst, max_tier=tau, mesh_relay=True, src=src):
            return tau
    raise NoRouteError(f"{src} cannot reach {dst}")


# ---------------------------------------------------------------------------
# path enumeration


def enumerate_paths(t: Topology, src: int, dst: int, max_detour: int = 2, *,
                    max_tier: int | None = None, mesh_relay: bool = True,
                    max_hops: int | None = None, require_tier: int | None = None,
                    limit: int | None = None, dims: frozenset | None = None) -> PathSet:
    """All simple paths within ``shortest + max_detour`` hops, equal weights.

    Paths must have a unimodal tier profile (climb, then descend) and never
    take two back-plane hops in a row. ``max_tier`` and ``mesh_relay``
    restrict the transit nodes; ``require_tier`` keeps only paths that touch
    that tier; ``dims`` restricts the link dimensions a path may use.
    """
    if src == dst:
        raise NoRouteError("source equals destination")
    dist = distances_to(t, dst, max_tier=max_tier, mesh_relay=mesh_relay, src=src)
    if src not in dist:
        raise NoRouteError(f"{t.nodes[src].name} cannot reach {t.nodes[dst].name}")
    shortest = dist[src]
    global_shortest = distances_to(t, dst, src=src).get(src, shortest)
    bound = max_hops if max_hops is not None else shortest + max_detour
    found: list[tuple[int, ...]] = []
    stack = [src]
    on_path = {src}
    tiers = t.nodes

    def dfs(u, descending, last_dim):
        if limit is not None and len(found) >= limit:
            return
        depth = len(stack) - 1
        for v, l in sorted(t.adjacency[u], key=lambda e: (DIM_RANK[e[1].dim], e[0])):
            if v in on_path or (dims is not None and l.dim not in dims):
                continue
            dv = dist.get(v)
            if dv is None or depth + 1 + dv > bound:
                continue
            if l.dim is Dim.BACKPLANE and last_dim is Dim.BACKPLANE:
                continue
            tu, tv = tiers[u].tier, tiers[v].tier
            if descending and tv > tu:
                continue
            if v == dst:
                found.append(tuple(stack) + (v,))
                continue
            if not _allowed(t, v, src, dst, max_tier, mesh_relay):
                continue
            stack.append(v)
            on_path.add(v)
            dfs(v, descending or tv < tu, l.dim)
            stack.pop()
            on_path.discard(v)

    dfs(src, False, None)
    if require_tier is not None:
        found = [p for p in found if max(t.nodes[n].tier for n in p) >= require_tier]
    if not found:
        raise NoRouteError(f"no path {src}->{dst} within {bound} hops")
    paths = sorted((make_path(t, p, global_shortest) for p in found), key=lambda p: (p.hops, p.nodes))
    w = 1.0 / len(paths)
    return PathSet(src, dst, tuple(paths), tuple(w for _ in paths))


def shortest_path(t: Topology, src: int, dst: int) -> Path:
    """The table route: minimal hops, ties broken per hop by (dimension, node id)."""
    dist = distances_to(t, dst, src=src)
    if src not in dist:
        raise NoRouteError(f"{src} cannot reach {dst}")
    nodes = [src]
    u = src
    while u != dst:
        u = oracle_step(t, u, dst, dist)
        nodes.append(u)
    return make_path(t, nodes, dist[src])


def oracle_step(t: Topology, u: int, dst: int, dist=None) -> int:
    """Brute-force next hop: shortest-distance neighbour, lowest (dim, id)."""
    if dist is None:
        dist = distances_to(t, dst)
    if u == dst:
        return u
    du = dist.get(u)
    if du is None:
        raise NoRouteError(f"{u} cannot reach {dst}")
    best = None
    for v, l in t.adjacency[u]:
        if dist.get(v) == du - 1 and (v == dst or transit_ok(t, v)):
            key = (DIM_RANK[l.dim], v)
            if best is None or key < best[0]:
                best = (key, v)
    if best is None:
        raise NoRouteError(f"{u} has no next hop to {dst}")
    return best[1]


# ---------------------------------------------------------------------------
# strategies


@dataclass(frozen=True)
class PairInfo:
    base_tier: int
    shortest_at_base: int
    shortest: int
    one_dim: bool


def pair_info(t: Topology, src: int, dst: int) -> PairInfo:
    tau = base_tier(t, src, dst)
    d_base = distances_to(t, dst, max_tier=tau, mesh_relay=(tau == 0), src=src).get(src)
    if d_base is None:
        d_base = distances_to(t, dst, max_tier=tau, mesh_relay=True, src=src)[src]
    d = distances_to(t, dst, src=src)[src]
    return PairInfo(tau, d_base, d, _differs_in_one_dim(t, src, dst))


def _differs_in_one_dim(t: Topology, src: int, dst: int) -> bool:
    a, b = t.nodes[src].addr, t.nodes[dst].addr
    if a is None or b is None:
        return False
    ca, cb = _coord(a), _coord(b)
    if a.pod != b.pod:
        return False
    if (a.rack_row, a.rack_col) != (b.rack_row, b.rack_col) and t.arch == "UB-Mesh":
        return (a.rack_row == b.rack_row) != (a.rack_col == b.rack_col)
    return sum(x != y for x, y in zip(ca, cb)) == 1


def _weighted(t: Topology, src, dst, paths) -> PathSet:
    paths = sorted(set(paths), key=lambda p: (p.hops, p.nodes))
    bw = [p.bottleneck(t) for p in paths]
    total = float(sum(bw))
    return PathSet(src, dst, tuple(paths), tuple(b / total for b in bw))


def select_paths(ps: PathSet, strategy, t: Topology) -> PathSet:
    """Filter and weight a candidate set by strategy (weights ∝ bottleneck lanes)."""
    strategy = Strategy.parse(strategy)
    if not ps.paths:
        raise NoRouteError("empty path set")
    table = shortest_path(t, ps.src, ps.dst)
    if strategy is Strategy.SHORTEST:
        return PathSet(ps.src, ps.dst, (table,), (1.0,))
    info = pair_info(t, ps.src, ps.dst)
    extra = 1 if info.one_dim else 0

    def in_detour(p: Path) -> bool:
        if p == table:
            return True
        if p.max_tier(t) > info.base_tier:
            return False
        if info.base_tier > 0 and any(t.nodes[n].kind is NodeKind.NPU for n in p.nodes[1:-1]):
            return False
        return p.hops <= info.shortest_at_base + extra

    def in_borrow(p: Path) -> bool:
        if in_detour(p):
            return True
        if p.max_tier(t) != info.base_tier + 1:
            return False
        if any(t.nodes[n].kind is NodeKind.NPU for n in p.nodes[1:-1]):
            return False
        if any(d not in UPLINK_DIMS for d in p.dims):
            return False
        return p.hops <= info.shortest_at_base + 2

    keep = in_detour if strategy is Strategy.DETOUR else in_borrow
    chosen = [p for p in ps.paths if keep(p)]
    if table not in chosen:
        chosen.append(table)
    return _weighted(t, ps.src, ps.dst, chosen)


def route(t: Topology, src: int, dst: int, strategy="detour", max_detour: int = 2) -> PathSet:
    """Candidate enumeration plus :func:`select_paths` in one call (cached)."""
    strategy = Strategy.parse(strategy)
    return _cache_for(t, "_route_cache", 1 << 16).get((src, dst, strategy, max_detour),
                            lambda: _route(t, src, dst, strategy, max_detour))


def _route(t, src, dst, strategy, max_detour):
    table = shortest_path(t, src, dst)
    if strategy is Strategy.SHORTEST:
        return PathSet(src, dst, (table,), (1.0,))
    info = pair_info(t, src, dst)
    extra = min(1 if info.one_dim else 0, max_detour)
    cands = [table]
    cands += enumerate_paths(t, src, dst, max_tier=info.base_tier, mesh_relay=(info.base_tier == 0),
                             max_hops=info.shortest_at_base + extra).paths
    if strategy is Strategy.BORROW and max_detour > 0:
        try:
            cands += enumerate_paths(t, src, dst, max_tier=info.base_tier + 1, mesh_relay=False,
                                     max_hops=info.shortest_at_base + min(2, max_detour),
                                     require_tier=info.base_tier + 1, dims=UPLINK_DIMS).paths
        except NoRouteError:
            pass
    ps = PathSet(src, dst, tuple(dict.fromkeys(cands)), tuple(0.0 for _ in dict.fromkeys(cands)))
    return select_paths(ps, strategy, t)


# ---------------------------------------------------------------------------
# segment tables


@dataclass(frozen=True)
class RouteSegment:
    """Address range [base, base+extent) with one next-hop rule.

    Rules: ``offset`` picks ``targets[((flat-base)//stride) % mod]``;
    ``const`` always returns ``targets[0]``; ``dor`` fixes the lowest differing
    mesh coordinate; ``oracle`` falls back to a shortest-path computation.
    """

    scope: str
    base: int
    extent: int
    rule: str
    targets: tuple[int, ...] = ()
    stride: int = 1
    mod: int = 0
    neighbors: dict = field(default_factory=dict, compare=False, repr=False)

    def covers(self, flat: int) -> bool:
        return self.base <= flat < self.base + self.extent


@dataclass(frozen=True)
class NodeTable:
    node: int
    coord: tuple[int, ...] | None
    segments: tuple[RouteSegment, ...]


def lookup(addr: Address, table: NodeTable, t: Topology) -> int:
    """Next hop from ``table.node`` toward ``addr``: linear segment scan + offset arithmetic."""
    if not t.shape.contains(addr):
        raise NoRouteError(f"{addr} outside address space")
    flat = t.shape.flat(addr)
    for seg in table.segments:
        if not seg.covers(flat):
            continue
        if seg.rule == "const":
            return seg.targets[0]
        if seg.rule == "offset":
            i = (flat - seg.base) // seg.stride
            if seg.mod:
                i %= seg.mod
            return seg.targets[i]
        if seg.rule == "dor":
            dc = _coord(addr)
            for d, (mine, theirs) in enumerate(zip(table.coord, dc)):
                if mine != theirs:
                    nxt = seg.neighbors.get((d, theirs))
                    if nxt is None:
                        raise NoRouteError(f"no mesh neighbour along {MESH_DIMS[d].value}")
                    return nxt
            return table.node
        if seg.rule == "oracle":
            dst = t.npu_by_addr.get(addr)
            if dst is None:
                raise NoRouteError(f"{addr} not populated")
            return oracle_step(t, table.node, dst)
        raise NoRouteError(f"unknown rule {seg.rule}")
    raise NoRouteError(f"{addr} not covered by the table of node {table.node}")


class RoutingTables:
    """Lazily built per-node segment tables for one topology."""

    def __init__(self, t: Topology, overrides: dict[int, tuple[RouteSegment, ...]] | None = None):
        self.t = t
        self._tables: dict[int, NodeTable] = {}
        self.overrides = dict(overrides or {})
        self.structured = t.arch in ("UB-Mesh", "2D-FM") or all(n.kind is NodeKind.NPU and n.addr for n in t.nodes)
        if self.structured:
            self._index = _rack_index(t)

    def table(self, u: int) -> NodeTable:
        tab = self._tables.get(u)
        if tab is None:
            tab = self._build(u)
            if u in self.overrides:
                tab = NodeTable(tab.node, tab.coord, tuple(self.overrides[u]) + tab.segments)
            self._tables[u] = tab
        return tab

    def next_hop(self, u: int, dst: int) -> int:
        return lookup(self.t.nodes[dst].addr, self.table(u), self.t)

    def walk(self, src: int, dst: int, max_hops: int = 64) -> list[int]:
        nodes = [src]
        while nodes[-1] != dst:
            nodes.append(self.next_hop(nodes[-1], dst))
            if len(nodes) > max_hops:
                raise NoRouteError("forwarding loop")
        return nodes

    # -- construction --
    def _build(self, u: int) -> NodeTable:
        t = self.t
        node = t.nodes[u]
        size = t.shape.size
        if not self.structured:
            return NodeTable(u, None, (RouteSegment("global", 0, size, "oracle"),))
        if node.kind is NodeKind.NPU and node.addr is not None:
            return self._npu_table(u)
        return self._switch_table(u)

    def _npu_table(self, u: int) -> NodeTable:
        t, s = self.t, self.t.shape
        a = t.nodes[u].addr
        coord = tuple(_coord(a))
        nbrs, up = {}, []
        for v, l in t.adjacency[u]:
            if l.dim in MESH_DIMS:
                d = MESH_DIMS.index(l.dim)
                nbrs[d, _coord(t.nodes[v].addr)[d]] = v
            elif l.dim is Dim.ACCESS:
                up.append((DIM_RANK[l.dim], v))
        board_base = s.flat(Address(a.pod, a.rack_row, a.rack_col, a.board, 0))
        rack_base = board_base - a.board * s.npus
        board_targets = tuple(u if i == a.npu else nbrs.get((0, i), -1) for i in range(s.npus))
        segs = []
        outer = ("const", (min(up)[1],)) if up else ("dor", ())
        _span(segs, "global", 0, rack_base, *outer, nbrs)
        _span(segs, "rack", rack_base, board_base, "dor", (), nbrs)
        segs.append(RouteSegment("board", board_base, s.npus, "offset", board_targets, 1, 0))
        _span(segs, "rack", board_base + s.npus, rack_base + s.rack_size, "dor", (), nbrs)
        _span(segs, "global", rack_base + s.rack_size, s.size, *outer, nbrs)
        return NodeTable(u, coord, tuple(segs))

    def _switch_table(self, u: int) -> NodeTable:
        t, s, idx = self.t, self.t.shape, self._index
        node = t.nodes[u]
        size = s.size
        segs: list[RouteSegment] = []
        lowest = _lowest_neighbors(t, u)
        if node.rack is None:
            # spine: one port per rack
            targets = tuple(idx["rack_port"].get((u, r), -1) for r in range(s.racks))
            segs.append(RouteSegment("global", 0, size, "offset", targets, s.rack_size, 0))
            return NodeTable(u, None, tuple(segs))
        r = node.rack
        rack_base = r * s.rack_size
        p = node.plane
        if node.role == "lrs-npu":
            targets = tuple(idx["npu"][r, node.index, i] for i in range(s.npus))
            inside = RouteSegment("rack", rack_base, s.rack_size, "offset", targets, 1, s.npus)
            out = ("const", (idx["lrs-ir"][r, p, 0],))
        elif node.role in ("lrs-cpu", "lrs-ir"):
            targets = tuple(idx["lrs-npu"][r, p, b] for b in range(s.boards))
            inside = RouteSegment("rack", rack_base, s.rack_size, "offset", targets, s.npus, s.boards)
            out = ("const", (idx["lrs-ir"][r, p, 0],)) if node.role == "lrs-cpu" else None
        elif node.role in ("cpu", "backup"):
            if node.role == "cpu":
                return NodeTable(u, None, (RouteSegment("global", 0, size, "const", (lowest[Dim.ACCESS],)),))
            targets = tuple(idx["lrs-npu"][r, 0, b] for b in range(s.boards))
            inside = RouteSegment("rack", rack_base, s.rack_size, "offset", targets, s.npus, s.boards)
            out = ("const", (lowest[Dim.ACCESS],))
        else:
            return NodeTable(u, None, (RouteSegment("global", 0, size, "oracle"),))

        if node.role == "lrs-ir":
            pods_base = (r // (s.rack_rows * s.rack_cols)) * s.rack_rows * s.rack_cols * s.rack_size
            pod_extent = s.rack_rows * s.rack_cols * s.rack_size
            z = _z_targets(t, u, idx)
            alpha = ("const", (lowest[Dim.ALPHA],)) if Dim.ALPHA in lowest else None
            if z is not None:
                pod_seg = ("offset", z)
            else:
                pod_seg = alpha
            if pod_seg is not None:
                kind, targ = pod_seg
                stride = s.rack_size if kind == "offset" else 1
                _span(segs, "pod", pods_base, rack_base, kind, targ, stride=stride)
            if alpha is not None:
                _span(segs, "global", 0, pods_base, *alpha)
            segs.sort(key=lambda g: g.base)
            segs.append(inside)
            if pod_seg is not None:
                kind, targ = pod_seg
                stride = s.rack_size if kind == "offset" else 1
                _span(segs, "pod", rack_base + s.rack_size, pods_base + pod_extent, kind, targ,
                      stride=stride, base_override=pods_base)
            if alpha is not None:
                _span(segs, "global", pods_base + pod_extent, size, *alpha)
            return NodeTable(u, None, tuple(segs))

        _span(segs, "global", 0, rack_base, *out)
        segs.append(inside)
        _span(segs, "global", rack_base + s.rack_size, size, *out)
        return NodeTable(u, None, tuple(segs))


def _span(segs, scope, lo, hi, rule, targets, neighbors=None, stride=1, base_override=None):
    """Append [lo, hi) if non-empty. ``base_override`` anchors offset arithmetic."""
    if hi <= lo:
        return
    if rule == "offset" and base_override is not None:
        # keep offsets relative to the scope start by pre-slicing the target list
        shift = (lo - base_override) // stride
        targets = tuple(targets[shift:])
    segs.append(RouteSegment(scope, lo, hi - lo, rule, tuple(targets), stride, 0, neighbors or {}))


def _lowest_neighbors(t: Topology, u: int) -> dict[Dim, int]:
    out = {}
    for v, l in t.adjacency[u]:
        if not transit_ok(t, v):
            continue
        if l.dim not in out or v < out[l.dim]:
            out[l.dim] = v
    return out


def _rack_index(t: Topology) -> dict:
    idx = {"npu": {}, "lrs-npu": {}, "lrs-ir": {}, "rack_port": {}}
    for n in t.nodes:
        if n.kind is NodeKind.NPU and n.addr is not None:
            idx["npu"][n.rack, n.addr.board, n.addr.npu] = n.id
        elif n.role in ("lrs-npu", "lrs-ir"):
            idx[n.role][n.rack, n.plane, n.index] = n.id
    for n in t.nodes:
        if n.kind is NodeKind.HRS and n.rack is None:
            for v, _ in t.adjacency[n.id]:
                r = t.nodes[v].rack
                key = (n.id, r)
                if key not in idx["rack_port"] or v < idx["rack_port"][key]:
                    idx["rack_port"][key] = v
    return idx


def _z_targets(t: Topology, u: int, idx) -> tuple[int, ...] | None:
    """Per-rack next hop inside the pod: fix the rack column first, then the row."""
    s = t.shape
    node = t.nodes[u]
    z = {}
    for v, l in t.adjacency[u]:
        if l.dim in (Dim.Z_ROW, Dim.Z_COL):
            z[t.nodes[v].rack] = v
    if not z:
        return None
    per_pod = s.rack_rows * s.rack_cols
    pod, local = divmod(node.rack, per_pod)
    rr, rc = divmod(local, s.rack_cols)
    out = []
    for other in range(per_pod):
        orr, orc = divmod(other, s.rack_cols)
        if (orr, orc) == (rr, rc):
            out.append(u)
        elif orc != rc:
            out.append(z.get(pod * per_pod + rr * s.rack_cols + orc, -1))
        else:
            out.append(z.get(pod * per_pod + orr * s.rack_cols + rc, -1))
    return tuple(out)


# ---------------------------------------------------------------------------
# source-routing header


@dataclass(frozen=True)
class SRHeader:
    """8-byte header: 4-bit ptr, 12-bit per-hop bitmap, six 8-bit instructions.

    Bit layout of the little-endian 64-bit word: ptr in bits 0-3, bitmap in
    bits 4-15 (bit ``4+i`` is hop ``i``), instruction ``k`` in bits 16+8k..23+8k.
    Each instruction is ``(dimension << 5) | neighbour offset``.
    """

    ptr: int = 0
    bitmap: int = 0
    instr: tuple[int, ...] = (0,) * SR_MAX_INSTR

    def __post_init__(self):
        if not 0 <= self.ptr < 16 or not 0 <= self.bitmap < (1 << SR_MAX_HOPS):
            raise MalformedHeaderError("ptr or bitmap out of range")
        if len(self.instr) != SR_MAX_INSTR or any(not 0 <= x < 256 for x in self.instr):
            raise MalformedHeaderError("instruction fields must be six bytes")

    def to_int(self) -> int:
        word = self.ptr | (self.bitmap << 4)
        for k, x in enumerate(self.instr):
            word |= x << (16 + 8 * k)
        return word

    def to_bytes(self) -> bytes:
        return self.to_int().to_bytes(8, "little")

    @classmethod
    def from_bytes(cls, raw: bytes) -> "SRHeader":
        if len(raw) != 8:
            raise MalformedHeaderError(f"header must be 8 bytes, got {len(raw)}")
        word = int.from_bytes(raw, "little")
        return cls(word & 0xF, (word >> 4) & 0xFFF, tuple((word >> (16 + 8 * k)) & 0xFF for k in range(SR_MAX_INSTR)))

    def modes(self, hops: int) -> list[int]:
        return [(self.bitmap >> i) & 1 for i in range(hops)]


def pack_instruction(dim: Dim, offset: int) -> int:
    if not 0 <= offset < 32:
        raise HeaderError(f"neighbour offset {offset} does not fit in 5 bits")
    return (DIM_RANK[dim] << 5) | offset


def unpack_instruction(x: int) -> tuple[Dim, int]:
    return DIM_ORDER[x >> 5], x & 0x1F


def decode_step(h: SRHeader) -> tuple[str, int | None, SRHeader]:
    """Read the bit at ``ptr``: ("table", None, h') or ("sr", instruction, h')."""
    if h.ptr >= SR_MAX_HOPS:
        raise MalformedHeaderError(f"ptr {h.ptr} past the 12-hop bitmap")
    bit = (h.bitmap >> h.ptr) & 1
    adv = SRHeader(h.ptr + 1, h.bitmap, h.instr)
    if not bit:
        return "table", None, adv
    k = bin(h.bitmap & ((1 << h.ptr) - 1)).count("1")
    if k >= SR_MAX_INSTR:
        raise MalformedHeaderError("more SR hops than instruction fields")
    return "sr", h.instr[k], adv


def neighbor_offset(t: Topology, u: int, v: int) -> tuple[Dim, int]:
    l = t.link_between(u, v)
    if l is None:
        raise HeaderError(f"{u} and {v} are not adjacent")
    same = [w for w, m in t.adjacency[u] if m.dim is l.dim]
    return l.dim, same.index(v)


def resolve_instruction(t: Topology, u: int, instr: int) -> int:
    dim, off = unpack_instruction(instr)
    same = [w for w, m in t.adjacency[u] if m.dim is dim]
    if off >= len(same):
        raise MalformedHeaderError(f"node {u} has no {dim.value} neighbour #{off}")
    return same[off]


def encode_sr(path: Path, t: Topology, tables: RoutingTables) -> SRHeader:
    """Mark hops that leave the table route and store their instructions."""
    if path.hops > SR_MAX_HOPS:
        raise HeaderError(f"path has {path.hops} hops; the bitmap holds {SR_MAX_HOPS}")
    dst = path.dst
    bitmap = 0
    instr = []
    for i, (u, v) in enumerate(zip(path.nodes, path.nodes[1:])):
        if tables.next_hop(u, dst) == v:
            continue
        bitmap |= 1 << i
        instr.append(pack_instruction(*neighbor_offset(t, u, v)))
    if len(instr) > SR_MAX_INSTR:
        raise HeaderError(f"path needs {len(instr)} source-routed hops; at most {SR_MAX_INSTR}")
    return SRHeader(0, bitmap, tuple(instr + [0] * (SR_MAX_INSTR - len(instr))))


def walk(h: SRHeader, src: int, dst: int, t: Topology, tables: RoutingTables) -> list[int]:
    """Forward a packet hop by hop from its header; returns the visited nodes."""
    nodes = [src]
    u = src
    while u != dst:
        mode, ins, h = decode_step(h)
        u = tables.next_hop(u, dst) if mode == "table" else resolve_instruction(t, u, ins)
        nodes.append(u)
    return nodes
