"""Topology construction: nD full-mesh fabrics, UB-Mesh presets and Clos baselines.

Nodes and links are plain frozen dataclasses held in tuples; a built
:class:`Topology` is never mutated, so it can be shared read-only between
simulation runs. Every link carries a dimension tag, and the cable medium,
length class and latency are derived from that tag alone.
"""

from __future__ import annotations

import enum
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from functools import cached_property
from itertools import combinations, product

from .errors import InvalidShapeError, UnsupportedArchError


class NodeKind(enum.Enum):
    NPU = "NPU"
    CPU = "CPU"
    LRS = "LRS"
    HRS = "HRS"


IO_LANES = {NodeKind.NPU: 72, NodeKind.CPU: 32, NodeKind.LRS: 72, NodeKind.HRS: 512}


class Medium(enum.Enum):
    PASSIVE = "passive-electrical"
    ACTIVE = "active-electrical"
    OPTICAL = "optical"


class Dim(enum.Enum):
    """Link dimension. X/Y live inside a rack, Z_* between racks of a pod,
    ALPHA is the switched pod/SuperPod tier and BETA the datacenter tier."""

    X = "X"
    Y = "Y"
    Z_ROW = "Z-row"
    Z_COL = "Z-col"
    ALPHA = "alpha"
    BETA = "beta"
    ACCESS = "access"  # endpoint <-> switch inside a rack
    BACKPLANE = "backplane"  # switch <-> switch inside a rack


# (medium, length class in metres)
DIM_MEDIUM = {
    Dim.X: (Medium.PASSIVE, 1),
    Dim.Y: (Medium.PASSIVE, 1),
    Dim.ACCESS: (Medium.PASSIVE, 1),
    Dim.BACKPLANE: (Medium.PASSIVE, 1),
    Dim.Z_ROW: (Medium.ACTIVE, 10),
    Dim.Z_COL: (Medium.ACTIVE, 10),
    Dim.ALPHA: (Medium.OPTICAL, 100),
    Dim.BETA: (Medium.OPTICAL, 1000),
}

MESH_DIMS = (Dim.X, Dim.Y, Dim.Z_ROW, Dim.Z_COL, Dim.ALPHA)

LINK_BASE_LATENCY_NS = 50.0
PROPAGATION_NS_PER_M = 5.0


def link_latency_ns(length_m: float) -> float:
    return LINK_BASE_LATENCY_NS + PROPAGATION_NS_PER_M * length_m


@dataclass(frozen=True, order=True)
class Address:
    """Hierarchical NPU address; field order is the total order."""

    pod: int
    rack_row: int
    rack_col: int
    board: int
    npu: int

    def as_tuple(self):
        return (self.pod, self.rack_row, self.rack_col, self.board, self.npu)


@dataclass(frozen=True)
class Shape:
    pods: int = 1
    rack_rows: int = 1
    rack_cols: int = 1
    boards: int = 1
    npus: int = 1

    def __post_init__(self):
        if min(self.as_tuple()) < 1:
            raise InvalidShapeError(f"shape dimensions must be >= 1: {self}")

    def as_tuple(self):
        return (self.pods, self.rack_rows, self.rack_cols, self.boards, self.npus)

    @property
    def size(self) -> int:
        return math.prod(self.as_tuple())

    @property
    def racks(self) -> int:
        return self.pods * self.rack_rows * self.rack_cols

    @property
    def rack_size(self) -> int:
        return self.boards * self.npus

    def contains(self, a: Address) -> bool:
        return all(0 <= v < n for v, n in zip(a.as_tuple(), self.as_tuple()))

    def flat(self, a: Address) -> int:
        """Mixed-radix encoding, npu fastest."""
        if not self.contains(a):
            raise InvalidShapeError(f"{a} outside {self}")
        idx = 0
        for v, n in zip(a.as_tuple(), self.as_tuple()):
            idx = idx * n + v
        return idx

    def address(self, idx: int) -> Address:
        if not 0 <= idx < self.size:
            raise InvalidShapeError(f"flat index {idx} outside {self}")
        vals = []
        for n in reversed(self.as_tuple()):
            idx, v = divmod(idx, n)
            vals.append(v)
        return Address(*reversed(vals))

    def rack_index(self, a: Address) -> int:
        return (a.pod * self.rack_rows + a.rack_row) * self.rack_cols + a.rack_col


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind
    name: str
    tier: int  # 0 endpoints, 1 rack switches, 2 pod switches
    role: str
    rack: int | None = None
    plane: int | None = None
    index: int | None = None
    addr: Address | None = None

    @property
    def io_lanes(self) -> int:
        return IO_LANES[self.kind]


@dataclass(frozen=True)
class Link:
    id: int
    a: int
    b: int
    lanes: int
    dim: Dim

    def __post_init__(self):
        if self.lanes <= 0:
            raise InvalidShapeError(f"link {self.a}-{self.b} has {self.lanes} lanes")

    @property
    def medium(self) -> Medium:
        return DIM_MEDIUM[self.dim][0]

    @property
    def length_m(self) -> int:
        return DIM_MEDIUM[self.dim][1]

    @property
    def latency_ns(self) -> float:
        return link_latency_ns(self.length_m)

    def other(self, n: int) -> int:
        return self.b if n == self.a else self.a


@dataclass(frozen=True)
class LaneAllocation:
    """Per-NPU lane split plus rack-level egress budget.

    The 4-lane mesh default is the only symmetric integral split giving
    7*4 + 7*4 + 16 = 72 lanes on an 8x8 rack.
    """

    x_lanes: int = 4
    y_lanes: int = 4
    inter_rack_lanes: int = 16
    inter_rack_link_lanes: int = 128
    uplink_lanes_per_rack: int = 256

    def npu_total(self, x_neighbors: int = 7, y_neighbors: int = 7) -> int:
        return self.x_lanes * x_neighbors + self.y_lanes * y_neighbors + self.inter_rack_lanes


@dataclass(frozen=True)
class RackConfig:
    """Back-plane switch plumbing of one UB-Mesh rack.

    18 LRS per plane (2 CPU/backup, 8 NPU-facing, 8 inter-rack) and four
    planes, giving 72 LRS and four x256 egress groups per rack.
    """

    planes: int = 4
    lrs_cpu: int = 2
    lrs_npu: int = 8
    lrs_ir: int = 8
    cpus: int = 8
    cpu_lrs_lanes: int = 4
    backup: bool = True
    backup_npu_lrs_lanes: int = 2
    backup_cpu_lrs_lanes: int = 1
    bp_npu_ir_lanes: int = 3
    bp_lanes: int = 1

    @property
    def lrs_per_plane(self) -> int:
        return self.lrs_cpu + self.lrs_npu + self.lrs_ir


HRS_RADIX = IO_LANES[NodeKind.HRS]


@dataclass(frozen=True)
class Topology:
    shape: Shape
    nodes: tuple[Node, ...]
    links: tuple[Link, ...]
    lanes: LaneAllocation = field(default_factory=LaneAllocation)
    tier: str = "Custom"
    arch: str = "nD-FM"
    rack_config: RackConfig | None = None

    # -- derived indexes (computed once, read-only afterwards) --
    @cached_property
    def adjacency(self) -> tuple[tuple[tuple[int, Link], ...], ...]:
        adj: list[list[tuple[int, Link]]] = [[] for _ in self.nodes]
        for l in self.links:
            adj[l.a].append((l.b, l))
            adj[l.b].append((l.a, l))
        return tuple(tuple(sorted(a, key=lambda t: t[0])) for a in adj)

    @cached_property
    def _pair_index(self) -> dict[tuple[int, int], Link]:
        idx = {}
        for l in self.links:
            key = (min(l.a, l.b), max(l.a, l.b))
            if key in idx:
                raise InvalidShapeError(f"parallel links between {key}")
            idx[key] = l
        return idx

    def link_between(self, u: int, v: int) -> Link | None:
        return self._pair_index.get((min(u, v), max(u, v)))

    @cached_property
    def npu_by_addr(self) -> dict[Address, int]:
        return {n.addr: n.id for n in self.nodes if n.addr is not None}

    @cached_property
    def npus(self) -> tuple[int, ...]:
        """Addressed NPUs in address order (backup NPUs excluded)."""
        return tuple(self.npu_by_addr[a] for a in sorted(self.npu_by_addr))

    def nodes_of(self, kind: NodeKind, role: str | None = None) -> list[Node]:
        return [n for n in self.nodes if n.kind is kind and (role is None or n.role == role)]

    def neighbors(self, u: int):
        return self.adjacency[u]

    def committed_lanes(self, u: int) -> int:
        return sum(l.lanes for _, l in self.adjacency[u])

    def is_connected(self, ignore=()) -> bool:
        """True when every node outside ``ignore`` reaches every other."""
        skip = set(ignore)
        live = [n.id for n in self.nodes if n.id not in skip]
        if not live:
            return True
        seen = {live[0]}
        stack = [live[0]]
        while stack:
            u = stack.pop()
            for v, _ in self.adjacency[u]:
                if v not in seen and v not in skip:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == len(live)

    def with_lanes_scaled(self, factor: int) -> "Topology":
        """Copy with every link's lane count multiplied by ``factor``."""
        links = tuple(replace(l, lanes=l.lanes * factor) for l in self.links)
        return replace(self, links=links)

    def summary(self) -> dict:
        kinds = Counter(n.kind.value for n in self.nodes)
        return {
            "arch": self.arch,
            "tier": self.tier,
            "shape": list(self.shape.as_tuple()),
            "nodes": dict(sorted(kinds.items())),
            "links": len(self.links),
            "npus": len(self.npus),
        }


class _Builder:
    def __init__(self):
        self.nodes: list[Node] = []
        self.links: list[Link] = []

    def node(self, kind, name, tier, role, **kw) -> int:
        nid = len(self.nodes)
        self.nodes.append(Node(nid, kind, name, tier, role, **kw))
        return nid

    def link(self, a, b, lanes, dim) -> int:
        lid = len(self.links)
        self.links.append(Link(lid, a, b, lanes, dim))
        return lid

    def build(self, shape, **kw) -> Topology:
        return Topology(shape=shape, nodes=tuple(self.nodes), links=tuple(self.links), **kw)


# ---------------------------------------------------------------------------
# generic nD full mesh


def build_full_mesh(n: int, lanes_per_link: int = 4) -> Topology:
    """1-D full mesh of ``n`` NPUs: every pair directly linked."""
    if n < 2:
        raise InvalidShapeError(f"full mesh needs at least 2 nodes, got {n}")
    return build_nd_full_mesh([n], [lanes_per_link])


def build_nd_full_mesh(sizes, lanes_per_dim=None) -> Topology:
    """NPU-only nD full mesh; ``sizes`` is innermost-first (X, Y, Z-row, Z-col, alpha).

    Every 1-D group along each dimension is a complete graph.
    """
    sizes = list(sizes)
    if not 1 <= len(sizes) <= 5 or any(s < 1 for s in sizes) or math.prod(sizes) < 2:
        raise InvalidShapeError(f"unsupported full-mesh sizes {sizes}")
    if lanes_per_dim is None:
        lanes_per_dim = [4] * len(sizes)
    padded = sizes + [1] * (5 - len(sizes))
    # Address order is (pod, rack_row, rack_col, board, npu) = dims (4, 3, 2, 1, 0)
    shape = Shape(pods=padded[4], rack_rows=padded[3], rack_cols=padded[2], boards=padded[1], npus=padded[0])
    b = _Builder()
    for idx in range(shape.size):
        a = shape.address(idx)
        b.node(NodeKind.NPU, f"npu{idx}", 0, "npu", addr=a, rack=shape.rack_index(a))
    for d, size in enumerate(sizes):
        if size < 2:
            continue
        for idx in range(shape.size):
            coord = _coord(shape.address(idx))
            for v in range(coord[d] + 1, size):
                other = list(coord)
                other[d] = v
                j = shape.flat(_from_coord(other))
                b.link(idx, j, lanes_per_dim[d], MESH_DIMS[d])
    return b.build(shape, tier="Custom", arch=f"{len(sizes)}D-FM")


def _coord(a: Address) -> list[int]:
    """Innermost-first mesh coordinate of an address."""
    return [a.npu, a.board, a.rack_col, a.rack_row, a.pod]


def _from_coord(c) -> Address:
    return Address(pod=c[4], rack_row=c[3], rack_col=c[2], board=c[1], npu=c[0])


def mesh_coord(a: Address, dim: Dim) -> int:
    """Coordinate of ``a`` along a mesh dimension."""
    return _coord(a)[MESH_DIMS.index(dim)]


# ---------------------------------------------------------------------------
# UB-Mesh racks, pods and SuperPods


@dataclass
class _RackParts:
    npus: dict[tuple[int, int], int]
    backup: int | None
    cpus: list[int]
    lrs_cpu: dict[tuple[int, int], int]
    lrs_npu: dict[tuple[int, int], int]
    lrs_ir: dict[tuple[int, int], int]


def _build_ubmesh_rack(b: _Builder, shape: Shape, pod: int, rr: int, rc: int,
                       lanes: LaneAllocation, cfg: RackConfig) -> _RackParts:
    rack = (pod * shape.rack_rows + rr) * shape.rack_cols + rc
    tag = f"p{pod}r{rr}c{rc}"
    npus = {}
    for board, i in product(range(shape.boards), range(shape.npus)):
        a = Address(pod, rr, rc, board, i)
        npus[board, i] = b.node(NodeKind.NPU, f"{tag}.npu{board}.{i}", 0, "npu", rack=rack, addr=a)
    # 2D full mesh: X within a board, Y across boards
    for board in range(shape.boards):
        for i, j in combinations(range(shape.npus), 2):
            b.link(npus[board, i], npus[board, j], lanes.x_lanes, Dim.X)
    for i in range(shape.npus):
        for b1, b2 in combinations(range(shape.boards), 2):
            b.link(npus[b1, i], npus[b2, i], lanes.y_lanes, Dim.Y)

    backup = None
    if cfg.backup:
        backup = b.node(NodeKind.NPU, f"{tag}.npuB", 0, "backup", rack=rack)
    cpus = [b.node(NodeKind.CPU, f"{tag}.cpu{k}", 0, "cpu", rack=rack) for k in range(cfg.cpus)]

    lrs_cpu, lrs_npu, lrs_ir = {}, {}, {}
    per_plane_access = lanes.inter_rack_lanes // cfg.planes
    for p in range(cfg.planes):
        for k in range(cfg.lrs_cpu):
            lrs_cpu[p, k] = b.node(NodeKind.LRS, f"{tag}.lrs{p}.c{k}", 1, "lrs-cpu", rack=rack, plane=p, index=k)
        for k in range(cfg.lrs_npu):
            lrs_npu[p, k] = b.node(NodeKind.LRS, f"{tag}.lrs{p}.n{k}", 1, "lrs-npu", rack=rack, plane=p, index=k)
        for k in range(cfg.lrs_ir):
            lrs_ir[p, k] = b.node(NodeKind.LRS, f"{tag}.lrs{p}.r{k}", 1, "lrs-ir", rack=rack, plane=p, index=k)
        # NPUs of board k reach the plane through NPU-facing LRS k
        for (board, i), nid in npus.items():
            b.link(nid, lrs_npu[p, board % cfg.lrs_npu], per_plane_access, Dim.ACCESS)
        if backup is not None:
            for k in range(cfg.lrs_npu):
                b.link(backup, lrs_npu[p, k], cfg.backup_npu_lrs_lanes, Dim.ACCESS)
            for k in range(cfg.lrs_cpu):
                b.link(backup, lrs_cpu[p, k], cfg.backup_cpu_lrs_lanes, Dim.ACCESS)
        for c in cpus:
            for k in range(cfg.lrs_cpu):
                b.link(c, lrs_cpu[p, k], cfg.cpu_lrs_lanes, Dim.ACCESS)
        # fully connected switch plane
        plane = ([lrs_cpu[p, k] for k in range(cfg.lrs_cpu)] + [lrs_npu[p, k] for k in range(cfg.lrs_npu)]
                 + [lrs_ir[p, k] for k in range(cfg.lrs_ir)])
        ir_set = {lrs_ir[p, k] for k in range(cfg.lrs_ir)}
        npu_set = {lrs_npu[p, k] for k in range(cfg.lrs_npu)}
        for u, v in combinations(plane, 2):
            heavy = (u in npu_set and v in ir_set) or (u in ir_set and v in npu_set)
            b.link(u, v, cfg.bp_npu_ir_lanes if heavy else cfg.bp_lanes, Dim.BACKPLANE)
    return _RackParts(npus, backup, cpus, lrs_cpu, lrs_npu, lrs_ir)


def _build_ubmesh(pods: int, rack_rows: int, rack_cols: int, *, hrs: bool, tier: str,
                  lanes: LaneAllocation | None = None, cfg: RackConfig | None = None,
                  boards: int = 8, npus: int = 8) -> Topology:
    lanes = lanes or LaneAllocation()
    cfg = cfg or RackConfig()
    shape = Shape(pods, rack_rows, rack_cols, boards, npus)
    if cfg.lrs_npu != boards:
        raise InvalidShapeError("one NPU-facing LRS per board and plane is required")
    if lanes.inter_rack_lanes % cfg.planes:
        raise InvalidShapeError("inter-rack lanes must split evenly across planes")
    b = _Builder()
    racks = {}
    for pod, rr, rc in product(range(pods), range(rack_rows), range(rack_cols)):
        racks[pod, rr, rc] = _build_ubmesh_rack(b, shape, pod, rr, rc, lanes, cfg)

    n_ir = cfg.planes * cfg.lrs_ir
    mesh_neighbors = (rack_rows - 1) + (rack_cols - 1)
    if mesh_neighbors:
        per_port = lanes.inter_rack_link_lanes // n_ir
        if per_port < 1:
            raise InvalidShapeError("inter-rack link narrower than the number of inter-rack LRS")
        for pod in range(pods):
            for rr, rc in product(range(rack_rows), range(rack_cols)):
                src = racks[pod, rr, rc].lrs_ir
                for c2 in range(rc + 1, rack_cols):
                    dst = racks[pod, rr, c2].lrs_ir
                    for key in src:
                        b.link(src[key], dst[key], per_port, Dim.Z_ROW)
                for r2 in range(rr + 1, rack_rows):
                    dst = racks[pod, r2, rc].lrs_ir
                    for key in src:
                        b.link(src[key], dst[key], per_port, Dim.Z_COL)

    if hrs:
        ports = {key: [(nid, lanes.uplink_lanes_per_rack // n_ir) for _, nid in sorted(parts.lrs_ir.items())]
                 for key, parts in racks.items()}
        _attach_spines(b, ports, role="hrs", tier=2, dim=Dim.ALPHA)
    return b.build(shape, lanes=lanes, tier=tier, arch="UB-Mesh", rack_config=cfg)


def _attach_spines(b: _Builder, ports: dict, *, role: str, tier: int, dim: Dim) -> list[int]:
    """Non-oversubscribed switch layer above per-rack uplink ports.

    Port j of every rack lands on spine group j, so each spine sees one port
    per rack; the spine count is the smallest that fits all uplink lanes.
    """
    rack_keys = sorted(ports)
    port_list = ports[rack_keys[0]]
    n_ports = len(port_list)
    port_lanes = port_list[0][1]
    total = sum(l for key in rack_keys for _, l in ports[key])
    n_spines = max(1, math.ceil(total / HRS_RADIX))
    if n_spines >= n_ports:
        if n_spines % n_ports:
            n_spines += n_ports - n_spines % n_ports
        group = n_spines // n_ports
        if port_lanes % group:
            raise InvalidShapeError("uplink lanes do not split evenly across spines")
    else:
        group = 1
    spines = [b.node(NodeKind.HRS, f"hrs{s}", tier, role, index=s) for s in range(n_spines)]
    for key in rack_keys:
        for j, (nid, lanes_) in enumerate(ports[key]):
            if n_spines >= n_ports:
                for g in range(group):
                    b.link(nid, spines[j * group + g], lanes_ // group, dim)
            else:
                b.link(nid, spines[j % n_spines], lanes_, dim)
    return spines


def build_rack(lanes: LaneAllocation | None = None, cfg: RackConfig | None = None) -> Topology:
    """One UB-Mesh rack: 8x8 2D full mesh, backup NPU, CPUs and 4 LRS planes."""
    return _build_ubmesh(1, 1, 1, hrs=False, tier="Rack", lanes=lanes, cfg=cfg)


def build_pod(lanes: LaneAllocation | None = None, cfg: RackConfig | None = None,
              rack_rows: int = 4, rack_cols: int = 4) -> Topology:
    """4D full-mesh Pod: racks in a rows x cols 2D full mesh of x128 links."""
    return _build_ubmesh(1, rack_rows, rack_cols, hrs=False, tier="Pod", lanes=lanes, cfg=cfg)


def build_superpod(pods: int = 8, lanes: LaneAllocation | None = None,
                   cfg: RackConfig | None = None) -> Topology:
    """Pods joined by a non-oversubscribed HRS layer on every rack's x256 uplink."""
    if not 1 <= pods <= 8:
        raise InvalidShapeError(f"SuperPod holds 1..8 pods, got {pods}")
    return _build_ubmesh(pods, 4, 4, hrs=True, tier="SuperPod", lanes=lanes, cfg=cfg)


# ---------------------------------------------------------------------------
# baselines

BASELINE_ARCHS = ("2D-FM", "1D-FM-A", "1D-FM-B", "Clos")


def _baseline_rack(b: _Builder, shape: Shape, arch: str, rack: int, rr: int, rc: int):
    """Returns the rack's inter-rack uplink ports as (node, lanes)."""
    tag = f"r{rack}"
    npus = {}
    for board, i in product(range(shape.boards), range(shape.npus)):
        a = Address(0, rr, rc, board, i)
        npus[board, i] = b.node(NodeKind.NPU, f"{tag}.npu{board}.{i}", 0, "npu", rack=rack, addr=a)
    cpus = [b.node(NodeKind.CPU, f"{tag}.cpu{k}", 0, "cpu", rack=rack) for k in range(8)]
    ports = []
    if arch in ("1D-FM-A", "1D-FM-B"):
        for board in range(shape.boards):
            for i, j in combinations(range(shape.npus), 2):
                b.link(npus[board, i], npus[board, j], 5, Dim.X)
    if arch == "1D-FM-A":
        # 32 LRS: LRS (i, q) switches column i across boards
        for i in range(shape.npus):
            for q in range(4):
                s = b.node(NodeKind.LRS, f"{tag}.lrs{i}.{q}", 1, "lrs-xboard", rack=rack, index=i * 4 + q)
                for board in range(shape.boards):
                    b.link(npus[board, i], s, 4, Dim.ACCESS)
                for c in cpus:
                    b.link(c, s, 1, Dim.ACCESS)
        for k in range(4):
            h = b.node(NodeKind.HRS, f"{tag}.hrs{k}", 1, "hrs-leaf", rack=rack, index=k)
            for nid in npus.values():
                b.link(nid, h, 4, Dim.ACCESS)
            ports.append((h, 256))
    elif arch in ("1D-FM-B", "Clos"):
        n_hrs = 8 if arch == "1D-FM-B" else 16
        leaves = [b.node(NodeKind.HRS, f"{tag}.hrs{k}", 1, "hrs-leaf", rack=rack, index=k) for k in range(n_hrs)]
        for h in leaves:
            for nid in npus.values():
                b.link(nid, h, 4, Dim.ACCESS)
            ports.append((h, 256))
        cpu_lrs = [b.node(NodeKind.LRS, f"{tag}.lrs{k}", 1, "lrs-cpu", rack=rack, index=k) for k in range(16)]
        npu_cpu_lanes = 4 if arch == "1D-FM-B" else 8
        for idx, nid in enumerate(npus.values()):
            b.link(nid, cpu_lrs[idx % 16], npu_cpu_lanes, Dim.ACCESS)
        for c in cpus:
            for s in cpu_lrs:
                b.link(c, s, 2, Dim.ACCESS)
    else:
        raise UnsupportedArchError(arch)
    return ports


def build_baseline(arch: str, scale: int = 64) -> Topology:
    """Comparison fabrics: the four intra-rack variants, inter-racked by a Clos.

    ``2D-FM`` is the UB-Mesh rack (without backup plumbing); ``Clos`` connects
    every NPU to 16 in-rack HRS and has no NPU-NPU links.
    """
    if arch not in BASELINE_ARCHS:
        raise UnsupportedArchError(f"unsupported arch {arch!r}; expected one of {BASELINE_ARCHS}")
    if scale < 64 or scale % 64:
        raise InvalidShapeError(f"scale must be a positive multiple of 64, got {scale}")
    n_racks = scale // 64
    shape = Shape(1, 1, n_racks, 8, 8)
    if arch == "2D-FM":
        cfg = RackConfig(backup=False)
        lanes = LaneAllocation()
        b = _Builder()
        ports = {}
        for r in range(n_racks):
            parts = _build_ubmesh_rack(b, shape, 0, 0, r, lanes, cfg)
            n_ir = cfg.planes * cfg.lrs_ir
            ports[r] = [(nid, lanes.inter_rack_lanes * 64 // n_ir) for _, nid in sorted(parts.lrs_ir.items())]
        if n_racks > 1:
            _attach_spines(b, ports, role="hrs-spine", tier=2, dim=Dim.ALPHA)
        return b.build(shape, lanes=lanes, tier="Rack" if n_racks == 1 else "Custom", arch="2D-FM", rack_config=cfg)
    b = _Builder()
    ports = {r: _baseline_rack(b, shape, arch, r, 0, r) for r in range(n_racks)}
    if n_racks > 1:
        _attach_spines(b, ports, role="hrs-spine", tier=2, dim=Dim.ALPHA)
    return b.build(shape, tier="Rack" if n_racks == 1 else "Custom", arch=arch)


# ---------------------------------------------------------------------------
# inventory


def link_inventory(t: Topology) -> dict:
    """Per-medium link counts and lane-weighted shares (shares sum to 1)."""
    links = Counter()
    lanes = Counter()
    by_dim = Counter()
    for l in t.links:
        links[l.medium] += 1
        lanes[l.medium] += l.lanes
        by_dim[l.dim] += l.lanes
    total = sum(lanes.values())
    return {
        "links": {m.value: links.get(m, 0) for m in Medium},
        "lanes": {m.value: lanes.get(m, 0) for m in Medium},
        "ratios": {m.value: (lanes.get(m, 0) / total if total else 0.0) for m in Medium},
        "lanes_by_dim": {d.value: by_dim.get(d, 0) for d in Dim},
    }


def inventory_from_dims(t: Topology) -> dict:
    """Re-derive lane counts per medium purely from the dimension tags."""
    lanes = defaultdict(int)
    for l in t.links:
        lanes[DIM_MEDIUM[l.dim][0].value] += l.lanes
    return {m.value: lanes.get(m.value, 0) for m in Medium}


def rack_links(t: Topology) -> dict[tuple[int, int], int]:
    """Aggregate inter-rack lanes per rack pair (rack-level mesh links)."""
    agg = Counter()
    for l in t.links:
        if l.dim in (Dim.Z_ROW, Dim.Z_COL):
            ra, rb = t.nodes[l.a].rack, t.nodes[l.b].rack
            agg[min(ra, rb), max(ra, rb)] += l.lanes
    return dict(agg)


def rack_egress_lanes(t: Topology, rack: int = 0) -> int:
    """Lanes leaving the inter-rack LRS of ``rack`` (mesh + uplink capacity)."""
    total = 0
    for n in t.nodes:
        if n.rack == rack and n.role == "lrs-ir":
            total += sum(l.lanes for _, l in t.adjacency[n.id] if l.dim in (Dim.Z_ROW, Dim.Z_COL, Dim.ALPHA))
    return total


def plane_egress_lanes(t: Topology, rack: int = 0) -> dict[int, int]:
    """Access lanes the rack's regular NPUs feed into each switch plane."""
    out: dict[int, int] = defaultdict(int)
    for n in t.nodes:
        if n.rack == rack and n.kind is NodeKind.NPU and n.role == "npu":
            for v, l in t.adjacency[n.id]:
                if l.dim is Dim.ACCESS and t.nodes[v].plane is not None:
                    out[t.nodes[v].plane] += l.lanes
    return dict(sorted(out.items()))


def lane_budget_violations(t: Topology) -> list[tuple[str, int, int]]:
    out = []
    for n in t.nodes:
        used = t.committed_lanes(n.id)
        if used > n.io_lanes:
            out.append((n.name, used, n.io_lanes))
    return out


def hrs_count_for(racks: int, uplink_lanes: int = 256) -> int:
    return math.ceil(racks * uplink_lanes / HRS_RADIX)
