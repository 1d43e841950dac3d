"""Deadlock-free flow control: virtual-lane assignment and channel dependency graphs.

Every directed channel gets a fixed ordering key: a hop class (mesh
dimension, or direction of travel through the switch hierarchy) and a rank
inside that class. A path stays on its current virtual lane while keys
strictly increase and moves to the next lane otherwise. Dependencies inside
a lane therefore always climb the key order and dependencies between lanes
only go upward, so the resulting graph cannot contain a cycle.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable

from .errors import InfeasibleVLError
from .routing import Path, PathSet
from .topology import Dim, Topology

MAX_VLS = 2

# hop classes in the order a well-behaved path visits them
HOP_CLASSES = ("X", "Y", "UP", "BP_UP", "Z_ROW", "Z_COL", "ALPHA_UP", "ALPHA_DOWN", "BETA", "BP_DOWN", "DOWN")
_CLASS_RANK = {c: i for i, c in enumerate(HOP_CLASSES)}

_ROLE_RANK = {"lrs-npu": 0, "lrs-cpu": 0, "lrs-xboard": 0, "hrs-leaf": 0, "lrs-ir": 1}


@dataclass(frozen=True, order=True)
class Channel:
    link: int
    forward: bool  # True when traversed from link.a to link.b
    vl: int = 0


@dataclass
class CDG:
    edges: dict[Channel, set[Channel]] = field(default_factory=lambda: defaultdict(set))

    @property
    def channels(self) -> set[Channel]:
        out = set(self.edges)
        for vs in self.edges.values():
            out |= vs
        return out

    def edge_count(self) -> int:
        return sum(len(v) for v in self.edges.values())


def hop_class(t: Topology, u: int, v: int) -> str:
    l = t.link_between(u, v)
    nu, nv = t.nodes[u], t.nodes[v]
    if l.dim in (Dim.X, Dim.Y, Dim.Z_ROW, Dim.Z_COL):
        return l.dim.name
    if l.dim is Dim.ACCESS:
        return "UP" if nv.tier > nu.tier else "DOWN"
    if l.dim is Dim.BACKPLANE:
        return "BP_DOWN" if _ROLE_RANK.get(nv.role, 0) < _ROLE_RANK.get(nu.role, 0) else "BP_UP"
    if l.dim is Dim.ALPHA:
        return "ALPHA_UP" if nv.tier > nu.tier else "ALPHA_DOWN"
    return "BETA"


def _mesh_rank(t: Topology, n: int, dim: str) -> int | None:
    node = t.nodes[n]
    if node.addr is not None:
        a = node.addr
        return {"X": a.npu, "Y": a.board, "Z_ROW": a.rack_col, "Z_COL": a.rack_row}.get(dim)
    if node.rack is not None and dim in ("Z_ROW", "Z_COL"):
        s = t.shape
        local = node.rack % (s.rack_rows * s.rack_cols)
        rr, rc = divmod(local, s.rack_cols)
        return rc if dim == "Z_ROW" else rr
    return None


def channel_key(t: Topology, u: int, v: int) -> tuple[int, int]:
    """Ordering key of the directed channel u->v (independent of any path)."""
    cls = hop_class(t, u, v)
    rank = _mesh_rank(t, v, cls)
    return _CLASS_RANK[cls], (rank if rank is not None else v)


def channels_of(t: Topology, path: Path, vls) -> list[Channel]:
    out = []
    for (u, v), vl in zip(zip(path.nodes, path.nodes[1:]), vls):
        l = t.link_between(u, v)
        out.append(Channel(l.id, u == l.a, vl))
    return out


def _flatten(admitted) -> list[Path]:
    paths = []
    for item in admitted:
        if isinstance(item, PathSet):
            paths.extend(item.paths)
        else:
            paths.append(item)
    return paths


def path_vls(t: Topology, path: Path) -> tuple[int, ...]:
    vls = []
    vl = 0
    prev = None
    for u, v in zip(path.nodes, path.nodes[1:]):
        key = channel_key(t, u, v)
        if prev is not None and key <= prev:
            vl += 1
        vls.append(vl)
        prev = key
    return tuple(vls)


def assign_vls(t: Topology, admitted: Iterable, *, prune: bool = False) -> dict[Path, tuple[int, ...]]:
    """VL per hop for every admitted path.

    Raises :class:`InfeasibleVLError` when a path would need more than two
    lanes, unless ``prune`` is set, in which case such paths are dropped.
    """
    vlmap = {}
    for p in _flatten(admitted):
        if p in vlmap:
            continue
        vls = path_vls(t, p)
        if vls and vls[-1] >= MAX_VLS:
            if prune:
                continue
            names = " -> ".join(t.nodes[n].name for n in p.nodes)
            raise InfeasibleVLError(f"path needs {vls[-1] + 1} virtual lanes: {names}")
        vlmap[p] = vls
    return vlmap


def build_cdg(t: Topology, admitted: Iterable, vlmap: dict) -> CDG:
    cdg = CDG()
    for p in _flatten(admitted):
        chans = channels_of(t, p, vlmap[p])
        for c1, c2 in zip(chans, chans[1:]):
            cdg.edges[c1].add(c2)
    return cdg


def verify_acyclic(cdg: CDG) -> tuple[bool, list[Channel] | None]:
    """Iterative three-colour DFS; returns (True, None) or (False, cycle)."""
    WHITE, GREY, BLACK = 0, 1, 2
    colour: dict[Channel, int] = {}
    for root in sorted(cdg.edges):
        if colour.get(root, WHITE) != WHITE:
            continue
        stack = [(root, iter(sorted(cdg.edges.get(root, ()))))]
        colour[root] = GREY
        trail = [root]
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                colour[node] = BLACK
                stack.pop()
                trail.pop()
                continue
            c = colour.get(nxt, WHITE)
            if c == GREY:
                return False, trail[trail.index(nxt):]
            if c == WHITE:
                colour[nxt] = GREY
                trail.append(nxt)
                stack.append((nxt, iter(sorted(cdg.edges.get(nxt, ())))))
    return True, None


def vl_histogram(vlmap: dict) -> dict[int, int]:
    h = Counter()
    for vls in vlmap.values():
        h.update(vls)
    return dict(sorted(h.items()))


def keys_monotone(t: Topology, path: Path, vls) -> bool:
    """Within each lane the channel keys strictly increase and lanes never drop."""
    prev_key, prev_vl = None, 0
    for (u, v), vl in zip(zip(path.nodes, path.nodes[1:]), vls):
        key = channel_key(t, u, v)
        if vl < prev_vl:
            return False
        if vl == prev_vl and prev_key is not None and key <= prev_key:
            return False
        prev_key, prev_vl = key, vl
    return True


@dataclass
class DeadlockReport:
    acyclic: bool
    paths: int
    channels: int
    edges: int
    histogram: dict[int, int]
    witness: list[Channel] | None

    def to_dict(self, t: Topology | None = None) -> dict:
        witness = None
        if self.witness is not None:
            witness = []
            for c in self.witness:
                if t is not None:
                    l = t.links[c.link]
                    a, b = (l.a, l.b) if c.forward else (l.b, l.a)
                    witness.append({"from": t.nodes[a].name, "to": t.nodes[b].name, "vl": c.vl})
                else:
                    witness.append({"link": c.link, "forward": c.forward, "vl": c.vl})
        return {
            "acyclic": self.acyclic,
            "paths": self.paths,
            "channels": self.channels,
            "edges": self.edges,
            "vl_histogram": {str(k): v for k, v in self.histogram.items()},
            "vls_used": len(self.histogram),
            "witness": witness,
        }


def check_deadlock(t: Topology, admitted: Iterable, *, prune: bool = False) -> DeadlockReport:
    paths = _flatten(admitted)
    vlmap = assign_vls(t, paths, prune=prune)
    kept = [p for p in paths if p in vlmap]
    cdg = build_cdg(t, kept, vlmap)
    ok, witness = verify_acyclic(cdg)
    return DeadlockReport(ok, len(vlmap), len(cdg.channels), cdg.edge_count(), vl_histogram(vlmap), witness)
