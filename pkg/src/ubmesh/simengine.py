"""Event-driven fluid simulation with max-min fair sharing.

Each flow is split across the paths of its path set in proportion to the
weights; every (flow, path) piece is a *subflow* that competes for directed
link capacity (links are full duplex, ``lanes * b_lane`` bytes/ns each way).
Rates are recomputed by progressive filling whenever something changes:
an arrival, a completion, a failure or the end of a rerouting stall.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable

from .errors import InvalidConfigError
from .routing import Path, PathSet
from .topology import Topology

EPS = 1e-9


@dataclass
class Flow:
    src: int
    dst: int
    bytes: float
    paths: PathSet
    start: float = 0.0
    priority: int = 0
    id: str | int | None = None

    def __post_init__(self):
        if not self.bytes > 0:
            raise InvalidConfigError(f"flow bytes must be positive, got {self.bytes}")
        if abs(sum(self.paths.weights) - 1.0) > 1e-6:
            raise InvalidConfigError("path weights must sum to 1")


@dataclass(frozen=True)
class FailureEvent:
    time: float
    subject: int
    kind: str = "link-down"  # or "npu-down"

    def links(self, t: Topology) -> list[int]:
        if self.kind == "link-down":
            if not 0 <= self.subject < len(t.links):
                raise InvalidConfigError(f"no link {self.subject}")
            return [self.subject]
        if self.kind == "npu-down":
            if not 0 <= self.subject < len(t.nodes):
                raise InvalidConfigError(f"no node {self.subject}")
            return [l.id for _, l in t.adjacency[self.subject]]
        raise InvalidConfigError(f"unknown failure kind {self.kind!r}")


@dataclass(frozen=True)
class SimConfig:
    b_lane: float = 1.0  # bytes per ns per lane
    notification: str = "direct"  # or "hop-by-hop"
    control_rtt_ns: float = 2000.0
    include_latency: bool = False
    check_capacity: bool = True


@dataclass
class SimResult:
    completion: dict  # flow id -> finish time (None when stranded)
    delivered: dict  # flow id -> bytes delivered
    stranded: dict  # flow id -> bytes that lost every path
    injected: float
    link_peak: dict  # link id -> peak utilisation over both directions
    link_mean: dict  # link id -> time-averaged utilisation (busiest direction)
    makespan: float
    events: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "makespan": self.makespan,
            "injected": self.injected,
            "completion": {str(k): v for k, v in self.completion.items()},
            "delivered": {str(k): v for k, v in self.delivered.items()},
            "stranded": {str(k): v for k, v in self.stranded.items() if v > 0},
            "events": [list(e) for e in self.events],
        }


# ---------------------------------------------------------------------------
# max-min allocation


def maxmin_rates(routes: list[list[int]], capacity: dict[int, float]) -> list[float]:
    """Progressive filling: max-min fair rates for ``routes`` (lists of resource ids)."""
    n = len(routes)
    rate = [0.0] * n
    if n == 0:
        return rate
    users: dict[int, list[int]] = {}
    for i, rs in enumerate(routes):
        for r in rs:
            users.setdefault(r, []).append(i)
    rem = {r: capacity[r] for r in users}
    cnt = {r: len(u) for r, u in users.items()}
    heap = [(rem[r] / cnt[r], r) for r in sorted(users)]
    heapq.heapify(heap)
    frozen = [False] * n
    unconstrained = [i for i, rs in enumerate(routes) if not rs]
    if unconstrained:
        raise InvalidConfigError("subflow without links")
    while heap:
        share, r = heapq.heappop(heap)
        if cnt[r] == 0 or abs(share - rem[r] / cnt[r]) > 1e-12 * max(1.0, share):
            continue  # stale entry
        share = max(0.0, rem[r] / cnt[r])
        touched = set()
        for i in users[r]:
            if frozen[i]:
                continue
            frozen[i] = True
            rate[i] = share
            for r2 in routes[i]:
                rem[r2] -= share
                cnt[r2] -= 1
                touched.add(r2)
        for r2 in sorted(touched):
            if cnt[r2] > 0:
                heapq.heappush(heap, (max(0.0, rem[r2]) / cnt[r2], r2))
    return rate


def directed_resource(t: Topology, u: int, v: int) -> int:
    l = t.link_between(u, v)
    return 2 * l.id + (0 if u == l.a else 1)


def path_resources(t: Topology, p: Path) -> list[int]:
    return [directed_resource(t, u, v) for u, v in zip(p.nodes, p.nodes[1:])]


def capacities(t: Topology, b_lane: float = 1.0) -> dict[int, float]:
    cap = {}
    for l in t.links:
        cap[2 * l.id] = cap[2 * l.id + 1] = l.lanes * b_lane
    return cap


def steady_rates(t: Topology, flows: Iterable[Flow], b_lane: float = 1.0, dead: set[int] | None = None) -> list[float]:
    """Aggregate max-min rate per flow with every flow active at once."""
    flows = list(flows)
    dead = dead or set()
    routes, owner = [], []
    for fi, f in enumerate(flows):
        for p, w in f.paths:
            if w <= 0 or any(l.id in dead for l in p.links(t)):
                continue
            routes.append(path_resources(t, p))
            owner.append(fi)
    rates = maxmin_rates(routes, capacities(t, b_lane))
    out = [0.0] * len(flows)
    for fi, r in zip(owner, rates):
        out[fi] += r
    return out


# ---------------------------------------------------------------------------
# event loop


@dataclass
class _Sub:
    flow: int
    path: Path
    weight: float
    res: list[int]
    links: frozenset
    remaining: float
    stalled_until: float = 0.0
    dead: bool = False


class _State:
    def __init__(self, t: Topology, flows: list[Flow], cfg: SimConfig):
        self.t = t
        self.flows = flows
        self.cfg = cfg
        self.cap = capacities(t, cfg.b_lane)
        self.dead_links: set[int] = set()
        self.subs: list[_Sub] = []
        self.by_flow: dict[int, list[int]] = {i: [] for i in range(len(flows))}
        self.started = [False] * len(flows)
        self.done_at: dict[int, float] = {}
        self.stranded = [0.0] * len(flows)
        self.events: list[tuple] = []

    def start(self, fi: int, now: float):
        f = self.flows[fi]
        self.started[fi] = True
        alive = [(p, w) for p, w in f.paths if w > 0 and not self._uses_dead(p)]
        if not alive:
            self.stranded[fi] = f.bytes
            self.events.append((now, "stranded", str(self._fid(fi))))
            return
        total = sum(w for _, w in alive)
        for p, w in alive:
            sub = _Sub(fi, p, w / total, path_resources(self.t, p), frozenset(l.id for l in p.links(self.t)),
                       f.bytes * w / total)
            self.by_flow[fi].append(len(self.subs))
            self.subs.append(sub)

    def _uses_dead(self, p: Path) -> bool:
        return any(l.id in self.dead_links for l in p.links(self.t))

    def _fid(self, fi):
        f = self.flows[fi]
        return f.id if f.id is not None else fi

    def fail(self, ev: FailureEvent, now: float) -> list[int]:
        new = set(ev.links(self.t)) - self.dead_links
        self.dead_links |= new
        hit = []
        for si, s in enumerate(self.subs):
            if s.dead or s.remaining <= EPS or not (s.links & new):
                continue
            s.dead = True
            s.stalled_until = now + notification_delay(self.t, s.path, self.cfg)
            hit.append(si)
        self.events.append((now, ev.kind, ev.subject, len(hit)))
        return hit

    def reroute(self, si: int, now: float):
        """End of a stall: move the dead subflow's bytes to surviving siblings."""
        s = self.subs[si]
        bytes_left, s.remaining = s.remaining, 0.0
        fi = s.flow
        sibs = [self.subs[j] for j in self.by_flow[fi] if not self.subs[j].dead]
        # siblings may also be healthy paths of the set that were never used
        if not sibs:
            used = {self.subs[j].path for j in self.by_flow[fi]}
            for p, w in self.flows[fi].paths:
                if w > 0 and p not in used and not self._uses_dead(p):
                    sub = _Sub(fi, p, w, path_resources(self.t, p), frozenset(l.id for l in p.links(self.t)), 0.0)
                    self.by_flow[fi].append(len(self.subs))
                    self.subs.append(sub)
                    sibs.append(sub)
        if not sibs:
            self.stranded[fi] += bytes_left
            self.events.append((now, "stranded", str(self._fid(fi)), bytes_left))
            return
        total = sum(x.weight for x in sibs)
        for x in sibs:
            x.remaining += bytes_left * x.weight / total
        self.events.append((now, "reroute", str(self._fid(fi)), len(sibs)))


def notification_delay(t: Topology, p: Path, cfg: SimConfig) -> float:
    """Time until the source learns that ``p`` broke and switches paths."""
    if cfg.notification == "direct":
        return cfg.control_rtt_ns
    if cfg.notification == "hop-by-hop":
        return sum(cfg.control_rtt_ns / 2 + l.latency_ns for l in p.links(t))
    raise InvalidConfigError(f"unknown notification mode {cfg.notification!r}")


def run(t: Topology, flows: Iterable[Flow], events: Iterable[FailureEvent] = (),
        cfg: SimConfig | None = None) -> SimResult:
    cfg = cfg or SimConfig()
    flows = list(flows)
    st = _State(t, flows, cfg)
    for ev in events:
        ev.links(t)  # validates the subject
    failures = sorted(events, key=lambda e: (e.time, e.kind, e.subject))
    arrivals = sorted(range(len(flows)), key=lambda i: (flows[i].start, i))
    ai = fi_ = 0
    now = 0.0
    util_peak: dict[int, float] = {}
    util_area: dict[int, float] = {}
    max_iter = 10 * (len(flows) + len(failures) + 10) ** 2 + 100000

    for _ in range(max_iter):
        while ai < len(arrivals) and flows[arrivals[ai]].start <= now + EPS:
            st.start(arrivals[ai], now)
            ai += 1
        while fi_ < len(failures) and failures[fi_].time <= now + EPS:
            st.fail(failures[fi_], now)
            fi_ += 1
        for si, s in enumerate(st.subs):
            if s.dead and s.remaining > EPS and s.stalled_until <= now + EPS:
                st.reroute(si, now)
        _mark_done(st, now)

        active = [si for si, s in enumerate(st.subs) if not s.dead and s.remaining > EPS]
        rates = maxmin_rates([st.subs[si].res for si in active], st.cap)
        load: dict[int, float] = {}
        for si, r in zip(active, rates):
            for res in st.subs[si].res:
                load[res] = load.get(res, 0.0) + r
        if cfg.check_capacity:
            for res, x in load.items():
                assert x <= st.cap[res] * (1 + 1e-9) + 1e-12, f"capacity exceeded on resource {res}"

        # next event
        horizon = math.inf
        for si, r in zip(active, rates):
            if r > EPS:
                horizon = min(horizon, now + st.subs[si].remaining / r)
        if ai < len(arrivals):
            horizon = min(horizon, flows[arrivals[ai]].start)
        if fi_ < len(failures):
            horizon = min(horizon, failures[fi_].time)
        for s in st.subs:
            if s.dead and s.remaining > EPS:
                horizon = min(horizon, s.stalled_until)
        if horizon == math.inf:
            break
        dt = max(0.0, horizon - now)
        for res, x in load.items():
            u = x / st.cap[res]
            lid = res // 2
            util_peak[lid] = max(util_peak.get(lid, 0.0), u)
            util_area[res] = util_area.get(res, 0.0) + u * dt
        for si, r in zip(active, rates):
            s = st.subs[si]
            s.remaining -= r * dt
            if s.remaining <= EPS * max(1.0, flows[s.flow].bytes):
                s.remaining = 0.0
        now = horizon
    else:  # pragma: no cover - defensive
        raise RuntimeError("simulation did not converge")

    _mark_done(st, now)
    completion, delivered, stranded = {}, {}, {}
    injected = 0.0
    for i, f in enumerate(flows):
        fid = st._fid(i)
        injected += f.bytes
        stranded[fid] = st.stranded[i]
        delivered[fid] = f.bytes - st.stranded[i]
        if st.stranded[i] > 0:
            completion[fid] = None
        else:
            done = st.done_at.get(i, f.start)
            if cfg.include_latency:
                done += max(p.latency_ns(t) for p, w in f.paths if w > 0)
            completion[fid] = done
    finished = [c for c in completion.values() if c is not None]
    makespan = max(finished) if finished else 0.0
    link_mean = {}
    window = max(now, makespan)
    if window > 0:
        for res, area in util_area.items():
            lid = res // 2
            link_mean[lid] = max(link_mean.get(lid, 0.0), area / window)
    return SimResult(completion, delivered, stranded, injected, util_peak, link_mean, makespan, st.events)


def _mark_done(st: _State, now: float):
    for fi, subs in st.by_flow.items():
        if fi in st.done_at or not st.started[fi] or st.stranded[fi] > 0:
            continue
        if all(st.subs[j].remaining <= EPS for j in subs):
            st.done_at[fi] = now
