"""Acceptance criteria 1-12; each test prints one PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` and read the "acceptance
criteria" section at the end of the report.
"""

import itertools
import random
import statistics
import time

import networkx as nx
import pytest

from ubmesh.analytics import availability, mtbf, relative_cost_efficiency, savings_report
from ubmesh.collectives import check_dataflow, conflicts, hierarchical_bcast_reduce_a2a, multipath_all2all, \
    multiring_allreduce
from ubmesh.flowctl import check_deadlock
from ubmesh.planner import PlannerConfig, search
from ubmesh.routing import PathSet, RoutingTables, Strategy, enumerate_paths, make_path, oracle_step, route
from ubmesh.scenarios import default_scenarios, run_scenario
from ubmesh.simengine import FailureEvent, Flow, SimConfig, notification_delay, run, steady_rates
from ubmesh.topology import (
    BASELINE_ARCHS, LaneAllocation, NodeKind, build_baseline, build_full_mesh, build_nd_full_mesh, build_pod,
    build_rack, build_superpod, link_inventory, plane_egress_lanes, rack_links,
)
from ubmesh.workloads import REFERENCE_MOE, REFERENCE_MOE_CONFIG, ModelSpec, get_model, traffic


@pytest.fixture(scope="module")
def superpod():
    return build_superpod(8)


@pytest.fixture(scope="module")
def clos8k():
    return build_baseline("Clos", 8192)


@pytest.fixture(scope="module")
def pod():
    return build_pod()


def test_c01_reliability_arithmetic(criterion):
    vals = {"mtbf(88.9)": mtbf(88.9), "mtbf(632.8)": mtbf(632.8),
            "A(98.5h)": 100 * availability(98.5, 1.25), "A(13.8h)": 100 * availability(13.8, 1.25)}
    ok = (abs(vals["mtbf(88.9)"] - 98.5) <= 0.1 and abs(vals["mtbf(632.8)"] - 13.8) <= 0.1
          and abs(vals["A(98.5h)"] - 98.75) <= 0.1 and abs(vals["A(13.8h)"] - 91.7) <= 0.2)
    criterion(1, ok, ", ".join(f"{k}={v:.2f}" for k, v in vals.items()))


def test_c02_structural_counts(criterion, pod, superpod):
    rack = build_rack()
    npus = len(rack.nodes_of(NodeKind.NPU))
    regular = len(rack.npus)
    per_plane = {p: sum(1 for n in rack.nodes_of(NodeKind.LRS) if n.plane == p) for p in range(4)}
    egress = plane_egress_lanes(rack)
    pod_links = set(rack_links(pod).values())
    ok = (npus == 65 and regular == 64 and set(per_plane.values()) == {18} and egress == {p: 256 for p in range(4)}
          and len(pod.npus) == 1024 and pod.shape.racks == 16 and pod_links == {128}
          and len(superpod.npus) == 8192 and superpod.shape.racks == 128)
    criterion(2, ok, f"rack {regular}+{npus - regular} NPUs, LRS/plane {sorted(set(per_plane.values()))}, "
                     f"egress {list(egress.values())}; pod {len(pod.npus)} NPUs/{pod.shape.racks} racks/"
                     f"x{sorted(pod_links)}; superpod {len(superpod.npus)} NPUs/{superpod.shape.racks} racks")


def test_c03_savings(criterion, superpod, clos8k):
    r = savings_report(superpod, clos8k).reduction
    hrs, opt = 100 * r["hrs"], 100 * r["optical_module"]
    criterion(3, abs(hrs - 98) <= 3 and abs(opt - 93) <= 3, f"HRS -{hrs:.2f}%, optical modules -{opt:.2f}%")


def test_c04_link_inventory(criterion, superpod):
    r = {k: 100 * v for k, v in link_inventory(superpod)["ratios"].items()}
    p, a, o = r["passive-electrical"], r["active-electrical"], r["optical"]
    ok = abs(p - 86.7) <= 5 and abs(a - 7.2) <= 3 and abs(o - 6.0) <= 3
    criterion(4, ok, f"passive {p:.2f}%, active {a:.2f}%, optical {o:.2f}%")


def test_c05_lane_budget(criterion, pod):
    lanes = LaneAllocation()
    used = {pod.committed_lanes(n) for n in pod.npus}
    ok = lanes.npu_total() == 72 and lanes.inter_rack_lanes == 16 and used == {72}
    criterion(5, ok, f"allocation {lanes.npu_total()} lanes ({lanes.inter_rack_lanes} inter-rack), "
                     f"wired per NPU {sorted(used)}")


def test_c06_traffic_profile(criterion):
    f = traffic(REFERENCE_MOE, REFERENCE_MOE_CONFIG).fractions()
    ok = (f["TP"] > f["SP"] > 10 * f["EP"] and f["EP"] > f["DP"] > f["PP"] > 0 and f["TP"] + f["SP"] >= 90)
    criterion(6, ok, ", ".join(f"{k} {v:.2f}%" for k, v in f.items()) + f", TP+SP {f['TP'] + f['SP']:.2f}%")


def test_c07_cost_efficiency_identity(criterion):
    x = relative_cost_efficiency(0.95, 0.4657)
    criterion(7, abs(x - 2.04) <= 0.01, f"{x:.4f}x")


def _sample_pairs(t, rng, n_random, n_fixed=60):
    npus = list(t.npus)
    step = max(1, len(npus) // n_fixed)
    pairs = [(npus[0], d) for d in npus[1::step]] + [(s, npus[-1]) for s in npus[step // 2:-1:step]]
    return pairs + [tuple(rng.sample(npus, 2)) for _ in range(n_random)]


@pytest.mark.slow
def test_c08_deadlock_freedom(criterion, pod):
    presets = [("rack", build_rack(), None), ("pod", pod, 150), ("superpod", build_superpod(8), 20)]
    presets += [(f"{a}-256", build_baseline(a, 256), 200) for a in BASELINE_ARCHS]
    rng = random.Random(8)
    failures, vls, checked = [], set(), 0
    t0 = time.perf_counter()
    for name, t, n_random in presets:
        if n_random is None:
            pairs = [(s, d) for s in t.npus for d in t.npus if s != d]
        else:
            pairs = _sample_pairs(t, rng, n_random, 60 if name != "superpod" else 20)
        for strategy in Strategy:
            rep = check_deadlock(t, [route(t, s, d, strategy) for s, d in pairs])
            checked += 1
            vls |= set(rep.histogram)
            if not rep.acyclic or len(rep.histogram) > 2:
                failures.append(f"{name}/{strategy.value}")
    dt = time.perf_counter() - t0
    criterion(8, not failures and vls <= {0, 1},
              f"{checked} preset x strategy checks, VLs used {sorted(vls)}, failures {failures or 'none'}, {dt:.0f}s")


def test_c09_collective_dataflow(criterion):
    bad, checked = [], 0

    def check(tag, s, t):
        nonlocal checked
        checked += 1
        if not check_dataflow(s) or conflicts(s, t):
            bad.append(tag)

    for n in range(2, 17):
        t = build_full_mesh(n)
        for op in ("allreduce", "allgather", "reducescatter"):
            check(("mesh", n, op), multiring_allreduce(range(n), 100.0, t, op=op, expand=True), t)
        check(("a2a-line", n), multipath_all2all(range(n), 1.0, t), t)
    for r, c in itertools.product(range(1, 5), range(1, 5)):
        if r * c < 2:
            continue
        t = build_nd_full_mesh([c, r])
        for op in ("allreduce", "allgather", "reducescatter"):
            check(("grid", r, c, op), multiring_allreduce(range(r * c), 100.0, t, op=op, expand=True), t)
        check(("a2a-grid", r, c), multipath_all2all(range(r * c), 1.0, t), t)
    rack = build_rack()
    for n in range(2, 17):
        g = rack.npus[:n]
        for apr in (False, True):
            for op in ("allreduce", "allgather", "reducescatter"):
                check(("rack", n, apr, op), multiring_allreduce(g, 100.0, rack, apr, op=op, expand=True), rack)
        emap = {x: list(g) for x in g}
        for direction in ("broadcast", "reduce"):
            s = hierarchical_bcast_reduce_a2a(g, emap, rack, 1.0, direction=direction)
            checked += 1
            if not check_dataflow(s):
                bad.append(("hier", n, direction))
    criterion(9, not bad, f"{checked} schedules over groups of 2..16 nodes, failures {bad[:5] or 'none'}")


def _nx_graph(t):
    g = nx.Graph()
    g.add_nodes_from(range(len(t.nodes)))
    g.add_edges_from((l.a, l.b) for l in t.links)
    return g


def _single(t, nodes, nbytes, fid):
    p = make_path(t, nodes)
    return Flow(nodes[0], nodes[-1], nbytes, PathSet(nodes[0], nodes[-1], (p,), (1.0,)), id=fid)


def test_c10_oracle_equivalence(criterion):
    parts = {}
    # table lookup vs per-hop BFS oracle on every (node, NPU) pair
    mismatches = 0
    for t in (build_nd_full_mesh([4, 4]), build_nd_full_mesh([3, 2, 2, 2]), build_pod(rack_rows=1, rack_cols=2),
              build_baseline("2D-FM", 128), build_baseline("Clos", 64)):
        tables = RoutingTables(t)
        mismatches += sum(tables.next_hop(u, d) != oracle_step(t, u, d)
                          for u in range(len(t.nodes)) for d in t.npus if u != d)
    parts["lookup"] = mismatches == 0
    # path enumeration vs networkx simple paths, every pair of a 16-node mesh
    t = build_nd_full_mesh([4, 4], [128, 128])
    g = _nx_graph(t)
    enum_ok = True
    for s, d in itertools.permutations(range(16), 2):
        sp = nx.shortest_path_length(g, s, d)
        for detour in (0, 1):
            want = {tuple(p) for p in nx.all_simple_paths(g, s, d, cutoff=sp + detour)}
            enum_ok &= want == {p.nodes for p in enumerate_paths(t, s, d, max_detour=detour).paths}
    parts["enumeration"] = enum_ok
    # pruned vs unpruned planner search on 64 NPUs
    plan_ok = True
    for m in (get_model("LLAMA-70B"), ModelSpec("tiny-moe", 8, 16, 64, 1024, experts=4, seq_len=2048,
                                                global_batch=64)):
        a = search(m, build_rack(), PlannerConfig())
        b = search(m, build_rack(), PlannerConfig(pruned=False))
        plan_ok &= a.config == b.config and a.cost_ns == pytest.approx(b.cost_ns)
    parts["planner"] = plan_ok
    # simulator vs hand-solved max-min fixtures
    t2 = build_full_mesh(2, lanes_per_link=8)
    f1 = run(t2, [_single(t2, [0, 1], 800, "x")]).completion == {"x": pytest.approx(100.0)}
    t2 = build_full_mesh(2, lanes_per_link=4)
    f2 = run(t2, [_single(t2, [0, 1], 400, "a"), _single(t2, [0, 1], 400, "b")]).completion == \
        {"a": pytest.approx(200.0), "b": pytest.approx(200.0)}
    t4 = build_full_mesh(4, lanes_per_link=4)
    res = run(t4, [_single(t4, [0, 1], 20, "A"), _single(t4, [0, 1, 2], 8, "B"),
                   _single(t4, [1, 2], 8, "C"), _single(t4, [1, 2], 8, "D")])
    f3 = res.completion == {"A": pytest.approx(7.0), "B": pytest.approx(6.0), "C": pytest.approx(6.0),
                            "D": pytest.approx(6.0)}
    parts["simengine"] = f1 and f2 and f3
    criterion(10, all(parts.values()), ", ".join(f"{k} {'ok' if v else 'MISMATCH'}" for k, v in parts.items()))


def _single_rate(t, s, d, strategy):
    return steady_rates(t, [Flow(s, d, 1.0, route(t, s, d, strategy))])[0]


@pytest.mark.slow
def test_c11_directional_claims(criterion, pod):
    rng = random.Random(11)
    fixtures = [("mesh8", build_full_mesh(8)), ("mesh4x4", build_nd_full_mesh([4, 4])), ("rack", build_rack()),
                ("2-rack", build_pod(rack_rows=1, rack_cols=2)), ("pod", pod)]
    det_vs_short, bor_vs_det = [], []
    hop_ok, n_paths = True, 0
    for name, t in fixtures:
        for s, d in [tuple(rng.sample(list(t.npus), 2)) for _ in range(25)]:
            sh, de, bo = (_single_rate(t, s, d, x) for x in ("shortest", "detour", "borrow"))
            det_vs_short.append(de >= sh - 1e-9)
            bor_vs_det.append(bo >= de - 1e-9)
            for p in route(t, s, d, "borrow").paths:
                if p.hops >= 2:
                    n_paths += 1
                    hop_ok &= (notification_delay(t, p, SimConfig(notification="direct"))
                               < notification_delay(t, p, SimConfig(notification="hop-by-hop")))
    intra = next(s for s in default_scenarios() if s.kind == "intra-rack")
    intra.workers = 4
    rows = run_scenario(intra)
    rel = {(r["model"], r["seq_len"], r["arch"]): r["relative"] for r in rows}
    workloads = sorted({(r["model"], r["seq_len"]) for r in rows})
    order = ["Clos", "1D-FM-B", "1D-FM-A", "2D-FM"]
    ordered = all(rel[w + (a,)] >= rel[w + (b,)] - 1e-9 for w in workloads for a, b in zip(order, order[1:]))
    gaps = [1 - rel[w + ("2D-FM",)] for w in workloads]
    avg_gap, worst = statistics.mean(gaps), max(gaps)
    ok = all(det_vs_short) and all(bor_vs_det) and hop_ok and ordered and avg_gap <= 0.10
    criterion(11, ok, f"detour>=shortest {sum(det_vs_short)}/{len(det_vs_short)}, borrow>=detour "
                      f"{sum(bor_vs_det)}/{len(bor_vs_det)}, direct<hop-by-hop on {n_paths} paths {hop_ok}, "
                      f"intra-rack order {ordered}, 2D-FM gap avg {100 * avg_gap:.1f}% (worst {100 * worst:.1f}%)")


def test_c12_simulation_invariants(criterion):
    conserved = capacity = deterministic = 0
    n = 1000
    for seed in range(n):
        rng = random.Random(seed)
        t = build_nd_full_mesh([rng.randint(2, 4), rng.randint(1, 3)], [rng.randint(1, 4), rng.randint(1, 4)])
        flows = []
        for i in range(rng.randint(1, 6)):
            s, d = rng.sample(list(t.npus), 2)
            flows.append(Flow(s, d, float(rng.randint(1, 50)), route(t, s, d, rng.choice(["shortest", "detour"])),
                              start=float(rng.choice([0, 0, 3, 10])), id=i))
        events = [FailureEvent(float(rng.randint(0, 20)), rng.randrange(len(t.links)))] if seed % 2 else []
        res = run(t, flows, events)  # raises if any event boundary over-commits a link
        conserved += abs(sum(res.delivered.values()) - (res.injected - sum(res.stranded.values()))) <= 1e-6
        capacity += all(u <= 1 + 1e-9 for u in res.link_peak.values())
        deterministic += run(t, flows, events).to_dict() == res.to_dict()
    ok = conserved == capacity == deterministic == n
    criterion(12, ok, f"{n} random instances: conservation {conserved}, capacity {capacity}, "
                      f"determinism {deterministic}")
