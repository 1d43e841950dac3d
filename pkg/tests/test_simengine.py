import random

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from ubmesh.errors import InvalidConfigError
from ubmesh.routing import PathSet, make_path, route
from ubmesh.simengine import (
    FailureEvent, Flow, SimConfig, capacities, maxmin_rates, notification_delay, run, steady_rates,
)
from ubmesh.topology import build_full_mesh, build_nd_full_mesh


def single(t, nodes, nbytes, start=0.0, fid=None):
    p = make_path(t, nodes)
    return Flow(nodes[0], nodes[-1], nbytes, PathSet(nodes[0], nodes[-1], (p,), (1.0,)), start, id=fid)


def test_single_flow_single_link():
    t = build_full_mesh(2, lanes_per_link=8)
    res = run(t, [single(t, [0, 1], 800)])
    assert res.completion[0] == pytest.approx(100.0)
    assert res.link_peak[0] == pytest.approx(1.0)


def test_two_flows_share_half():
    t = build_full_mesh(2, lanes_per_link=4)
    res = run(t, [single(t, [0, 1], 400, fid="a"), single(t, [0, 1], 400, fid="b")])
    assert res.completion == {"a": pytest.approx(200.0), "b": pytest.approx(200.0)}


def test_opposite_directions_do_not_share():
    t = build_full_mesh(2, lanes_per_link=4)
    res = run(t, [single(t, [0, 1], 400, fid="a"), single(t, [1, 0], 400, fid="b")])
    assert res.completion["a"] == pytest.approx(100.0)


def test_hand_solved_water_filling():
    # A: 0->1, B: 0->1->2, C and D: 1->2; all links 4 lanes.
    # 1->2 carries B, C, D at 4/3 each; A takes the rest of 0->1 (8/3).
    # B, C, D finish at 8/(4/3) = 6; A has 20 - 16 = 4 left and finishes at 7.
    t = build_full_mesh(4, lanes_per_link=4)
    flows = [single(t, [0, 1], 20, fid="A"), single(t, [0, 1, 2], 8, fid="B"),
             single(t, [1, 2], 8, fid="C"), single(t, [1, 2], 8, fid="D")]
    res = run(t, flows)
    assert res.completion["A"] == pytest.approx(7.0)
    for k in "BCD":
        assert res.completion[k] == pytest.approx(6.0)


def _bottleneck_certificate(routes, cap, rates):
    """Max-min optimality: every flow crosses a saturated link on which it has the top rate."""
    load = {}
    for rs, x in zip(routes, rates):
        for r in rs:
            load[r] = load.get(r, 0.0) + x
    for i, rs in enumerate(routes):
        ok = False
        for r in rs:
            saturated = abs(load[r] - cap[r]) <= 1e-7 * max(1, cap[r])
            top = all(rates[i] >= rates[j] - 1e-9 for j, rj in enumerate(routes) if r in rj)
            if saturated and top:
                ok = True
        if not ok:
            return False
    return all(load[r] <= cap[r] + 1e-7 for r in load)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10 ** 9))
def test_maxmin_matches_bottleneck_oracle(seed):
    rng = random.Random(seed)
    n_res = rng.randint(1, 6)
    cap = {r: float(rng.randint(1, 8)) for r in range(n_res)}
    routes = [rng.sample(range(n_res), rng.randint(1, n_res)) for _ in range(rng.randint(1, 7))]
    rates = maxmin_rates(routes, cap)
    assert _bottleneck_certificate(routes, cap, rates)


def _random_flows(t, rng, n_flows, strategy):
    npus = t.npus
    flows = []
    for i in range(n_flows):
        s, d = rng.sample(npus, 2)
        flows.append(Flow(s, d, float(rng.randint(1, 50)), route(t, s, d, strategy),
                          start=float(rng.choice([0, 0, 3, 10])), id=i))
    return flows


@settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 10 ** 9), st.sampled_from(["shortest", "detour"]), st.booleans())
def test_sim_invariants(seed, strategy, with_failure):
    rng = random.Random(seed)
    t = build_nd_full_mesh([rng.randint(2, 4), rng.randint(1, 3)], [rng.randint(1, 4), rng.randint(1, 4)])
    flows = _random_flows(t, rng, rng.randint(1, 6), strategy)
    events = []
    if with_failure:
        events.append(FailureEvent(float(rng.randint(0, 20)), rng.randrange(len(t.links))))
    res = run(t, flows, events)  # capacity is asserted at every event boundary
    assert sum(res.delivered.values()) == pytest.approx(res.injected - sum(res.stranded.values()))
    assert all(0 <= u <= 1 + 1e-9 for u in res.link_peak.values())
    assert all(0 <= u <= 1 + 1e-9 for u in res.link_mean.values())
    total_cap = sum(capacities(t).values())
    for f in flows:
        c = res.completion[f.id]
        if c is not None:
            assert c >= f.start + f.bytes / total_cap - 1e-9
    again = run(t, flows, events)
    assert again.to_dict() == res.to_dict()


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10 ** 9))
def test_more_lanes_never_hurt_the_worst_flow(seed):
    rng = random.Random(seed)
    t = build_full_mesh(4, lanes_per_link=2)
    flows = _random_flows(t, rng, rng.randint(1, 5), "detour")
    before = sorted(steady_rates(t, flows))
    wider = t.with_lanes_scaled(2)
    wflows = [Flow(f.src, f.dst, f.bytes, f.paths, f.start, id=f.id) for f in flows]
    after = sorted(steady_rates(wider, wflows))
    assert after >= before  # lexicographic order of the sorted rate vector
    assert after[0] >= before[0] - 1e-12


def test_single_flow_completion_monotone_in_lanes():
    for lanes in (1, 2, 3, 5):
        t = build_full_mesh(4, lanes)
        t2 = build_full_mesh(4, lanes + 1)
        f = Flow(0, 1, 100.0, route(t, 0, 1, "detour"))
        f2 = Flow(0, 1, 100.0, route(t2, 0, 1, "detour"))
        assert run(t2, [f2]).completion[0] <= run(t, [f]).completion[0]


def test_per_flow_monotonicity_can_fail():
    # raising one link's capacity lets a competitor grab more of a shared link
    routes = [[0, 1], [1]]  # A crosses both links, B only the second
    slow = maxmin_rates(routes, {0: 1.0, 1: 2.0})
    fast = maxmin_rates(routes, {0: 4.0, 1: 2.0})
    assert slow[1] == pytest.approx(1.0) and fast[1] == pytest.approx(1.0)
    routes = [[0, 1], [1], [0]]
    slow = maxmin_rates(routes, {0: 1.0, 1: 2.0})
    fast = maxmin_rates(routes, {0: 4.0, 1: 2.0})
    assert fast[1] < slow[1]


def test_kill_only_path_strands_flow():
    t = build_full_mesh(2)
    res = run(t, [single(t, [0, 1], 1000)], [FailureEvent(10.0, 0)])
    assert res.completion[0] is None
    assert res.stranded[0] == pytest.approx(1000 - 40)
    assert res.delivered[0] == pytest.approx(40)


def test_kill_one_of_seven_paths_keeps_bandwidth():
    t = build_full_mesh(8)
    ps = route(t, 0, 1, "detour")
    assert len(ps) == 7
    f = Flow(0, 1, 1e6, ps)
    before = steady_rates(t, [f])[0]
    after = steady_rates(t, [f], dead={t.link_between(0, 1).id})[0]
    assert after >= 6 / 7 * before - 1e-9
    res = run(t, [f], [FailureEvent(100.0, t.link_between(0, 2).id)])
    assert res.completion[0] is not None and res.stranded[0] == 0


def test_direct_notification_faster_than_hop_by_hop():
    t = build_nd_full_mesh([4, 4])
    for s, d in [(0, 5), (0, 15), (3, 12)]:
        for p in route(t, s, d, "detour").paths:
            if p.hops >= 2:
                direct = notification_delay(t, p, SimConfig(notification="direct"))
                hop = notification_delay(t, p, SimConfig(notification="hop-by-hop"))
                assert direct < hop


def test_reroute_happens_after_stall():
    t = build_full_mesh(4)
    ps = route(t, 0, 1, "detour")
    f = Flow(0, 1, 1000.0, ps)
    lid = t.link_between(0, 1).id
    fast = run(t, [f], [FailureEvent(10.0, lid)], SimConfig(notification="direct"))
    slow = run(t, [f], [FailureEvent(10.0, lid)], SimConfig(notification="hop-by-hop", control_rtt_ns=4000))
    assert fast.completion[0] <= slow.completion[0]
    assert any(e[1] == "reroute" for e in fast.events)


def test_invalid_inputs():
    t = build_full_mesh(2)
    with pytest.raises(InvalidConfigError):
        single(t, [0, 1], 0)
    with pytest.raises(InvalidConfigError):
        run(t, [single(t, [0, 1], 10)], [FailureEvent(1.0, 99)])


def test_latency_added_when_enabled():
    t = build_full_mesh(2, 1)
    f = single(t, [0, 1], 10)
    base = run(t, [f]).completion[0]
    lat = run(t, [f], cfg=SimConfig(include_latency=True)).completion[0]
    assert lat == pytest.approx(base + t.links[0].latency_ns)
