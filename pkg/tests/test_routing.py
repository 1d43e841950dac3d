import random

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from ubmesh.errors import HeaderError, MalformedHeaderError, NoRouteError
from ubmesh.routing import (
    SRHeader, Strategy, RoutingTables, decode_step, encode_sr, enumerate_paths,
    lookup, make_path, oracle_step, route, shortest_path, walk,
)
from ubmesh.topology import (
    Address, Dim, NodeKind, build_baseline, build_full_mesh, build_nd_full_mesh,
    build_pod, build_rack, build_superpod,
)


def nx_graph(t):
    g = nx.Graph()
    g.add_nodes_from(range(len(t.nodes)))
    g.add_edges_from((l.a, l.b) for l in t.links)
    return g


def test_one_dim_mesh_detour_count():
    t = build_full_mesh(8)
    ps = enumerate_paths(t, 0, 1, max_detour=1)
    assert len(ps) == 7
    assert sum(p.hops == 1 for p in ps.paths) == 1


def test_two_dim_mesh_minimal_paths():
    t = build_nd_full_mesh([8, 8])
    ps = enumerate_paths(t, 0, 9, max_detour=0)
    assert len(ps) == 2
    assert {p.dims for p in ps.paths} == {(Dim.X, Dim.Y), (Dim.Y, Dim.X)}


@pytest.mark.parametrize("detour", [0, 1, 2])
def test_path_counts_match_exhaustive_dfs(detour):
    t = build_nd_full_mesh([4, 4], [128, 128])
    g = nx_graph(t)
    rng = random.Random(3)
    for _ in range(6):
        s, d = rng.sample(range(16), 2)
        sp = nx.shortest_path_length(g, s, d)
        want = {tuple(p) for p in nx.all_simple_paths(g, s, d, cutoff=sp + detour)}
        got = {p.nodes for p in enumerate_paths(t, s, d, max_detour=detour).paths}
        assert got == want


def test_enumerate_errors():
    t = build_full_mesh(4)
    with pytest.raises(NoRouteError):
        enumerate_paths(t, 2, 2)


def _all_pairs_match(t):
    tables = RoutingTables(t)
    for u in range(len(t.nodes)):
        for d in t.npus:
            if u != d:
                assert tables.next_hop(u, d) == oracle_step(t, u, d), (t.nodes[u].name, t.nodes[d].name)


@pytest.mark.parametrize("build", [
    lambda: build_nd_full_mesh([4, 4]),
    lambda: build_nd_full_mesh([3, 2, 2, 2]),
    lambda: build_pod(rack_rows=1, rack_cols=2),
    lambda: build_baseline("2D-FM", 128),
    lambda: build_baseline("Clos", 64),
], ids=["2d", "4d", "ubmesh-2rack", "2dfm-2rack", "clos"])
def test_linear_lookup_matches_full_table_oracle(build):
    _all_pairs_match(build())


def test_lookup_examples():
    t = build_superpod(2)
    tables = RoutingTables(t)
    src = t.npu_by_addr[Address(0, 0, 0, 2, 3)]
    table = tables.table(src)
    assert len(table.segments) <= 7
    # same board: the direct X neighbour
    nxt = lookup(Address(0, 0, 0, 2, 6), table, t)
    assert nxt == t.npu_by_addr[Address(0, 0, 0, 2, 6)]
    # another pod: straight up to the rack's switch plane
    up = lookup(Address(1, 2, 1, 0, 0), table, t)
    assert t.nodes[up].kind is NodeKind.LRS
    with pytest.raises(NoRouteError):
        lookup(Address(5, 0, 0, 0, 0), table, t)


def test_table_walk_is_the_shortest_route():
    t = build_pod(rack_rows=2, rack_cols=2)
    tables = RoutingTables(t)
    rng = random.Random(0)
    for _ in range(30):
        s, d = rng.sample(t.npus, 2)
        assert tuple(tables.walk(s, d)) == shortest_path(t, s, d).nodes


def test_header_is_eight_bytes_and_roundtrips():
    h = SRHeader(3, 0b101000000101, (1, 2, 3, 4, 5, 255))
    raw = h.to_bytes()
    assert len(raw) == 8
    assert SRHeader.from_bytes(raw) == h
    assert raw[0] & 0xF == 3


def test_zero_bitmap_is_table_forwarding():
    h = SRHeader()
    for _ in range(12):
        mode, ins, h = decode_step(h)
        assert mode == "table" and ins is None
    with pytest.raises(MalformedHeaderError):
        decode_step(h)


def test_seven_sr_hops_rejected():
    t = build_full_mesh(14)
    tables = RoutingTables(t)
    p = make_path(t, [0, 2, 3, 4, 5, 6, 7, 8, 1])
    with pytest.raises(HeaderError):
        encode_sr(p, t, tables)
    six = make_path(t, [0, 2, 3, 4, 5, 6, 7, 1])
    h = encode_sr(six, t, tables)
    assert bin(h.bitmap).count("1") == 6


def test_too_many_hops_rejected():
    t = build_full_mesh(16)
    with pytest.raises(HeaderError):
        encode_sr(make_path(t, list(range(14))), t, RoutingTables(t))


def test_malformed_instruction_index():
    h = SRHeader(11, 0xFFF, (0,) * 6)
    with pytest.raises(MalformedHeaderError):
        decode_step(h)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(2, 5), min_size=1, max_size=3), st.integers(0, 10 ** 6))
def test_sr_roundtrip_reproduces_hops(sizes, seed):
    t = build_nd_full_mesh(sizes)
    tables = RoutingTables(t)
    rng = random.Random(seed)
    n = len(t.nodes)
    s, d = rng.sample(range(n), 2)
    # random simple walk of bounded length ending at d
    ps = enumerate_paths(t, s, d, max_detour=2)
    p = rng.choice(ps.paths)
    try:
        h = encode_sr(p, t, tables)
    except HeaderError:
        return
    assert walk(h, s, d, t, tables) == list(p.nodes)
    modes = h.modes(p.hops)
    for i, (u, v) in enumerate(zip(p.nodes, p.nodes[1:])):
        assert modes[i] == (tables.next_hop(u, d) != v)


@pytest.fixture(scope="module")
def pod():
    return build_pod()


def test_strategy_nesting_and_weights(pod):
    rng = random.Random(7)
    for _ in range(12):
        s, d = rng.sample(pod.npus, 2)
        sets = [route(pod, s, d, st_) for st_ in Strategy]
        names = [set(ps.paths) for ps in sets]
        assert names[0] <= names[1] <= names[2]
        for ps in sets:
            assert abs(sum(ps.weights) - 1) < 1e-9
            assert all(p.is_valid(pod) for p in ps.paths)
            assert all(p.detour == p.hops - shortest_path(pod, s, d).hops for p in ps.paths)


def test_shortest_on_direct_pair():
    t = build_full_mesh(4)
    ps = route(t, 0, 1, "shortest")
    assert len(ps) == 1 and ps.weights == (1.0,)


def test_detour_on_rack_row_beats_shortest():
    row = build_full_mesh(4, 128)
    short = route(row, 0, 1, "shortest").aggregate_lanes(row)
    detour = route(row, 0, 1, "detour").aggregate_lanes(row)
    assert detour > short


def test_borrow_adds_switch_path():
    t = build_rack()
    s, d = t.npus[0], t.npus[1]
    det = route(t, s, d, "detour")
    bor = route(t, s, d, "borrow")
    extra = set(bor.paths) - set(det.paths)
    assert extra and all(any(t.nodes[n].kind is NodeKind.LRS for n in p.nodes) for p in extra)


def test_weights_follow_bottleneck():
    t = build_pod(rack_rows=1, rack_cols=2)
    ps = route(t, t.npus[0], t.npus[64], "detour")
    bn = [p.bottleneck(t) for p in ps.paths]
    for (p, w), b in zip(ps, bn):
        assert w == pytest.approx(b / sum(bn))
