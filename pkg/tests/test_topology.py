import math

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from ubmesh.errors import InvalidShapeError, UnsupportedArchError
from ubmesh.topology import (
    BASELINE_ARCHS, Address, Dim, LaneAllocation, Medium, NodeKind, Shape,
    build_baseline, build_full_mesh, build_nd_full_mesh, build_pod, build_rack,
    build_superpod, inventory_from_dims, lane_budget_violations, link_inventory,
    rack_egress_lanes, rack_links,
)


def to_nx(t, nodes=None):
    g = nx.Graph()
    keep = set(nodes) if nodes is not None else set(range(len(t.nodes)))
    g.add_nodes_from(keep)
    for l in t.links:
        if l.a in keep and l.b in keep:
            g.add_edge(l.a, l.b)
    return g


@pytest.fixture(scope="module")
def rack():
    return build_rack()


@pytest.fixture(scope="module")
def superpod():
    return build_superpod(8)


def test_full_mesh_is_complete_graph():
    for n in range(2, 10):
        t = build_full_mesh(n)
        assert nx.is_isomorphic(to_nx(t), nx.complete_graph(n))


def test_full_mesh_rejects_degenerate():
    with pytest.raises(InvalidShapeError):
        build_full_mesh(1)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=3).filter(lambda s: math.prod(s) >= 2))
def test_nd_mesh_degree_and_diameter(sizes):
    t = build_nd_full_mesh(sizes)
    g = to_nx(t)
    want_degree = sum(s - 1 for s in sizes)
    assert all(d == want_degree for _, d in g.degree())
    assert nx.diameter(g) == sum(1 for s in sizes if s > 1)
    # nD full mesh equals the Cartesian product of complete graphs
    ref = nx.complete_graph(sizes[0])
    for s in sizes[1:]:
        ref = nx.cartesian_product(ref, nx.complete_graph(s))
    assert nx.is_isomorphic(g, ref)


def test_shape_flat_roundtrip():
    s = Shape(2, 3, 4, 5, 6)
    for idx in range(0, s.size, 7):
        assert s.flat(s.address(idx)) == idx
    with pytest.raises(InvalidShapeError):
        s.flat(Address(2, 0, 0, 0, 0))


def test_rack_inventory(rack):
    kinds = rack.summary()["nodes"]
    assert kinds == {"CPU": 8, "LRS": 72, "NPU": 65}
    assert len(rack.npus) == 64
    assert lane_budget_violations(rack) == []
    for nid in rack.npus:
        assert rack.committed_lanes(nid) == 72
    backup = rack.nodes_of(NodeKind.NPU, "backup")[0]
    assert rack.committed_lanes(backup.id) == 72
    for c in rack.nodes_of(NodeKind.CPU):
        assert rack.committed_lanes(c.id) == 32


def test_rack_mesh_lane_split(rack):
    npu = rack.npus[0]
    dims = {}
    for _, l in rack.neighbors(npu):
        dims[l.dim] = dims.get(l.dim, 0) + l.lanes
    assert dims == {Dim.X: 28, Dim.Y: 28, Dim.ACCESS: 16}


def test_rack_without_backup_is_vertex_symmetric_mesh(rack):
    g = to_nx(rack, rack.npus)
    assert nx.is_isomorphic(g, nx.cartesian_product(nx.complete_graph(8), nx.complete_graph(8)))
    # vertex transitivity on a smaller instance of the same construction
    small = to_nx(build_nd_full_mesh([3, 3]))
    gm = nx.algorithms.isomorphism.GraphMatcher(small, small)
    images = {m[0] for m in gm.isomorphisms_iter()}
    assert images == set(small.nodes)


def test_backup_reaches_every_npu_in_two_hops(rack):
    backup = rack.nodes_of(NodeKind.NPU, "backup")[0].id
    g = to_nx(rack)
    dist = nx.single_source_shortest_path_length(g, backup, cutoff=2)
    assert all(dist.get(n) == 2 for n in rack.npus)


def test_pod_rack_links(superpod):
    pod = build_pod()
    agg = rack_links(pod)
    assert len(agg) == 16 * 6 // 2
    assert set(agg.values()) == {128}
    assert lane_budget_violations(pod) == []
    assert rack_egress_lanes(superpod, 0) == 6 * 128 + 256


def test_superpod_counts(superpod):
    s = superpod.summary()
    assert s["npus"] == 8192
    assert s["nodes"]["HRS"] == 64
    assert s["nodes"]["LRS"] == 72 * 128
    assert lane_budget_violations(superpod) == []
    hrs = superpod.nodes_of(NodeKind.HRS)
    assert all(superpod.committed_lanes(h.id) == 512 for h in hrs)
    assert superpod.is_connected()


def test_inventory_ratios(superpod):
    inv = link_inventory(superpod)
    assert math.isclose(sum(inv["ratios"].values()), 1.0)
    assert inventory_from_dims(superpod) == inv["lanes"]
    r = inv["ratios"]
    assert abs(r[Medium.PASSIVE.value] * 100 - 86.7) <= 5
    assert abs(r[Medium.ACTIVE.value] * 100 - 7.2) <= 3
    assert abs(r[Medium.OPTICAL.value] * 100 - 6.0) <= 3


def test_link_media_follow_dimension(superpod):
    for l in superpod.links[::97]:
        if l.dim in (Dim.X, Dim.Y, Dim.ACCESS, Dim.BACKPLANE):
            assert l.medium is Medium.PASSIVE and l.length_m == 1
        elif l.dim in (Dim.Z_ROW, Dim.Z_COL):
            assert l.medium is Medium.ACTIVE
        else:
            assert l.medium is Medium.OPTICAL
        assert l.latency_ns == 50 + 5 * l.length_m


@pytest.mark.parametrize("arch", BASELINE_ARCHS)
def test_baseline_racks_within_budget(arch):
    t = build_baseline(arch, 64)
    assert len(t.npus) == 64
    assert lane_budget_violations(t) == []
    assert t.is_connected()


def test_clos_8k_switch_counts():
    t = build_baseline("Clos", 8192)
    kinds = t.summary()["nodes"]
    assert kinds["HRS"] == 3072 and kinds["LRS"] == 2048
    assert lane_budget_violations(t) == []
    inv = link_inventory(t)
    assert inv["links"][Medium.OPTICAL.value] == 131072


def test_baseline_errors():
    with pytest.raises(UnsupportedArchError):
        build_baseline("3D-Torus", 64)
    with pytest.raises(InvalidShapeError):
        build_baseline("Clos", 100)


def test_lane_allocation_default_sums():
    assert LaneAllocation().npu_total() == 72


def test_topology_is_immutable(rack):
    with pytest.raises(Exception):
        rack.links[0].lanes = 8
    assert rack.link_between(rack.npus[0], rack.npus[1]).dim is Dim.X
    assert rack.link_between(rack.npus[0], rack.npus[9]) is None


def test_plane_egress_matches_wired_egress(superpod):
    from ubmesh.topology import plane_egress_lanes

    assert plane_egress_lanes(build_rack()) == {0: 256, 1: 256, 2: 256, 3: 256}
    assert sum(plane_egress_lanes(superpod, 5).values()) == rack_egress_lanes(superpod, 5)
