import pytest

from ubmesh.config import deep_merge, load_config, topology_from_config
from ubmesh.errors import InvalidConfigError
from ubmesh.topology import NodeKind


def test_deep_merge_overrides_leaves_and_keeps_siblings():
    base = {"a": 1, "b": {"x": 1, "y": 2}}
    out = deep_merge(base, {"b": {"y": 3}, "c": 4})
    assert out == {"a": 1, "b": {"x": 1, "y": 3}, "c": 4}
    assert base == {"a": 1, "b": {"x": 1, "y": 2}}


def test_includes_merge_in_order(tmp_path):
    (tmp_path / "a.yaml").write_text("planner: {strategy: shortest, b_lane: 1.0}\nseed: 1\n")
    (tmp_path / "b.yaml").write_text("planner: {strategy: borrow}\n")
    (tmp_path / "main.yaml").write_text("include: [a.yaml, b.yaml]\nseed: 7\n")
    cfg = load_config(tmp_path / "main.yaml")
    assert cfg == {"planner": {"strategy": "borrow", "b_lane": 1.0}, "seed": 7}


def test_include_cycle_is_reported(tmp_path):
    (tmp_path / "a.yaml").write_text("include: b.yaml\n")
    (tmp_path / "b.yaml").write_text("include: a.yaml\n")
    with pytest.raises(InvalidConfigError, match="cycle"):
        load_config(tmp_path / "a.yaml")


@pytest.mark.parametrize("text", ["[1, 2]", "a: [unclosed"])
def test_bad_files(tmp_path, text):
    (tmp_path / "x.yaml").write_text(text)
    with pytest.raises(InvalidConfigError):
        load_config(tmp_path / "x.yaml")
    with pytest.raises(InvalidConfigError):
        load_config(tmp_path / "missing.yaml")


def test_topology_presets():
    rack = topology_from_config({"preset": "rack"})
    assert len(rack.nodes_of(NodeKind.NPU)) == 65
    clos = topology_from_config({"preset": "baseline", "arch": "Clos", "scale": 64})
    assert len(clos.npus) == 64
    mesh = topology_from_config({"preset": "mesh", "sizes": [3, 4]})
    assert len(mesh.npus) == 12


def test_lane_override_reaches_builder():
    t = topology_from_config({"preset": "rack", "lanes": {"x_lanes": 2, "y_lanes": 2}})
    assert {l.lanes for l in t.links if l.dim.value in ("X", "Y")} == {2}


@pytest.mark.parametrize("cfg", [{"preset": "torus"}, {"preset": "mesh"}, {"preset": "rack", "lanes": {"nope": 1}}])
def test_bad_topology_configs(cfg):
    with pytest.raises(InvalidConfigError):
        topology_from_config(cfg)
