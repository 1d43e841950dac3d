import pytest

from ubmesh.config import load_config
from ubmesh.errors import InfeasibleParallelismError, InvalidConfigError
from ubmesh.scenarios import Scenario, default_scenarios, inter_rack_allocation, run_scenario, ubmesh_topology
from ubmesh.topology import build_rack

SMALL = [{"model": "LLAMA-70B", "seq_len": 4096, "global_batch": 64}]


def _small(**kw):
    d = {"name": "t", "kind": "intra-rack", "workloads": SMALL, "sweep": {"arch": ["2D-FM", "Clos"]},
         "topology": {"scale": 64}}
    d.update(kw)
    return Scenario.from_dict(d)


@pytest.mark.parametrize("bad, match", [
    ({"sweep": {"arch": []}}, "empty sweep"),
    ({"sweep": {}}, "empty sweep"),
    ({"sweep": {"strategy": ["detour"]}}, "must sweep"),
    ({"kind": "nope"}, "unknown scenario kind"),
    ({"workloads": []}, "no workloads"),
    ({"workloads": [{"model": "Nope"}]}, "unknown model"),
    ({"workloads": [{"seq_len": 8}]}, "needs a 'model'"),
    ({"workers": 0}, "workers"),
    ({"colour": "red"}, "unknown scenario keys"),
])
def test_validation(bad, match):
    with pytest.raises(InvalidConfigError, match=match):
        _small(**bad)


def test_missing_required_keys():
    with pytest.raises(InvalidConfigError, match="missing"):
        Scenario.from_dict({"name": "x", "kind": "intra-rack"})


def test_small_scenario_rows_and_reference():
    rows = run_scenario(_small())
    assert [r["arch"] for r in rows] == ["2D-FM", "Clos"]
    assert rows[1]["relative"] == 1.0
    assert 0.5 < rows[0]["relative"] <= 1.0
    assert all(r["iteration_ms"] >= r["compute_ms"] for r in rows)


def test_deterministic_and_worker_count_invariant():
    a = run_scenario(_small())
    b = run_scenario(_small())
    c = run_scenario(_small(workers=2))
    assert a == b == c


def test_module_errors_carry_scenario_context():
    s = _small(name="big", workloads=[{"model": "GPT4-2T"}], sweep={"arch": ["Clos"]})
    with pytest.raises(InfeasibleParallelismError) as ei:
        run_scenario(s)
    assert ei.value.context["scenario"] == "big"


def test_inter_rack_allocation_scales_plumbing():
    for lanes in (4, 8, 16, 32):
        alloc, cfg = inter_rack_allocation(lanes)
        assert alloc.inter_rack_lanes == lanes
        assert alloc.uplink_lanes_per_rack == 16 * lanes
    assert inter_rack_allocation(16)[0].uplink_lanes_per_rack == 256
    with pytest.raises(InvalidConfigError):
        inter_rack_allocation(6)


def test_ubmesh_topology_sizes():
    assert len(ubmesh_topology(64).npus) == 64
    assert len(ubmesh_topology(256).npus) == 256
    assert ubmesh_topology(64).summary() == build_rack().summary()
    with pytest.raises(InvalidConfigError):
        ubmesh_topology(100)


def test_default_and_shipped_scenarios_parse(pytestconfig):
    names = {s.name for s in default_scenarios()}
    assert names == {"intra-rack", "inter-rack", "bandwidth-sweep", "linearity"}
    root = pytestconfig.rootpath / "scenarios"
    shipped = {}
    for f in sorted(root.glob("*.yaml")):
        d = load_config(f)
        if "kind" in d:
            s = Scenario.from_dict(d)
            shipped[s.name] = s
    assert names <= set(shipped)
    for s in default_scenarios():
        assert shipped[s.name].sweep == s.sweep
