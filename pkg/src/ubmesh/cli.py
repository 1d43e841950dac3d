"""Command-line entry point: ``ubmesh <subcommand> [options]``.

Every subcommand builds a :class:`Report` (named tables, JSON documents and
figures). Without ``--out-dir`` the report goes to stdout; with it, each
table lands in ``<name>.csv`` or ``<name>.json`` next to its figures and a
``manifest.json`` holding input and output hashes. Errors are printed to
stderr as one JSON object and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import platform
import random
import re
import sys
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

from .config import load_config, topology_from_config
from .errors import InvalidConfigError, NoRouteError, UBMeshError

EXIT_ERROR = 2
EXIT_INTERNAL = 3


@dataclass
class Report:
    tables: dict[str, list[dict]] = field(default_factory=dict)
    docs: dict[str, dict] = field(default_factory=dict)
    figures: dict[str, object] = field(default_factory=dict)
    inputs: list[Path] = field(default_factory=list)


def _jsonable(x):
    if isinstance(x, float):
        return round(x, 9)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def csv_text(rows: list[dict]) -> str:
    if not rows:
        return ""
    cols = list(dict.fromkeys(k for r in rows for k in r))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (round(v, 9) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("ubmesh", "matplotlib", "pyyaml"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _args_record(args) -> dict:
    skip = {"func", "out_dir"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def emit(rep: Report, args) -> None:
    fmt = args.format
    if args.out_dir is None:
        if fmt == "csv" and rep.tables:
            parts = []
            for name, rows in rep.tables.items():
                parts.append(f"# {name}\n{csv_text(rows)}")
            sys.stdout.write("\n".join(parts))
        else:
            sys.stdout.write(dumps({**rep.docs, **rep.tables}))
        return
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, str] = {}

    def put(name: str, data: bytes):
        (out / name).write_bytes(data)
        written[name] = sha256(data)

    for name, rows in rep.tables.items():
        if fmt == "csv":
            put(f"{name}.csv", csv_text(rows).encode())
        else:
            put(f"{name}.json", dumps(rows).encode())
    for name, doc in rep.docs.items():
        put(f"{name}.json", dumps(doc).encode())
    if not args.no_figures:
        from .plotting import save

        for name, fig in rep.figures.items():
            path = save(fig, out / f"{name}.png")
            written[path.name] = sha256(path.read_bytes())
    manifest = {
        "command": args.command,
        "args": _args_record(args),
        "inputs": {str(p): sha256(Path(p).read_bytes()) for p in rep.inputs},
        "outputs": dict(sorted(written.items())),
        "versions": _versions(),
    }
    (out / "manifest.json").write_text(dumps(manifest))
    print(str(out / "manifest.json"))


# ---------------------------------------------------------------------------
# shared option groups


def _topology_options(p: argparse.ArgumentParser, default_preset: str = "rack"):
    g = p.add_argument_group("topology")
    g.add_argument("--topology", metavar="YAML", help="topology config file (overrides the preset flags)")
    g.add_argument("--preset", default=default_preset, choices=["rack", "pod", "superpod", "baseline", "mesh"])
    g.add_argument("--arch", default="Clos", help="baseline architecture (2D-FM, 1D-FM-A, 1D-FM-B, Clos)")
    g.add_argument("--scale", type=int, default=64, help="baseline NPU count")
    g.add_argument("--pods", type=int, default=8, help="pods in a superpod")
    g.add_argument("--sizes", default=None, help="mesh sizes, comma separated (mesh preset)")


def topology_dict(args) -> dict:
    if args.topology:
        cfg = load_config(args.topology)
        return cfg.get("topology", cfg)
    d = {"preset": args.preset, "arch": args.arch, "scale": args.scale, "pods": args.pods}
    if args.sizes:
        d["sizes"] = [int(x) for x in args.sizes.split(",")]
    return d


def build_topology(args, rep: Report):
    if args.topology:
        rep.inputs.append(Path(args.topology))
    return topology_from_config(topology_dict(args))


def node_id(t, ref: str | int) -> int:
    """Node by id or by name."""
    if isinstance(ref, int) or str(ref).isdigit():
        i = int(ref)
        if not 0 <= i < len(t.nodes):
            raise InvalidConfigError(f"no node {i}; the topology has {len(t.nodes)} nodes")
        return i
    for n in t.nodes:
        if n.name == ref:
            return n.id
    raise InvalidConfigError(f"no node named {ref!r}")


def parse_group(t, spec: str) -> tuple[int, ...]:
    """``rack:R``, ``board:R:B``, ``first:N`` or a comma list of ids/names."""
    kind, _, rest = spec.partition(":")
    if kind in ("rack", "board", "first") and not re.fullmatch(r"\d+" if kind != "board" else r"\d+:\d+", rest):
        raise InvalidConfigError(f"group {spec!r}: expected rack:R, board:R:B or first:N")
    if kind == "rack" and rest:
        g = tuple(n for n in t.npus if t.nodes[n].rack == int(rest))
    elif kind == "board" and rest:
        r, b = (int(x) for x in rest.split(":"))
        g = tuple(n for n in t.npus if t.nodes[n].rack == r and t.nodes[n].addr.board == b)
    elif kind == "first" and rest:
        g = tuple(t.npus[: int(rest)])
    else:
        g = tuple(node_id(t, x.strip()) for x in spec.split(",") if x.strip())
    if not g:
        raise InvalidConfigError(f"group {spec!r} is empty")
    return g


# ---------------------------------------------------------------------------
# subcommands


def cmd_topo(args) -> Report:
    from .topology import lane_budget_violations, link_inventory, plane_egress_lanes, rack_egress_lanes

    rep = Report()
    t = build_topology(args, rep)
    rep.tables["nodes"] = [
        {"id": n.id, "name": n.name, "kind": n.kind.value, "role": n.role, "tier": n.tier, "rack": n.rack,
         "plane": n.plane, "addr": ".".join(map(str, n.addr.as_tuple())) if n.addr else ""}
        for n in t.nodes
    ]
    rep.tables["links"] = [
        {"id": l.id, "a": t.nodes[l.a].name, "b": t.nodes[l.b].name, "lanes": l.lanes, "dim": l.dim.value,
         "medium": l.medium.value, "length_m": l.length_m}
        for l in t.links
    ]
    inv = link_inventory(t)
    rep.docs["inventory"] = {
        "summary": t.summary(),
        "inventory": inv,
        "rack0_egress_lanes": rack_egress_lanes(t) if t.arch == "UB-Mesh" else None,
        "rack0_plane_egress_lanes": plane_egress_lanes(t) if t.arch == "UB-Mesh" else None,
        "lane_budget_violations": [list(v) for v in lane_budget_violations(t)],
    }
    return rep


def cmd_route(args) -> Report:
    from .errors import HeaderError
    from .routing import RoutingTables, encode_sr, route

    rep = Report()
    t = build_topology(args, rep)
    src, dst = node_id(t, args.src), node_id(t, args.dst)
    if src == dst:
        raise NoRouteError("source and destination are the same node")
    ps = route(t, src, dst, args.strategy, args.max_detour)
    tables = RoutingTables(t)
    rows = []
    for i, (p, w) in enumerate(ps):
        try:
            hdr = encode_sr(p, t, tables).to_bytes().hex()
        except HeaderError as e:
            hdr = f"unencodable: {e}"
        rows.append({"path": i, "hops": p.hops, "detour": p.detour, "weight": w,
                     "bottleneck_lanes": p.bottleneck(t), "latency_ns": p.latency_ns(t),
                     "nodes": " > ".join(t.nodes[n].name for n in p.nodes), "sr_header": hdr})
    rep.tables["paths"] = rows
    rep.docs["pathset"] = {"src": t.nodes[src].name, "dst": t.nodes[dst].name, "strategy": args.strategy,
                           "paths": len(ps), "aggregate_lanes": ps.aggregate_lanes(t)}
    return rep


def _pairs(t, args) -> list[tuple[int, int]]:
    npus = list(t.npus)
    if len(npus) * (len(npus) - 1) <= args.pairs:
        return [(s, d) for s in npus for d in npus if s != d]
    rng = random.Random(args.seed)
    return [tuple(rng.sample(npus, 2)) for _ in range(args.pairs)]


def cmd_verify_deadlock(args) -> Report:
    from .flowctl import check_deadlock
    from .routing import route

    rep = Report()
    t = build_topology(args, rep)
    pairs = _pairs(t, args)
    pss = [route(t, s, d, args.strategy) for s, d in pairs]
    r = check_deadlock(t, pss)
    doc = r.to_dict(t)
    doc.update(strategy=args.strategy, pairs=len(pairs), sampled=len(pairs) < len(t.npus) * (len(t.npus) - 1))
    rep.docs["deadlock"] = doc
    rep.tables["vl_histogram"] = [{"vl": k, "hops": v} for k, v in sorted(r.histogram.items())]
    return rep


def cmd_sim(args) -> Report:
    from .routing import route
    from .simengine import FailureEvent, Flow, SimConfig, run

    rep = Report()
    if args.config:
        cfg = load_config(args.config)
        rep.inputs.append(Path(args.config))
        t = topology_from_config(cfg.get("topology", {"preset": "rack"}))
    else:
        cfg = {}
        t = build_topology(args, rep)
    strategy = cfg.get("strategy", args.strategy)
    flows = []
    specs = cfg.get("flows")
    if specs is None:
        rng = random.Random(args.seed)
        specs = [{"src": s, "dst": d, "bytes": args.bytes}
                 for s, d in (rng.sample(list(t.npus), 2) for _ in range(args.flows))]
    for i, f in enumerate(specs):
        src, dst = node_id(t, f["src"]), node_id(t, f["dst"])
        ps = route(t, src, dst, f.get("strategy", strategy))
        flows.append(Flow(src, dst, float(f["bytes"]), ps, float(f.get("start", 0.0)), id=f.get("id", i)))
    events = []
    for e in cfg.get("failures", []):
        if "link" in e:
            events.append(FailureEvent(float(e["time"]), int(e["link"]), "link-down"))
        else:
            events.append(FailureEvent(float(e["time"]), node_id(t, e["node"]), "npu-down"))
    try:
        sim_cfg = SimConfig(**cfg.get("sim", {}))
    except TypeError as e:
        raise InvalidConfigError(f"bad sim fields: {e}") from None
    res = run(t, flows, events, sim_cfg)
    rep.docs["sim_result"] = res.to_dict()
    rep.tables["link_utilization"] = [
        {"link": lid, "a": t.nodes[t.links[lid].a].name, "b": t.nodes[t.links[lid].b].name,
         "dim": t.links[lid].dim.value, "lanes": t.links[lid].lanes, "peak": res.link_peak[lid],
         "mean": res.link_mean.get(lid, 0.0)}
        for lid in sorted(res.link_peak) if res.link_peak[lid] > 0
    ]
    return rep


def cmd_collective(args) -> Report:
    from .collectives import (
        check_dataflow, comm_cost, conflicts, direct_all2all, hierarchical_bcast_reduce_a2a, multipath_all2all,
        multiring_allreduce, p2p, replay, tier_bytes,
    )
    from .errors import NotMeshEmbeddableError
    from .simengine import SimConfig

    rep = Report()
    t = build_topology(args, rep)
    g = parse_group(t, args.group)
    checked = None
    if args.op in ("allreduce", "allgather", "reducescatter"):
        s = multiring_allreduce(g, args.bytes, t, args.apr, op=args.op, strategy=args.strategy)
        if len(g) <= 16:  # the symbolic check needs one phase per ring step
            checked = multiring_allreduce(g, args.bytes, t, args.apr, op=args.op, expand=True,
                                          strategy=args.strategy)
    elif args.op == "all2all":
        try:
            s = multipath_all2all(g, args.bytes, t)
        except NotMeshEmbeddableError:
            s = direct_all2all({x: list(g) for x in g}, args.bytes, t, args.strategy)
    elif args.op == "hier-a2a":
        s = hierarchical_bcast_reduce_a2a(g, {x: list(g) for x in g}, t, args.bytes)
    else:
        if len(g) != 2:
            raise InvalidConfigError(f"p2p needs exactly two nodes, got {len(g)}")
        s = p2p(g[0], g[1], args.bytes, t, args.strategy)
    ok = None
    if checked is not None:
        ok = check_dataflow(checked)
    elif args.op in ("all2all", "hier-a2a"):
        ok = check_dataflow(s)
    summary = {"op": s.op, "group_size": len(g), "bytes": args.bytes, "rings": len(s.rings),
               "phases": len(s.phases), "cost": comm_cost(s, t, args.b_lane),
               "dataflow_ok": ok, "conflicts": len(conflicts(s, t)),
               "tier_bytes": tier_bytes(s, t)}
    if args.replay:
        summary["replay"] = replay(s, t, SimConfig(b_lane=args.b_lane))
    rep.docs["summary"] = summary
    rep.docs["schedule"] = s.to_dict(t)
    rep.tables["transfers"] = [
        {"phase": i, "repeat": ph.repeat, "src": t.nodes[tr.src].name, "dst": t.nodes[tr.dst].name,
         "bytes": tr.bytes, "mode": tr.mode, "paths": len(tr.paths)}
        for i, ph in enumerate(s.phases) for tr in ph.transfers
    ]
    return rep


def _model(args):
    from .workloads import get_model

    m = get_model(args.model)
    over = {k: getattr(args, k) for k in ("seq_len", "global_batch", "micro_batch") if getattr(args, k)}
    return m.with_(**over) if over else m


def cmd_traffic(args) -> Report:
    from .plotting import traffic_figure
    from .workloads import REFERENCE_MOE, REFERENCE_MOE_CONFIG, ParallelismConfig, traffic

    rep = Report()
    m = _model(args)
    given = {k: getattr(args, k) for k in ("tp", "sp", "ep", "pp", "dp") if getattr(args, k)}
    if m.name == REFERENCE_MOE.name and not given:
        p = REFERENCE_MOE_CONFIG
    else:
        p = ParallelismConfig(**given)
    prof = traffic(m, p)
    rep.tables["traffic"] = prof.rows()
    rep.docs["profile"] = {"model": m.to_dict(), "config": p.to_dict(), "total_gib": prof.total / (1 << 30)}
    rep.figures["traffic"] = traffic_figure(prof.rows(), f"{m.name} {'x'.join(map(str, p.as_tuple()))}")
    return rep


def _fixed(spec: str | None) -> dict:
    if not spec:
        return {}
    out = {}
    for part in spec.split(","):
        k, _, v = part.partition("=")
        if k.strip() not in ("tp", "sp", "ep", "pp", "dp") or not v.strip().isdigit():
            raise InvalidConfigError(f"bad --fixed entry {part!r}; expected e.g. tp=8")
        out[k.strip()] = int(v)
    return out


def cmd_plan(args) -> Report:
    from .planner import PlannerConfig, search

    rep = Report()
    t = build_topology(args, rep)
    m = _model(args)
    cfg = PlannerConfig(strategy=args.strategy, use_apr=not args.no_apr, objective=args.objective,
                        memory_gib=None if args.memory_gib <= 0 else args.memory_gib, overlap=args.overlap)
    r = search(m, t, cfg, fixed=_fixed(args.fixed))
    doc = r.to_dict()
    doc["mapping"] = {k: {"tier": v["tier"], "size": v["size"]} for k, v in r.mapping.to_dict(t).items()}
    doc["tokens_per_s"] = r.throughput(m)
    rep.docs["plan"] = doc
    rep.tables["breakdown"] = [{"parallelism": k, "comm_ns": v, "tier": r.mapping.tiers.get(k, "")}
                               for k, v in r.breakdown.items()]
    rep.tables["mapping"] = [{"parallelism": k, "tier": r.mapping.tiers[k], "rank": i, "npu": t.nodes[n].name}
                             for k, g in r.mapping.groups.items() for i, n in enumerate(g)]
    return rep


def _dataclass_yaml(cls, path: str | None, rep: Report):
    if not path:
        return None
    rep.inputs.append(Path(path))
    try:
        return cls(**load_config(path))
    except TypeError as e:
        raise InvalidConfigError(f"bad {cls.__name__} fields in {path}: {e}") from None


def cmd_analyze(args) -> Report:
    from .analytics import (
        MTTR_FAST_H, AfrTable, CostTable, availability, preset_afr, relative_cost_efficiency, reliability_report,
        savings_report, tco,
    )
    from .plotting import savings_figure
    from .topology import build_baseline, build_superpod

    rep = Report()
    a = build_superpod(args.pods)
    b = build_baseline("Clos", len(a.npus))
    afr_a = _dataclass_yaml(AfrTable, args.afr_ubmesh, rep) or preset_afr("UB-Mesh")
    afr_b = _dataclass_yaml(AfrTable, args.afr_clos, rep) or preset_afr("Clos")
    costs = _dataclass_yaml(CostTable, args.costs, rep) or CostTable()
    rows = []
    for name, t, afr in (("UB-Mesh", a, afr_a), ("Clos", b, afr_b)):
        r = reliability_report(t, afr, args.mttr)
        rows.append({"system": name, **{f"afr_{k}": v for k, v in r["afr"].items()}, "afr_total": r["afr_total"],
                     "mtbf_h": r["mtbf_h"], "availability": r["availability"],
                     "availability_fast_mttr": availability(r["mtbf_h"], MTTR_FAST_H)})
    rep.tables["reliability"] = rows
    sv = savings_report(a, b)
    rep.tables["savings"] = [{"class": k, "ubmesh": sv.counts_a[k], "clos": sv.counts_b[k], "reduction": v}
                             for k, v in sv.reduction.items()]
    ta, tb = tco(a, costs), tco(b, costs)
    rel_tco = ta["tco"] / tb["tco"]
    rep.docs["cost"] = {"ubmesh": ta, "clos": tb, "relative_tco": rel_tco, "relative_perf": args.perf,
                        "relative_cost_efficiency": relative_cost_efficiency(args.perf, rel_tco)}
    rep.figures["savings"] = savings_figure(sv.reduction, f"{len(a.npus)} NPUs, UB-Mesh vs Clos")
    return rep


def cmd_run(args) -> Report:
    from .plotting import scenario_figure
    from .scenarios import Scenario, default_scenarios, run_scenario

    rep = Report()
    defaults = {s.name: s for s in default_scenarios()}
    if args.scenario in defaults:
        scenarios = [defaults[args.scenario]]
    elif args.scenario == "all":
        scenarios = list(defaults.values())
    else:
        path = Path(args.scenario)
        if not path.exists():
            raise InvalidConfigError(f"{args.scenario!r} is neither a scenario file nor one of "
                                     f"{sorted(defaults)} or 'all'")
        rep.inputs.append(path)
        raw = load_config(path)
        items = raw.get("scenarios", [raw])
        scenarios = [Scenario.from_dict(d) for d in items]
    for s in scenarios:
        if args.workers:
            s.workers = args.workers
        rows = run_scenario(s)
        rep.tables[s.name] = rows
        if "png" in s.outputs:
            rep.figures[s.name] = scenario_figure(s.kind, rows, s.name)
    return rep


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0, help="seed for sampled pairs and random flows")
    p.add_argument("--out-dir", default=None, help="write reports and a manifest here instead of stdout")
    p.add_argument("--format", choices=["csv", "json"], default="json", help="table format")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering in --out-dir mode")


def _model_options(p: argparse.ArgumentParser, default: str):
    p.add_argument("--model", default=default, help="catalog model name")
    p.add_argument("--seq-len", type=int, default=None)
    p.add_argument("--global-batch", type=int, default=None)
    p.add_argument("--micro-batch", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    from .routing import Strategy

    strategies = [s.value for s in Strategy]
    ap = argparse.ArgumentParser(prog="ubmesh", description="nD-FullMesh network modelling toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("topo", help="node and link tables plus link inventory")
    _topology_options(p)
    p.set_defaults(func=cmd_topo)

    p = sub.add_parser("route", help="path set and source-routing headers for one pair")
    _topology_options(p)
    p.add_argument("--src", required=True, help="node id or name")
    p.add_argument("--dst", required=True, help="node id or name")
    p.add_argument("--strategy", choices=strategies, default="detour")
    p.add_argument("--max-detour", type=int, default=2)
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("verify-deadlock", help="assign virtual lanes and check the dependency graph")
    _topology_options(p)
    p.add_argument("--strategy", choices=strategies, default="detour")
    p.add_argument("--pairs", type=int, default=5000, help="all pairs up to this many, else a seeded sample")
    p.set_defaults(func=cmd_verify_deadlock)

    p = sub.add_parser("sim", help="flow-level simulation")
    _topology_options(p)
    p.add_argument("--config", metavar="YAML", help="topology, flows, failures and sim settings")
    p.add_argument("--strategy", choices=strategies, default="detour")
    p.add_argument("--flows", type=int, default=16, help="random flows when the config lists none")
    p.add_argument("--bytes", type=float, default=1e6)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("collective", help="build a collective schedule and price it")
    _topology_options(p)
    p.add_argument("--op", choices=["allreduce", "allgather", "reducescatter", "all2all", "hier-a2a", "p2p"],
                   default="allreduce")
    p.add_argument("--group", default="board:0:0", help="rack:R, board:R:B, first:N or a comma list")
    p.add_argument("--bytes", type=float, default=1e6)
    p.add_argument("--apr", action="store_true", help="borrow idle links (all-path routing)")
    p.add_argument("--strategy", choices=strategies, default="detour")
    p.add_argument("--b-lane", type=float, default=1.0, help="bytes per ns per lane")
    p.add_argument("--replay", action="store_true", help="also replay the schedule in the simulator")
    p.set_defaults(func=cmd_collective)

    p = sub.add_parser("traffic", help="per-parallelism traffic table")
    _model_options(p, "MoE-2T-ref")
    for k in ("tp", "sp", "ep", "pp", "dp"):
        p.add_argument(f"--{k}", type=int, default=None)
    p.set_defaults(func=cmd_traffic)

    p = sub.add_parser("plan", help="search the parallelism space on a topology")
    _topology_options(p)
    _model_options(p, "LLAMA-70B")
    p.add_argument("--strategy", choices=strategies, default="detour")
    p.add_argument("--objective", choices=["comm", "iteration"], default="comm")
    p.add_argument("--no-apr", action="store_true")
    p.add_argument("--memory-gib", type=float, default=64.0, help="per-NPU budget; 0 disables the check")
    p.add_argument("--overlap", type=float, default=0.0)
    p.add_argument("--fixed", default=None, help="pin degrees, e.g. tp=8,pp=2")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("analyze", help="reliability, hardware savings and cost versus Clos")
    p.add_argument("--pods", type=int, default=8)
    p.add_argument("--mttr", type=float, default=1.25, help="hours")
    p.add_argument("--perf", type=float, default=1.0, help="UB-Mesh performance relative to Clos")
    p.add_argument("--afr-ubmesh", metavar="YAML", default=None)
    p.add_argument("--afr-clos", metavar="YAML", default=None)
    p.add_argument("--costs", metavar="YAML", default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("run", help="run a scenario file or a built-in scenario")
    p.add_argument("scenario", help="YAML path, a built-in name or 'all'")
    p.add_argument("--workers", type=int, default=None, help="override the scenario's worker count")
    p.set_defaults(func=cmd_run)

    for p in sub.choices.values():
        _common(p)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        emit(args.func(args), args)
    except UBMeshError as e:
        sys.stderr.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")
        return EXIT_ERROR
    except BrokenPipeError:  # stdout closed early, e.g. piped into head
        sys.stderr.close()
        return 0
    except (OSError, ValueError, KeyError) as e:
        sys.stderr.write(json.dumps({"error": type(e).__name__, "message": str(e)}, sort_keys=True) + "\n")
        return EXIT_INTERNAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
