"""YAML config loading with includes, plus topology construction from config.

A file may list other files under ``include``; they are loaded first (paths
relative to the including file) and deep-merged, then the file's own keys
override them.
"""

from __future__ import annotations

import copy
from pathlib import Path

import yaml

from .errors import InvalidConfigError
from .topology import LaneAllocation, RackConfig, Topology, build_baseline, build_nd_full_mesh, build_pod, \
    build_rack, build_superpod


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: str | Path, _stack: tuple = ()) -> dict:
    path = Path(path).resolve()
    if path in _stack:
        chain = " -> ".join(str(p) for p in (*_stack, path))
        raise InvalidConfigError(f"include cycle: {chain}")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except FileNotFoundError:
        raise InvalidConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as e:
        raise InvalidConfigError(f"{path}: {e}") from None
    if not isinstance(raw, dict):
        raise InvalidConfigError(f"{path}: top level must be a mapping")
    includes = raw.pop("include", []) or []
    if isinstance(includes, str):
        includes = [includes]
    merged: dict = {}
    for inc in includes:
        merged = deep_merge(merged, load_config(path.parent / inc, (*_stack, path)))
    return deep_merge(merged, raw)


def _dataclass_from(cls, d: dict | None, what: str):
    if not d:
        return None
    try:
        return cls(**d)
    except TypeError as e:
        raise InvalidConfigError(f"bad {what} fields: {e}") from None


def topology_from_config(d: dict) -> Topology:
    """Build a topology from ``{"preset": ..., ...}``.

    Presets: ``rack``, ``pod`` (``rack_rows``/``rack_cols``), ``superpod``
    (``pods``), ``baseline`` (``arch``, ``scale``) and ``mesh`` (``sizes``,
    ``lanes_per_dim``). ``lanes`` and ``rack`` override the lane plan and
    rack plumbing of UB-Mesh presets.
    """
    preset = d.get("preset", "rack")
    lanes = _dataclass_from(LaneAllocation, d.get("lanes"), "lanes")
    rack = _dataclass_from(RackConfig, d.get("rack"), "rack")
    if preset == "rack":
        return build_rack(lanes, rack)
    if preset == "pod":
        return build_pod(lanes, rack, d.get("rack_rows", 4), d.get("rack_cols", 4))
    if preset == "superpod":
        return build_superpod(d.get("pods", 8), lanes, rack)
    if preset == "baseline":
        return build_baseline(d.get("arch", "Clos"), d.get("scale", 64))
    if preset == "mesh":
        sizes = d.get("sizes")
        if not sizes:
            raise InvalidConfigError("mesh preset needs 'sizes'")
        return build_nd_full_mesh(sizes, d.get("lanes_per_dim"))
    raise InvalidConfigError(f"unknown topology preset {preset!r}")
