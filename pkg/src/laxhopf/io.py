"""JSON network and scenario files, and CSV output bundles.

Inputs are checked against a JSON schema first (unknown keys rejected, every
problem reported with its path), then against the model's own rules.  All
problems surface as one :class:`ValidationError` holding the full list.

CSV outputs always carry a header and write every number fixed-point with
nine decimals, rows ordered by time then link id.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np
from jsonschema import Draft202012Validator

from .errors import DomainError, LaxHopfError, ValidationError
from .fundamental_diagram import diagram_from_dict
from .junction import NodeSpec, SignalGroup
from .network import EdgeSpec, InitialProfile, LinkSpec, MODELS, Network, Profile, Scenario

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_ID = {"type": "string", "minLength": 1}
_NUMS = {"type": "array", "items": _NUM, "minItems": 1}

DIAGRAM_SCHEMA = {
    "oneOf": [
        {"type": "object", "additionalProperties": False, "required": ["type"],
         "properties": {"type": {"const": "triangular"}, "v_free": _POS, "w_cong": _NUM,
                        "k_crit": _POS, "k_jam": _POS, "q_max": _POS}},
        {"type": "object", "additionalProperties": False, "required": ["type", "v_free", "k_jam"],
         "properties": {"type": {"const": "greenshields"}, "v_free": _POS, "k_jam": _POS}},
        {"type": "object", "additionalProperties": False, "required": ["type", "densities", "flows"],
         "properties": {"type": {"const": "piecewise_linear"},
                        "densities": {"type": "array", "items": _NONNEG, "minItems": 3},
                        "flows": {"type": "array", "items": _NONNEG, "minItems": 3}}},
    ]
}

NETWORK_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["links"],
    "properties": {
        "links": {"type": "array", "minItems": 1, "items": {
            "type": "object", "additionalProperties": False,
            "required": ["id", "length", "diagram"],
            "properties": {"id": _ID, "length": _POS, "lanes": _POS, "diagram": DIAGRAM_SCHEMA,
                           "from_node": {"type": ["string", "null"]},
                           "to_node": {"type": ["string", "null"]}}}},
        "nodes": {"type": "array", "items": {
            "type": "object", "additionalProperties": False,
            "required": ["id", "incoming", "outgoing", "splits", "priorities"],
            "properties": {
                "id": _ID,
                "incoming": {"type": "array", "items": _ID, "minItems": 1},
                "outgoing": {"type": "array", "items": _ID, "minItems": 1},
                "splits": {"type": "array", "items": {"type": "array", "items": _NUM}},
                "priorities": {"type": "array", "items": _NUM},
                "signals": {"type": "array", "items": {
                    "type": "object", "additionalProperties": False,
                    "required": ["movements", "period", "greens"],
                    "properties": {
                        "movements": {"type": "array", "items": {
                            "type": "array", "items": _ID, "minItems": 2, "maxItems": 2}},
                        "period": _POS,
                        "greens": {"type": "array", "items": {
                            "type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}}}}}}}},
        "sources": {"type": "array", "items": {
            "type": "object", "additionalProperties": False, "required": ["id", "link"],
            "properties": {"id": _ID, "link": _ID}}},
        "sinks": {"type": "array", "items": {
            "type": "object", "additionalProperties": False, "required": ["id", "link"],
            "properties": {"id": _ID, "link": _ID}}},
    },
}

_PROFILE = {
    "type": "object", "additionalProperties": False, "required": ["id", "rates"],
    "properties": {"id": _ID, "times": _NUMS, "rates": {"type": "array", "items": _NONNEG, "minItems": 1}},
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["dt", "horizon"],
    "properties": {
        "initial": {"type": "array", "items": {
            "type": "object", "additionalProperties": False, "required": ["link", "densities"],
            "properties": {"link": _ID, "densities": {"type": "array", "items": _NONNEG, "minItems": 1},
                           "breaks": _NUMS}}},
        "demands": {"type": "array", "items": _PROFILE},
        "supplies": {"type": "array", "items": _PROFILE},
        "dt": _POS,
        "horizon": _NONNEG,
        "model": {"enum": list(MODELS)},
        "seed": {"type": ["integer", "null"]},
    },
}


def _path(err) -> str:
    out = "$"
    for p in err.absolute_path:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def schema_errors(data, schema) -> list:
    """Path-qualified messages for every schema violation in ``data``."""
    errs = sorted(Draft202012Validator(schema).iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    out = []
    for e in errs:
        if e.validator == "oneOf" and isinstance(e.instance, dict) and "type" in e.instance:
            # report the branch matching the declared diagram type
            sub = [c for c in e.context if c.schema.get("properties", {}).get("type", {}).get("const")
                   == e.instance["type"]]
            if sub:
                out += [f"{_path(e)}: {c.message}" for c in sub]
                continue
            out.append(f"{_path(e)}: unknown diagram type {e.instance['type']!r}")
            continue
        out.append(f"{_path(e)}: {e.message}")
    return out


# ---------------------------------------------------------------------------
# network
# ---------------------------------------------------------------------------

def parse_network(data: dict) -> Network:
    """Network from its JSON object form; raises ValidationError listing every problem."""
    errs = schema_errors(data, NETWORK_SCHEMA)
    if errs:
        raise ValidationError(errs)
    links, nodes = [], []
    for i, d in enumerate(data["links"]):
        try:
            fd = diagram_from_dict(d["diagram"])
        except (DomainError, LaxHopfError, TypeError) as exc:
            errs.append(f"$.links[{i}].diagram: {exc}")
            continue
        links.append(LinkSpec(d["id"], float(d["length"]), float(d.get("lanes", 1)), fd,
                              d.get("from_node"), d.get("to_node")))
    for i, d in enumerate(data.get("nodes", [])):
        try:
            signals = tuple(SignalGroup(tuple(tuple(m) for m in g["movements"]), float(g["period"]),
                                        tuple((float(a), float(b)) for a, b in g["greens"]))
                            for g in d.get("signals", []))
            nodes.append(NodeSpec(d["id"], tuple(d["incoming"]), tuple(d["outgoing"]),
                                  tuple(tuple(float(v) for v in r) for r in d["splits"]),
                                  tuple(float(p) for p in d["priorities"]), signals))
        except ValidationError as exc:
            errs += [f"$.nodes[{i}]: {m}" for m in exc.errors]
    sources = tuple(EdgeSpec(d["id"], d["link"]) for d in data.get("sources", []))
    sinks = tuple(EdgeSpec(d["id"], d["link"]) for d in data.get("sinks", []))
    if errs:
        raise ValidationError(errs)
    try:
        return Network(tuple(links), tuple(nodes), sources, sinks)
    except ValidationError as exc:
        raise ValidationError([f"$: {m}" for m in exc.errors]) from None


def network_to_dict(net: Network) -> dict:
    """JSON object form of ``net``; parsing it back gives an equal network."""
    return {
        "links": [{"id": lk.link_id, "length": lk.length, "lanes": lk.lanes, "diagram": lk.diagram.to_dict(),
                   "from_node": lk.from_node, "to_node": lk.to_node} for lk in net.links],
        "nodes": [{"id": n.node_id, "incoming": list(n.incoming), "outgoing": list(n.outgoing),
                   "splits": [list(r) for r in n.splits], "priorities": list(n.priorities),
                   "signals": [{"movements": [list(m) for m in g.movements], "period": g.period,
                                "greens": [list(w) for w in g.greens]} for g in n.signals]}
                  for n in net.nodes],
        "sources": [{"id": e.edge_id, "link": e.link_id} for e in net.sources],
        "sinks": [{"id": e.edge_id, "link": e.link_id} for e in net.sinks],
    }


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------

def _profile(d, where, errs):
    times = d.get("times", [0.0])
    try:
        return Profile(tuple(float(t) for t in times), tuple(float(v) for v in d["rates"]))
    except ValidationError as exc:
        errs += [f"{where}: {m}" for m in exc.errors]
        return None


def parse_scenario(data: dict) -> Scenario:
    """Scenario from its JSON object form (schema checks only; see ``validate_scenario``)."""
    errs = schema_errors(data, SCENARIO_SCHEMA)
    if errs:
        raise ValidationError(errs)
    initial = {}
    for i, d in enumerate(data.get("initial", [])):
        if d["link"] in initial:
            errs.append(f"$.initial[{i}]: duplicate link {d['link']!r}")
        breaks = d.get("breaks")
        initial[d["link"]] = InitialProfile(tuple(float(k) for k in d["densities"]),
                                            None if breaks is None else tuple(float(b) for b in breaks))
    demands, supplies = {}, {}
    for key, out in (("demands", demands), ("supplies", supplies)):
        for i, d in enumerate(data.get(key, [])):
            if d["id"] in out:
                errs.append(f"$.{key}[{i}]: duplicate id {d['id']!r}")
            out[d["id"]] = _profile(d, f"$.{key}[{i}]", errs)
    if errs:
        raise ValidationError(errs)
    return Scenario(initial, demands, supplies, float(data["dt"]), float(data["horizon"]),
                    data.get("model", "flh"), data.get("seed"))


def scenario_to_dict(sc: Scenario) -> dict:
    """JSON object form of ``sc``; keys of every mapping are written sorted."""
    def prof(pid, p):
        return {"id": pid, "times": list(p.times), "rates": list(p.values)}

    initial = []
    for lid in sorted(sc.initial):
        p = sc.initial[lid]
        item = {"link": lid, "densities": list(p.densities)}
        if p.breaks is not None:
            item["breaks"] = list(p.breaks)
        initial.append(item)
    return {
        "initial": initial,
        "demands": [prof(k, sc.demands[k]) for k in sorted(sc.demands)],
        "supplies": [prof(k, sc.supplies[k]) for k in sorted(sc.supplies)],
        "dt": sc.dt,
        "horizon": sc.horizon,
        "model": sc.model,
        "seed": sc.seed,
    }


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def load_network(path) -> Network:
    return parse_network(_load_json(path))


def load_scenario(path) -> Scenario:
    return parse_scenario(_load_json(path))


def save_json(data: dict, path):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# CSV outputs
# ---------------------------------------------------------------------------

BOUNDARY_HEADER = ["step", "time_s", "link_id", "inflow_veh_s", "outflow_veh_s", "N_up_veh", "N_down_veh"]
PROBE_HEADER = ["link_id", "x_m", "t_s", "N_veh", "density_veh_m"]
OPS_HEADER = ["step", "link_id", "side", "eval_count"]
TIMING_HEADER = ["phase", "seconds"]


def fmt(v) -> str:
    """Fixed-point with nine decimals; negative zero is written as zero."""
    s = f"{float(v):.9f}"
    return "0.000000000" if s == "-0.000000000" else s


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_boundary_flows(result, path):
    rows = []
    for n, t in enumerate(result.times):
        for c, lid in enumerate(result.link_ids):
            rows.append([n, fmt(t), lid, fmt(result.inflow[n, c]), fmt(result.outflow[n, c]),
                         fmt(result.n_up[n, c]), fmt(result.n_down[n, c])])
    _write(path, BOUNDARY_HEADER, rows)


def write_probes(probes, path):
    """``probes`` holds ``(link_id, x, t, N, density)`` tuples; rows are sorted by time then link."""
    rows = sorted(probes, key=lambda p: (p[2], p[0], p[1]))
    _write(path, PROBE_HEADER, [[lid, fmt(x), fmt(t), fmt(n), fmt(k)] for lid, x, t, n, k in rows])


def write_ops(result, path):
    rows = []
    if result.ops is not None:
        for n in range(1, len(result.times)):
            for c, lid in enumerate(result.link_ids):
                for side in ("up", "down"):
                    rows.append([n, lid, side, int(result.ops[side][n, c])])
    _write(path, OPS_HEADER, rows)


def write_timing(timing: dict, path):
    _write(path, TIMING_HEADER, [[k, fmt(v)] for k, v in timing.items()])


def write_bundle(result, out_dir, probes=None) -> dict:
    """Write every CSV of a simulation to ``out_dir``; returns name -> path."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name + ".csv") for name in ("boundary_flows", "timing")}
    write_boundary_flows(result, paths["boundary_flows"])
    timing = dict(result.timing)
    timing["total"] = sum(result.timing.values())
    write_timing(timing, paths["timing"])
    if probes is not None:
        paths["probes"] = os.path.join(out_dir, "probes.csv")
        write_probes(probes, paths["probes"])
    if result.ops is not None:
        paths["ops"] = os.path.join(out_dir, "ops.csv")
        write_ops(result, paths["ops"])
    return paths


def read_csv(path) -> list:
    """Rows of a CSV file as dicts keyed by the header."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def read_boundary_flows(path) -> dict:
    """Boundary series as ``(steps, links)`` arrays keyed like the result fields."""
    rows = read_csv(path)
    links = sorted({r["link_id"] for r in rows})
    steps = max(int(r["step"]) for r in rows) + 1 if rows else 0
    col = {lid: c for c, lid in enumerate(links)}
    out = {"link_ids": links, "times": np.zeros(steps)}
    keys = {"inflow": "inflow_veh_s", "outflow": "outflow_veh_s", "n_up": "N_up_veh", "n_down": "N_down_veh"}
    for k in keys:
        out[k] = np.zeros((steps, len(links)))
    for r in rows:
        n, c = int(r["step"]), col[r["link_id"]]
        out["times"][n] = float(r["time_s"])
        for k, h in keys.items():
            out[k][n, c] = float(r[h])
    return out
