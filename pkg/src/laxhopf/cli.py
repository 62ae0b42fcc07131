"""Command-line entry point: ``laxhopf simulate | compare | bench``.

Validation failures exit with status 2 and print one JSON object on stderr::

    {"kind": "schema" | "cfl" | "model" | "probe" | "validation", "errors": [...]}
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import statistics
import sys

import numpy as np

from . import io
from .errors import CFLViolation, ProbeRefused, ValidationError
from .network import (MODELS, five_link_network, grid_network, probe, random_scenario, rmse_compare,
                      simulate, validate_scenario)

EXIT_OK = 0
EXIT_INVALID = 2


class _Invalid(Exception):
    def __init__(self, kind, errors):
        super().__init__(kind)
        self.kind = kind
        self.errors = list(errors)


def _csv_list(cast):
    def parse(text):
        try:
            return [cast(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"cannot parse list {text!r}") from None
    return parse


def _probe_arg(text):
    parts = text.rsplit(":", 2)
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"probe {text!r} must look like link:x:t")
    try:
        return parts[0], float(parts[1]), float(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"probe {text!r} has a non-numeric x or t") from None


def _load_network(ref):
    """A network file, or one of the shipped networks ``five-link`` and ``grid[:ROWSxCOLS]``."""
    if ref == "five-link":
        return five_link_network()
    if ref == "grid" or ref.startswith("grid:"):
        rows, cols = 10, 11
        if ":" in ref:
            try:
                rows, cols = (int(v) for v in ref.split(":", 1)[1].lower().split("x"))
            except ValueError:
                raise _Invalid("validation", [f"bad grid size in {ref!r}; expected grid:ROWSxCOLS"]) from None
        return grid_network(rows, cols)
    return io.load_network(ref)


def _check_models(models):
    bad = [m for m in models if m not in MODELS]
    if bad:
        raise _Invalid("model", [f"unknown model {m!r}; expected one of {', '.join(MODELS)}" for m in bad])


def _scenario_errors(net, sc):
    errs = validate_scenario(net, sc)
    if errs:
        kind = "cfl" if all(e.startswith("CFL") for e in errs) else (
            "model" if any(e.startswith("unknown model") for e in errs) else "validation")
        raise _Invalid(kind, errs)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    net = _load_network(args.network)
    sc = io.load_scenario(args.scenario)
    sc = sc.replace(model=args.model, dt=args.dt, horizon=args.horizon, seed=args.seed)
    _scenario_errors(net, sc)
    if args.probe and sc.model == "ltm":
        raise _Invalid("probe", ["interior probing is refused for ltm: its interior values do not converge "
                                 "to the exact solution when expansion waves are present"])
    ids = set(net.link_ids)
    bad = [f"probe {lid}:{x}:{t}: unknown link {lid!r}" for lid, x, t in args.probe if lid not in ids]
    bad += [f"probe {lid}:{x}:{t}: time outside [0, {sc.horizon}]" for lid, x, t in args.probe
            if not -1e-9 <= t <= sc.horizon + 1e-9]
    bad += [f"probe {lid}:{x}:{t}: offset outside [0, {net.link(lid).length}]" for lid, x, t in args.probe
            if lid in ids and not -1e-9 <= x <= net.link(lid).length + 1e-9]
    if bad:
        raise _Invalid("probe", bad)
    res = simulate(net, sc, record=bool(args.probe), count_ops=args.count_ops)
    probes = [(lid, x, t, *probe(res, lid, x, t)) for lid, x, t in args.probe] if args.probe else None
    paths = io.write_bundle(res, args.out, probes)
    if not args.count_ops and "ops" in paths:
        os.remove(paths.pop("ops"))
    print(f"{sc.model}: {sc.n_steps} steps on {len(net.links)} links -> {args.out}")
    return EXIT_OK


def compare_rows(net, models, seeds, dts, horizon, **scenario_kw):
    """Mean and standard deviation of network RMSE against FLH at the finest step."""
    ref_dt = min(dts)
    per = {(m, dt): [] for m in models for dt in dts}
    for seed in range(seeds):
        base = random_scenario(net, seed, dt=ref_dt, horizon=horizon, **scenario_kw)
        for dt in dts:
            _scenario_errors(net, base.replace(dt=dt))
        ref = simulate(net, base.replace(model="flh"), record=False, count_ops=False)
        for m in models:
            for dt in dts:
                res = ref if (m == "flh" and dt == ref_dt) else simulate(
                    net, base.replace(model=m, dt=dt), record=False, count_ops=False)
                per[(m, dt)].append(rmse_compare(res, ref)["network"])
    return [(m, dt, float(np.mean(v)), float(np.std(v)), len(v)) for (m, dt), v in per.items()]


def cmd_compare(args) -> int:
    _check_models(args.models)
    net = _load_network(args.network)
    rows = compare_rows(net, args.models, args.seeds, args.dt, args.horizon)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "compare.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "dt_s", "mean_rmse_veh_s", "std_rmse_veh_s", "seeds"])
        for m, dt, mean, std, n in rows:
            w.writerow([m, io.fmt(dt), io.fmt(mean), io.fmt(std), n])
    print(f"{'model':<6} {'dt':>6} {'mean RMSE':>14} {'std':>14}")
    for m, dt, mean, std, n in rows:
        print(f"{m:<6} {dt:>6g} {mean:>14.6e} {std:>14.6e}")
    return EXIT_OK


def bench_rows(net, models, horizons, repeat, dt=1.0, seed=0):
    """Median link-model and node-model seconds per (model, horizon)."""
    rows = []
    for h in horizons:
        base = random_scenario(net, seed, density_range=(0.0, 0.03), flow_range=(0.0, 0.3),
                               blocks=2, dt=dt, horizon=h)
        for m in models:
            sc = base.replace(model=m)
            _scenario_errors(net, sc)
            runs = [simulate(net, sc, record=False, count_ops=False).timing for _ in range(repeat)]
            for phase in ("link_model", "node_model"):
                rows.append((m, h, phase, statistics.median(r[phase] for r in runs)))
    return rows


def cmd_bench(args) -> int:
    _check_models(args.models)
    if args.repeat < 1:
        raise _Invalid("validation", [f"--repeat must be >= 1, got {args.repeat}"])
    net = _load_network(args.network)
    rows = bench_rows(net, args.models, args.horizons, args.repeat, args.dt, args.seed)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "timing.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "horizon_s", "phase", "seconds"])
        for m, h, phase, sec in rows:
            w.writerow([m, io.fmt(h), phase, io.fmt(sec)])
    for m, h, phase, sec in rows:
        print(f"{m:<4} {h:>8g} {phase:<10} {sec:10.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="laxhopf", description="Lax-Hopf network traffic simulation.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one scenario and write CSV outputs")
    s.add_argument("--network", required=True, help="network JSON file, 'five-link' or 'grid[:RxC]'")
    s.add_argument("--scenario", required=True, help="scenario JSON file")
    s.add_argument("--model", help="override the scenario model")
    s.add_argument("--dt", type=float, help="override the time step (s)")
    s.add_argument("--horizon", type=float, help="override the horizon (s)")
    s.add_argument("--seed", type=int, help="override the recorded seed")
    s.add_argument("--out", default="out", help="output directory")
    s.add_argument("--probe", type=_probe_arg, action="append", default=[], metavar="LINK:X:T",
                   help="report N and density at offset X (m) on LINK at time T (s); repeatable")
    s.add_argument("--count-ops", action="store_true", help="write ops.csv with per-step evaluation counts")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", help="mean RMSE of boundary outflows against FLH over random seeds")
    c.add_argument("--network", default="five-link")
    c.add_argument("--models", type=_csv_list(str), default=["lh", "ctm", "ltm"])
    c.add_argument("--seeds", type=int, default=10)
    c.add_argument("--dt", type=_csv_list(float), default=[1.0])
    c.add_argument("--horizon", type=float, default=600.0)
    c.add_argument("--out", default="out")
    c.set_defaults(func=cmd_compare)

    b = sub.add_parser("bench", help="link-model and node-model wall-clock per model and horizon")
    b.add_argument("--network", default="grid")
    b.add_argument("--models", type=_csv_list(str), default=["flh", "ltm", "ctm", "lh"])
    b.add_argument("--horizons", type=_csv_list(float), default=[200.0, 500.0, 1000.0])
    b.add_argument("--repeat", type=int, default=3)
    b.add_argument("--dt", type=float, default=1.0)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default="out")
    b.set_defaults(func=cmd_bench)
    return p


def _fail(kind, errors) -> int:
    json.dump({"kind": kind, "errors": errors}, sys.stderr)
    sys.stderr.write("\n")
    return EXIT_INVALID


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Invalid as exc:
        return _fail(exc.kind, exc.errors)
    except CFLViolation as exc:
        return _fail("cfl", exc.errors)
    except ProbeRefused as exc:
        return _fail("probe", [str(exc)])
    except ValidationError as exc:
        kind = "schema" if any(e.startswith("$") for e in exc.errors) else "validation"
        return _fail(kind, exc.errors)


if __name__ == "__main__":
    sys.exit(main())
