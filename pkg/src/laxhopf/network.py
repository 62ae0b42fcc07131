"""Network loading: links, nodes, edge sources and sinks stepped together.

Each step runs four phases in order: every link reports demand and supply,
every node (and every edge source or sink) turns them into flows, each link
appends its boundary flows, and time advances by ``dt``.  Only information
up to the current time enters a step.
"""

from __future__ import annotations

import bisect
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .baselines import CtmLink, LhLink, LtmLink
from .components import solve_point_lh
from .errors import DomainError, ProbeRefused, ValidationError
from .flh import FlhLink
from .fundamental_diagram import FundamentalDiagram, TriangularFD
from .junction import NodeSpec, SignalGroup, resolve_node
from .value_conditions import from_density_profile

MODELS = ("flh", "lh", "ctm", "ltm")
PROBE_DELTA = 0.5


# ---------------------------------------------------------------------------
# network description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinkSpec:
    """A link; ``diagram`` is per lane and is scaled by ``lanes``."""

    link_id: str
    length: float
    lanes: float
    diagram: FundamentalDiagram
    from_node: str = None
    to_node: str = None

    @property
    def fd(self) -> FundamentalDiagram:
        return self.diagram.scaled(self.lanes) if self.lanes != 1 else self.diagram


@dataclass(frozen=True)
class EdgeSpec:
    """Network edge feeding (source) or draining (sink) one link."""

    edge_id: str
    link_id: str


@dataclass(frozen=True)
class Network:
    links: tuple
    nodes: tuple = ()
    sources: tuple = ()
    sinks: tuple = ()

    def __post_init__(self):
        errors = validate_network(self)
        if errors:
            raise ValidationError(errors)

    def link(self, link_id) -> LinkSpec:
        for lk in self.links:
            if lk.link_id == link_id:
                return lk
        raise KeyError(link_id)

    @property
    def link_ids(self) -> list:
        return sorted(lk.link_id for lk in self.links)


def validate_network(net: Network) -> list:
    errs = []
    ids = [lk.link_id for lk in net.links]
    if len(set(ids)) != len(ids):
        errs.append("duplicate link ids")
    for lk in net.links:
        if not lk.length > 0:
            errs.append(f"link {lk.link_id!r}: length must be > 0")
        if not lk.lanes > 0:
            errs.append(f"link {lk.link_id!r}: lanes must be > 0")
    known = set(ids)
    up_att = {i: [] for i in ids}
    down_att = {i: [] for i in ids}
    node_ids = [n.node_id for n in net.nodes]
    if len(set(node_ids)) != len(node_ids):
        errs.append("duplicate node ids")
    for n in net.nodes:
        for i in n.incoming:
            if i not in known:
                errs.append(f"node {n.node_id!r}: unknown incoming link {i!r}")
            else:
                down_att[i].append(f"node {n.node_id}")
        for o in n.outgoing:
            if o not in known:
                errs.append(f"node {n.node_id!r}: unknown outgoing link {o!r}")
            else:
                up_att[o].append(f"node {n.node_id}")
    edge_ids = [e.edge_id for e in net.sources] + [e.edge_id for e in net.sinks]
    if len(set(edge_ids)) != len(edge_ids):
        errs.append("duplicate source/sink ids")
    for e in net.sources:
        if e.link_id not in known:
            errs.append(f"source {e.edge_id!r}: unknown link {e.link_id!r}")
        else:
            up_att[e.link_id].append(f"source {e.edge_id}")
    for e in net.sinks:
        if e.link_id not in known:
            errs.append(f"sink {e.edge_id!r}: unknown link {e.link_id!r}")
        else:
            down_att[e.link_id].append(f"sink {e.edge_id}")
    for i in ids:
        if len(up_att[i]) != 1:
            errs.append(f"link {i!r}: upstream end attached to {len(up_att[i])} nodes/sources, expected 1")
        if len(down_att[i]) != 1:
            errs.append(f"link {i!r}: downstream end attached to {len(down_att[i])} nodes/sinks, expected 1")
    return errs


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Profile:
    """Piecewise-constant rate: ``values[j]`` holds from ``times[j]`` on."""

    times: tuple = (0.0,)
    values: tuple = (0.0,)

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times:
            raise ValidationError("profile needs matching, nonempty times and values")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValidationError("profile times must be strictly increasing")
        if any(v < 0 for v in self.values):
            raise ValidationError("profile rates must be >= 0")

    @classmethod
    def constant(cls, rate: float) -> "Profile":
        return cls((0.0,), (float(rate),))

    def at(self, t: float) -> float:
        j = bisect.bisect_right(self.times, t + 1e-9) - 1
        return self.values[max(j, 0)]


@dataclass(frozen=True)
class InitialProfile:
    """Per-lane densities on equal-width blocks, or on ``breaks`` (offsets from the link start)."""

    densities: tuple
    breaks: tuple = None


@dataclass(frozen=True)
class Scenario:
    initial: dict = field(default_factory=dict)
    demands: dict = field(default_factory=dict)
    supplies: dict = field(default_factory=dict)
    dt: float = 1.0
    horizon: float = 100.0
    model: str = "flh"
    seed: int = None

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def replace(self, **changes) -> "Scenario":
        data = {k: getattr(self, k) for k in ("initial", "demands", "supplies", "dt", "horizon", "model", "seed")}
        data.update({k: v for k, v in changes.items() if v is not None})
        return Scenario(**data)


def validate_scenario(net: Network, sc: Scenario) -> list:
    errs = []
    if sc.model not in MODELS:
        errs.append(f"unknown model {sc.model!r}; expected one of {', '.join(MODELS)}")
    if not sc.dt > 0:
        errs.append(f"dt={sc.dt!r} must be > 0")
    if not sc.horizon >= 0:
        errs.append(f"horizon={sc.horizon!r} must be >= 0")
    elif sc.dt > 0 and abs(sc.horizon / sc.dt - round(sc.horizon / sc.dt)) > 1e-9:
        errs.append(f"horizon={sc.horizon!r} is not a multiple of dt={sc.dt!r}")
    ids = set(net.link_ids)
    for lid, prof in sc.initial.items():
        if lid not in ids:
            errs.append(f"initial: unknown link {lid!r}")
            continue
        lk = net.link(lid)
        for k in prof.densities:
            if not 0 <= k <= lk.diagram.k_jam * (1 + 1e-12):
                errs.append(f"initial[{lid}]: density {k!r} outside [0, k_jam={lk.diagram.k_jam}]")
        if prof.breaks is not None:
            b = prof.breaks
            if len(b) != len(prof.densities) + 1 or abs(b[0]) > 1e-9 or abs(b[-1] - lk.length) > 1e-9:
                errs.append(f"initial[{lid}]: breaks must span [0, {lk.length}] with one more entry than densities")
    src = {e.edge_id for e in net.sources}
    snk = {e.edge_id for e in net.sinks}
    errs += [f"demands: unknown source {k!r}" for k in sc.demands if k not in src]
    errs += [f"supplies: unknown sink {k!r}" for k in sc.supplies if k not in snk]
    if sc.model == "ltm":
        bad = [lk.link_id for lk in net.links if not isinstance(lk.diagram, TriangularFD)]
        if bad:
            errs.append(f"model ltm needs triangular diagrams; links {bad} are not")
    for lk in net.links:
        fd = lk.fd
        if sc.dt > 0 and sc.dt > lk.length / max(fd.v_max, -fd.w_min) * (1 + 1e-12):
            errs.append(f"CFL: dt={sc.dt} exceeds travel time {lk.length / max(fd.v_max, -fd.w_min):.6g} "
                        f"of link {lk.link_id!r}")
    return errs


def link_condition(lk: LinkSpec, prof: InitialProfile = None):
    fd = lk.fd
    if prof is None:
        prof = InitialProfile((0.0,))
    ks = np.asarray(prof.densities, dtype=float) * lk.lanes
    if prof.breaks is None:
        xb = np.linspace(0.0, lk.length, len(ks) + 1)
    else:
        xb = np.asarray(prof.breaks, dtype=float)
        xb[-1] = lk.length
    return from_density_profile(xb, np.minimum(ks, fd.k_jam), 0.0, fd.k_jam)


def make_link(model, cond, fd, dt, record=False, flh_mode="auto"):
    if model == "flh":
        return FlhLink(cond, fd, dt, mode=flh_mode)
    if model == "lh":
        return LhLink(cond, fd, dt)
    if model == "ctm":
        return CtmLink(cond, fd, dt, record=record)
    if model == "ltm":
        return LtmLink(cond, fd, dt)
    raise ValidationError(f"unknown model {model!r}")


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

@dataclass
class SimulationResult:
    """Boundary series per link; row ``n`` is time ``n dt``.

    Flows in row ``n`` are averages over the step ending at ``n dt``; row 0
    carries zero flows and the initial counts.
    """

    model: str
    dt: float
    link_ids: list
    times: np.ndarray
    inflow: np.ndarray
    outflow: np.ndarray
    n_up: np.ndarray
    n_down: np.ndarray
    stored: np.ndarray
    edge_in: np.ndarray
    edge_out: np.ndarray
    ops: dict = None
    timing: dict = field(default_factory=dict)
    links: dict = field(default_factory=dict, repr=False)
    network: Network = field(default=None, repr=False)

    def column(self, link_id) -> int:
        return self.link_ids.index(link_id)


def simulate(net: Network, sc: Scenario, record: bool = True, count_ops: bool = True,
             flh_mode: str = "auto") -> SimulationResult:
    """Run ``sc`` on ``net`` and collect the boundary series."""
    errs = validate_scenario(net, sc)
    if errs:
        raise ValidationError(errs)
    ids = net.link_ids
    col = {lid: c for c, lid in enumerate(ids)}
    specs = {lk.link_id: lk for lk in net.links}
    links = {}
    for lid in ids:
        lk = specs[lid]
        links[lid] = make_link(sc.model, link_condition(lk, sc.initial.get(lid)), lk.fd, sc.dt,
                               record=record, flh_mode=flh_mode)
    n_steps, n_links, dt = sc.n_steps, len(ids), sc.dt
    inflow = np.zeros((n_steps + 1, n_links))
    outflow = np.zeros((n_steps + 1, n_links))
    n_up = np.zeros((n_steps + 1, n_links))
    n_down = np.zeros((n_steps + 1, n_links))
    stored = np.zeros((n_steps + 1, n_links))
    edge_in = np.zeros(n_steps + 1)
    edge_out = np.zeros(n_steps + 1)
    track_ops = count_ops and sc.model in ("flh", "lh")
    ops = {"up": np.zeros((n_steps + 1, n_links), dtype=int),
           "down": np.zeros((n_steps + 1, n_links), dtype=int)} if track_ops else None
    link_list = [links[lid] for lid in ids]
    for c, lk in enumerate(link_list):
        n_up[0, c], n_down[0, c], stored[0, c] = lk.n_up, lk.n_down, lk.stored()

    nodes = [(n, [col[i] for i in n.incoming], [col[o] for o in n.outgoing]) for n in net.nodes]
    src = [(sc.demands.get(e.edge_id, Profile.constant(0.0)), col[e.link_id]) for e in net.sources]
    snk = [(sc.supplies.get(e.edge_id, None), col[e.link_id]) for e in net.sinks]
    t_link = t_node = 0.0
    dem = [0.0] * n_links
    sup = [0.0] * n_links
    for step in range(1, n_steps + 1):
        t = (step - 1) * dt
        tic = time.perf_counter()
        for c, lk in enumerate(link_list):
            dem[c] = lk.demand()
            sup[c] = lk.supply()
        toc = time.perf_counter()
        t_link += toc - tic
        q_in = [0.0] * n_links
        q_out = [0.0] * n_links
        for node, ins, outs in nodes:
            res = resolve_node(node, [dem[c] for c in ins], [sup[c] for c in outs], t)
            for c, f in zip(ins, res.flows.sum(axis=1)):
                q_out[c] = float(f)
            for c, f in zip(outs, res.flows.sum(axis=0)):
                q_in[c] = float(f)
        e_in = e_out = 0.0
        for prof, c in src:
            q_in[c] = min(prof.at(t), sup[c])
            e_in += q_in[c]
        for prof, c in snk:
            q_out[c] = dem[c] if prof is None else min(dem[c], prof.at(t))
            e_out += q_out[c]
        tic = time.perf_counter()
        t_node += tic - toc
        for c, lk in enumerate(link_list):
            lk.advance(q_in[c], q_out[c])
        t_link += time.perf_counter() - tic
        inflow[step] = q_in
        outflow[step] = q_out
        edge_in[step] = e_in
        edge_out[step] = e_out
        for c, lk in enumerate(link_list):
            n_up[step, c], n_down[step, c], stored[step, c] = lk.n_up, lk.n_down, lk.stored()
            if track_ops:
                if sc.model == "flh":
                    ops["up"][step, c] = lk.cursors["up"].last_ops
                    ops["down"][step, c] = lk.cursors["down"].last_ops
                else:
                    ops["up"][step, c] = lk.last_ops["up"]
                    ops["down"][step, c] = lk.last_ops["down"]
    return SimulationResult(sc.model, dt, ids, np.arange(n_steps + 1) * dt, inflow, outflow, n_up, n_down,
                            stored, edge_in, edge_out, ops, {"link_model": t_link, "node_model": t_node},
                            links, net)


def probe(result: SimulationResult, link_id, x: float, t: float):
    """Count and density at offset ``x`` along ``link_id`` at time ``t``.

    Exact for the Lax-Hopf models (density by a centred difference of width
    ``2 * 0.5`` m, one-sided at the link ends); cell values for CTM.
    """
    if result.model == "ltm":
        raise ProbeRefused("interior probing is refused for ltm: its interior values do not converge "
                           "to the exact solution when expansion waves are present")
    if link_id not in result.links:
        raise ValidationError(f"unknown link {link_id!r}")
    lk = result.links[link_id]
    horizon = result.times[-1]
    length = lk.xn - lk.x0
    if not (-1e-9 <= x <= length + 1e-9) or not (-1e-9 <= t <= horizon + 1e-9):
        raise DomainError(f"probe ({x}, {t}) outside link {link_id!r} x [0, {horizon}]")
    x = min(max(float(x), 0.0), length)
    t = min(max(float(t), 0.0), horizon)
    if result.model == "ctm":
        return lk.probe(x, t)
    cond = _cached_condition(lk)
    fd = lk.fd
    n = solve_point_lh(cond, fd, x, t)
    a, b = max(x - PROBE_DELTA, 0.0), min(x + PROBE_DELTA, length)
    density = -(solve_point_lh(cond, fd, b, t) - solve_point_lh(cond, fd, a, t)) / (b - a)
    return n, density


def _cached_condition(lk):
    key = lk.step
    cached = getattr(lk, "_probe_cond", None)
    if cached is None or cached[0] != key:
        cached = (key, lk.condition)
        lk._probe_cond = cached
    return cached[1]


def _outflow_on_grid(res: SimulationResult, dt: float) -> np.ndarray:
    """Outflow series averaged over steps of ``dt`` (a multiple of ``res.dt``)."""
    ratio = dt / res.dt
    r = int(round(ratio))
    if r < 1 or abs(ratio - r) > 1e-9:
        raise ValidationError(f"step {dt} is not a multiple of the reference step {res.dt}")
    n = res.n_down[::r]
    return np.diff(n, axis=0) / dt


def rmse_compare(a: SimulationResult, b: SimulationResult) -> dict:
    """Per-link RMSE between outflow series of ``a`` and reference ``b``.

    With equal steps the series are compared step by step.  When ``b`` uses
    a finer step that divides ``a``'s, ``b`` is first averaged over ``a``'s
    steps through its cumulative counts.  The ``"network"`` entry is the mean
    over links.
    """
    if a.link_ids != b.link_ids:
        raise ValidationError("results cover different links")
    if abs(a.times[-1] - b.times[-1]) > 1e-9:
        raise ValidationError("results cover different horizons")
    qa = a.outflow[1:] if abs(a.dt - b.dt) < 1e-12 else np.diff(a.n_down, axis=0) / a.dt
    qb = b.outflow[1:] if abs(a.dt - b.dt) < 1e-12 else _outflow_on_grid(b, a.dt)
    if qa.shape != qb.shape:
        raise ValidationError(f"shape mismatch {qa.shape} vs {qb.shape}")
    err = np.sqrt(np.mean((qa - qb) ** 2, axis=0)) if len(qa) else np.zeros(len(a.link_ids))
    out = {lid: float(e) for lid, e in zip(a.link_ids, err)}
    out["network"] = float(np.mean(err)) if len(err) else 0.0
    return out


# ---------------------------------------------------------------------------
# shipped networks and random scenarios
# ---------------------------------------------------------------------------

HIGHWAY_LANE_FD = dict(q_max=0.556, v_free=30.0, k_jam=0.1297)
URBAN_LANE_FD = dict(q_max=0.4625, v_free=12.5, k_jam=0.1295)


def five_link_network(length: float = 1000.0, offramp_split: float = 0.25) -> Network:
    """Highway with an off-ramp then an on-ramp.

    ``L1 -> A -> {L2, L4}`` and ``{L2, L5} -> B -> L3``; mainline links have
    three lanes, ramps two.  Merge priorities are proportional to lane
    capacity (0.6 / 0.4).
    """
    fd = TriangularFD.from_params(**HIGHWAY_LANE_FD)
    links = (
        LinkSpec("L1", length, 3, fd, None, "A"),
        LinkSpec("L2", length, 3, fd, "A", "B"),
        LinkSpec("L3", length, 3, fd, "B", None),
        LinkSpec("L4", length, 2, fd, "A", None),
        LinkSpec("L5", length, 2, fd, None, "B"),
    )
    nodes = (
        NodeSpec("A", ("L1",), ("L2", "L4"), ((1.0 - offramp_split, offramp_split),), (1.0,)),
        NodeSpec("B", ("L2", "L5"), ("L3",), ((1.0,), (1.0,)), (0.6, 0.4)),
    )
    sources = (EdgeSpec("S1", "L1"), EdgeSpec("S5", "L5"))
    sinks = (EdgeSpec("E3", "L3"), EdgeSpec("E4", "L4"))
    return Network(links, nodes, sources, sinks)


def five_link_scenario(dt: float = 1.0, horizon: float = 600.0, model: str = "flh") -> Scenario:
    """Free-flow start (0.004 veh/m/lane) with a denser upstream half on L2 (0.01)."""
    init = {lid: InitialProfile((0.004,)) for lid in ("L1", "L3", "L4", "L5")}
    init["L2"] = InitialProfile((0.01, 0.004))
    return Scenario(init, {"S1": Profile.constant(1.2), "S5": Profile.constant(0.4)}, {}, dt, horizon, model)


def grid_network(rows: int, cols: int, length: float = 200.0, lanes: float = 2,
                 period: float = 60.0, turn: float = 0.2) -> Network:
    """Signalised grid of one-way streets with alternating directions.

    Row ``r`` runs east for even ``r`` and west otherwise; column ``c`` runs
    south for even ``c`` and north otherwise.  Every street enters from a
    source and leaves to a sink, so each intersection has one row and one
    column approach and exit.  Approaches go straight with ``1 - turn`` and
    turn with ``turn``.  Row approaches are green on ``[0, period/2)`` and
    column approaches on ``[period/2, period)``.
    """
    if rows < 1 or cols < 1:
        raise ValidationError("grid needs rows >= 1 and cols >= 1")
    fd = TriangularFD.from_params(**URBAN_LANE_FD)
    links, sources, sinks = [], [], []
    row_in, row_out, col_in, col_out = {}, {}, {}, {}

    def node(r, c):
        return f"n{r}_{c}"

    for r in range(rows):
        order = list(range(cols)) if r % 2 == 0 else list(range(cols - 1, -1, -1))
        chain = [None] + [node(r, c) for c in order] + [None]
        for k in range(len(chain) - 1):
            lid = f"r{r}_{k}"
            links.append(LinkSpec(lid, length, lanes, fd, chain[k], chain[k + 1]))
            if chain[k] is None:
                sources.append(EdgeSpec(f"src_{lid}", lid))
            else:
                row_out[chain[k]] = lid
            if chain[k + 1] is None:
                sinks.append(EdgeSpec(f"snk_{lid}", lid))
            else:
                row_in[chain[k + 1]] = lid
    for c in range(cols):
        order = list(range(rows)) if c % 2 == 0 else list(range(rows - 1, -1, -1))
        chain = [None] + [node(r, c) for r in order] + [None]
        for k in range(len(chain) - 1):
            lid = f"c{c}_{k}"
            links.append(LinkSpec(lid, length, lanes, fd, chain[k], chain[k + 1]))
            if chain[k] is None:
                sources.append(EdgeSpec(f"src_{lid}", lid))
            else:
                col_out[chain[k]] = lid
            if chain[k + 1] is None:
                sinks.append(EdgeSpec(f"snk_{lid}", lid))
            else:
                col_in[chain[k + 1]] = lid
    nodes = []
    half = period / 2.0
    for r in range(rows):
        for c in range(cols):
            nid = node(r, c)
            ri, ci, ro, co = row_in[nid], col_in[nid], row_out[nid], col_out[nid]
            signals = (
                SignalGroup(((ri, ro), (ri, co)), period, ((0.0, half),)),
                SignalGroup(((ci, co), (ci, ro)), period, ((half, period),)),
            )
            nodes.append(NodeSpec(nid, (ri, ci), (ro, co),
                                  ((1.0 - turn, turn), (turn, 1.0 - turn)), (0.5, 0.5), signals))
    return Network(tuple(links), tuple(nodes), tuple(sources), tuple(sinks))


def random_scenario(net: Network, seed: int, density_range=(0.0, 0.04), flow_range=(0.0, 0.5),
                    blocks: int = 4, dt: float = 1.0, horizon: float = 600.0, model: str = "flh",
                    profile_step: float = 60.0) -> Scenario:
    """Random initial densities (per lane) and edge profiles, reproducible by ``seed``.

    Each link gets ``blocks`` equal-width blocks; each source and sink gets a
    piecewise-constant rate changing every ``profile_step`` seconds.  Flow
    ranges are per lane and scaled by the lane count of the edge link.
    """
    lo_k, hi_k = map(float, density_range)
    lo_q, hi_q = map(float, flow_range)
    k_jam = min(lk.diagram.k_jam for lk in net.links)
    q_max = min(lk.diagram.q_max for lk in net.links)
    errs = []
    if not 0 <= lo_k <= hi_k <= k_jam:
        errs.append(f"density range {density_range} not within [0, {k_jam}]")
    if not 0 <= lo_q <= hi_q <= q_max:
        errs.append(f"flow range {flow_range} not within [0, {q_max}]")
    if errs:
        raise ValidationError(errs)
    rng = np.random.default_rng(seed)
    initial = {lid: InitialProfile(tuple(float(v) for v in rng.uniform(lo_k, hi_k, blocks)))
               for lid in net.link_ids}
    n_seg = max(1, int(math.ceil(horizon / profile_step)))
    times = tuple(float(j * profile_step) for j in range(n_seg))

    def profile(link_id):
        lanes = net.link(link_id).lanes
        return Profile(times, tuple(float(v) * lanes for v in rng.uniform(lo_q, hi_q, n_seg)))

    demands = {e.edge_id: profile(e.link_id) for e in sorted(net.sources, key=lambda e: e.edge_id)}
    supplies = {e.edge_id: profile(e.link_id) for e in sorted(net.sinks, key=lambda e: e.edge_id)}
    return Scenario(initial, demands, supplies, dt, horizon, model, seed)


def global_balance(result: SimulationResult) -> np.ndarray:
    """Entered minus exited minus change in stored vehicles, per step (should be 0)."""
    entered = np.cumsum(result.edge_in) * result.dt
    exited = np.cumsum(result.edge_out) * result.dt
    stored = result.stored.sum(axis=1)
    return entered - exited - (stored - stored[0])
