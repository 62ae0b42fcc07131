"""Shared diagrams and random single-link scenarios for the tests."""

import numpy as np

from laxhopf.fundamental_diagram import GreenshieldsFD, PiecewiseLinearFD, TriangularFD
from laxhopf.value_conditions import from_density_profile

TRI = TriangularFD.from_params(v_free=30.0, w_cong=5.0015, k_jam=0.1297)
GS = GreenshieldsFD(1.0, 4.0)
PWL = PiecewiseLinearFD((0.0, 0.02, 0.06, 0.12), (0.0, 0.5, 0.6, 0.0))

GREEN_DENSITIES = [1.9, 3.0, 0.1, 3.7, 2.6, 4.0, 3.3, 0.4, 1.0, 0.3]


def random_condition(rng, fd, n_ini=10, length=1000.0, regular=True):
    """Random initial profile on ``[0, length]``."""
    if regular:
        xb = np.linspace(0.0, length, n_ini + 1)
    else:
        xb = np.sort(np.r_[0.0, length, rng.uniform(0.0, length, n_ini - 1)])
    ks = rng.uniform(0.0, fd.k_jam, n_ini)
    return from_density_profile(xb, ks, float(rng.uniform(-50, 50)), fd.k_jam)


def with_random_boundaries(rng, cond, fd, n_blocks=8, dt=None):
    """Attach random capacity-bounded boundary traces of ``n_blocks`` blocks."""
    dt = dt if dt is not None else float(rng.uniform(0.5, 5.0))
    times = np.arange(n_blocks + 1) * dt
    up = rng.uniform(0.0, fd.q_max, n_blocks)
    down = rng.uniform(0.0, fd.q_max, n_blocks)
    return cond.with_boundaries(times, up, times, down)


def flows_for(policy, rng, demand, supply):
    """Boundary flows ``(inflow, outflow)`` under one of four driving policies."""
    if policy == 0:
        return rng.uniform() * supply, rng.uniform() * demand
    if policy == 1:
        return supply, demand
    if policy == 2:
        return 0.0, float(rng.uniform() < 0.5) * demand
    return float(rng.uniform() < 0.5) * supply, 0.0


def drive(links, steps, rng, policy):
    """Step several link solvers with identical flows chosen from the first one.

    Returns per-step prospective values ``(down, up)`` for every link.
    """
    out = [[] for _ in links]
    for _ in range(steps):
        for i, lk in enumerate(links):
            out[i].append((lk.prospective("down"), lk.prospective("up")))
        lead = links[0]
        q_in, q_out = flows_for(policy, rng, lead.demand(), lead.supply())
        for lk in links:
            lk.advance(q_in, q_out)
    return [np.array(o) for o in out]


def random_node(rng, max_in=3, max_out=3, signals=False):
    """Random node spec with its demands and supplies."""
    from laxhopf.junction import NodeSpec, SignalGroup

    n_in, n_out = int(rng.integers(1, max_in + 1)), int(rng.integers(1, max_out + 1))
    ins = tuple(f"i{k}" for k in range(n_in))
    outs = tuple(f"o{k}" for k in range(n_out))
    rows = []
    for _ in range(n_in):
        r = rng.uniform(0, 1, n_out) * (rng.uniform(0, 1, n_out) < 0.8)
        if r.sum() == 0:
            r[rng.integers(n_out)] = 1.0
        r = r / r.sum()
        # put the rounding remainder on the last used movement so unused ones stay exactly zero
        last = np.flatnonzero(r)[-1]
        r[last] = 1.0 - (r.sum() - r[last])
        rows.append(tuple(float(b) for b in np.clip(r, 0.0, 1.0)))
    pri = rng.uniform(0.1, 1.0, n_in)
    groups = ()
    if signals:
        mv = tuple((a, b) for a in ins for b in outs if rng.uniform() < 0.3)
        if mv:
            groups = (SignalGroup(mv, 60.0, ((0.0, 30.0),)),)
    spec = NodeSpec("n", ins, outs, tuple(rows), tuple(float(p) for p in pri / pri.sum()), groups)
    demands = rng.uniform(0, 0.6, n_in) * (rng.uniform(0, 1, n_in) < 0.9)
    supplies = rng.uniform(0, 0.6, n_out) * (rng.uniform(0, 1, n_out) < 0.9)
    return spec, demands, supplies


def junction_violations(spec, demands, supplies, res, t=0.0, lattice=200, tol=1e-9):
    """Names of the node-model properties that ``res`` breaks."""
    from laxhopf.junction import signal_phase

    beta = spec.beta
    f = res.flows
    q = res.inflows
    bad = []
    if np.any(f < -tol):
        bad.append("negative")
    if np.any(q > np.asarray(demands) + tol):
        bad.append("demand")
    if np.any(res.outflows > np.asarray(supplies) + tol):
        bad.append("supply")
    if not np.allclose(f, beta * q[:, None], atol=tol):
        bad.append("fifo")
    green = signal_phase(spec, t)
    for i, a in enumerate(spec.incoming):
        for o, b in enumerate(spec.outgoing):
            if not green[(a, b)] and f[i, o] > tol:
                bad.append("signal")
    # no single incoming link can send one more lattice step of flow
    blocked = [any(beta[i, o] > 0 and not green[(a, b)] for o, b in enumerate(spec.outgoing))
               for i, a in enumerate(spec.incoming)]
    for i in range(len(q)):
        if blocked[i] or demands[i] <= 0:
            continue
        step = demands[i] / lattice
        trial = q.copy()
        trial[i] = min(q[i] + step, demands[i])
        if trial[i] - q[i] < tol:
            continue
        out = (beta * trial[:, None]).sum(axis=0)
        if np.all(out <= np.asarray(supplies) + tol):
            bad.append("maximal")
    return bad
