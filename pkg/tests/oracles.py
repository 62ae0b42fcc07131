"""Brute-force Lax-Hopf minimisation, independent of the closed forms.

Each block is sampled densely over its own domain (2000 interior samples plus
both endpoints) and ``c(p) + T R(u)`` is minimised directly.  The sampling
error is bounded by the Lipschitz constant of the objective along the block
times the sample spacing, returned alongside each value.
"""

import math

import numpy as np

SAMPLES = 2000


def _r(fd, u):
    return fd._r_arr(np.asarray(u, dtype=float))


def initial_oracle(fd, x_lo, x_hi, k, n_lo, x, t):
    """Return ``(value, tol)`` for one initial block."""
    ys = np.unique(np.concatenate([np.linspace(x_lo, x_hi, SAMPLES + 2)]))
    h = (x_hi - x_lo) / (SAMPLES + 1)
    c = n_lo - k * (ys - x_lo)
    if t == 0:
        hit = np.isclose(ys, x, rtol=0, atol=1e-9)
        return (float(c[hit][0]) if hit.any() else math.inf), 0.0
    u = (x - ys) / t
    ok = (u >= fd.w_min - 1e-12) & (u <= fd.v_max + 1e-12)
    if not ok.any():
        return math.inf, 0.0
    vals = c[ok] + t * _r(fd, np.clip(u[ok], fd.w_min, fd.v_max))
    return float(vals.min()), 2.0 * fd.k_jam * h


def boundary_oracle(fd, t_lo, t_hi, q, n_lo, dist, t, upstream):
    """Return ``(value, tol)`` for one boundary block at distance ``dist`` from it."""
    ts = np.linspace(t_lo, min(t_hi, t), SAMPLES + 2) if t >= t_lo else np.empty(0)
    h = (min(t_hi, t) - t_lo) / (SAMPLES + 1) if t >= t_lo else 0.0
    if ts.size == 0:
        return math.inf, 0.0
    s = t - ts
    c = n_lo + q * (ts - t_lo)
    cap = fd.v_max if upstream else -fd.w_min
    sign = 1.0 if upstream else -1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        speed = np.where(s > 0, dist / np.where(s > 0, s, 1.0), np.where(dist == 0, 0.0, np.inf))
    ok = speed <= cap * (1 + 1e-12)
    if not ok.any():
        return math.inf, 0.0
    sp = np.clip(speed[ok], 0.0, cap)
    vals = c[ok] + s[ok] * _r(fd, sign * sp)
    return float(vals.min()), 2.0 * fd.q_max * h


def point_oracle(cond, fd, x, t):
    """Brute-force value of the full condition at ``(x, t)`` with its error bound."""
    best, tol = math.inf, 0.0
    xs, vs = cond.x_breaks, cond.x_values
    for i in range(cond.n_ini):
        v, e = initial_oracle(fd, xs[i], xs[i + 1], cond.densities[i], vs[i], x, t)
        if v < best:
            best = v
        tol = max(tol, e)
    for upstream, ts, qs, ns, dist in (
        (True, cond.up_times, cond.up_flows, cond.up_values, x - cond.x0),
        (False, cond.down_times, cond.down_flows, cond.down_values, cond.xn - x),
    ):
        for j in range(len(qs)):
            v, e = boundary_oracle(fd, ts[j], ts[j + 1], qs[j], ns[j], dist, t, upstream)
            if v < best:
                best = v
            tol = max(tol, e)
    return best, tol
