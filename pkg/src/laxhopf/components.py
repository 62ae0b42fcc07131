"""Closed-form Lax-Hopf solutions for single affine blocks and the point solver.

Each component is the infimum of ``c(p) + T R(u)`` over the points ``p`` of one
affine piece of the value condition, where ``(x, t)`` is reached from ``p`` by
travelling at speed ``u`` for a time ``T``.  All three families reduce to a
one-dimensional convex minimisation whose minimiser is a characteristic speed
of the block, clipped to the feasible interval:

* initial block  ``[x_lo, x_hi]``: minimise over ``u`` with ``y = x - t u``
  inside the block; the unconstrained minimiser is ``Q'(k)``.
* boundary block ``[t_lo, t_hi]``: minimise over the travel time ``s`` with
  ``t - s`` inside the block; the unconstrained minimiser is ``|X| / |u_q|``
  where ``u_q`` is the speed at the density carrying the block flow ``q``
  (smallest such density upstream, largest downstream).

Branch tags name where the minimiser lands: ``strip`` (interior, the block's
own characteristics), ``fan_lo`` / ``fan_hi`` (clipped to the lower or upper
corner of the block).  Out of reach points get ``+inf`` with tag ``undefined``.

Triangular diagrams use dedicated closed forms; the general path handles any
concave diagram and agrees with them to rounding.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import DomainError
from .fundamental_diagram import TriangularFD

INF = math.inf
_EPS = 1e-12

STRIP, FAN_LO, FAN_HI, UNDEFINED = "strip", "fan_lo", "fan_hi", "undefined"


class ComponentValue(NamedTuple):
    value: float
    branch: str


_OUT = ComponentValue(INF, UNDEFINED)


def _tol(*scales):
    return _EPS * (1.0 + max(abs(s) for s in scales))


# ---------------------------------------------------------------------------
# scalar kernels (value, branch)
# ---------------------------------------------------------------------------

def _ini_tri(fd, x_lo, x_hi, k, n_lo, x, t):
    v, w, kc, kj = fd.v_free, fd.w_cong, fd.k_crit, fd.k_jam
    eps = _tol(x, x_hi, x_lo)
    if k < kc:
        if x >= x_lo + t * v - eps:
            if x > x_hi + t * v + eps:
                return _OUT
            return ComponentValue(n_lo - k * (x - x_lo) + t * v * k, STRIP)
        if x >= x_lo + t * w - eps:
            return ComponentValue(n_lo + kc * (t * v - (x - x_lo)), FAN_LO)
        return _OUT
    if x <= x_hi + t * w + eps:
        if x < x_lo + t * w - eps:
            return _OUT
        return ComponentValue(n_lo - k * (x - x_lo) + t * w * (k - kj), STRIP)
    if x <= x_hi + t * v + eps:
        n_hi = n_lo - k * (x_hi - x_lo)
        return ComponentValue(n_hi + kc * (t * v - (x - x_hi)), FAN_HI)
    return _OUT


def _ini_gen(fd, x_lo, x_hi, k, n_lo, x, t):
    u_a = max(fd.w_min, (x - x_hi) / t)
    u_b = min(fd.v_max, (x - x_lo) / t)
    if u_a > u_b + _tol(u_a, u_b):
        return _OUT
    vk = fd._speed(k)
    if vk > u_b:
        return ComponentValue(n_lo + t * fd._r(u_b), FAN_LO)
    if vk < u_a:
        return ComponentValue(n_lo - k * (x_hi - x_lo) + t * fd._r(u_a), FAN_HI)
    return ComponentValue(n_lo - k * (x - x_lo) + t * fd._q(k), STRIP)


def _ini(fd, x_lo, x_hi, k, n_lo, x, t, general=False):
    if t < 0:
        raise DomainError(f"t={t!r} must be >= 0")
    if t == 0:
        eps = _tol(x_lo, x_hi)
        if x_lo - eps <= x <= x_hi + eps:
            return ComponentValue(n_lo - k * (x - x_lo), STRIP)
        return _OUT
    if not general and isinstance(fd, TriangularFD):
        return _ini_tri(fd, x_lo, x_hi, k, n_lo, x, t)
    return _ini_gen(fd, x_lo, x_hi, k, n_lo, x, t)


def _bdry_tri(fd, t_lo, t_hi, q, n_lo, dist, t, upstream):
    speed = fd.v_free if upstream else -fd.w_cong
    tau = t - dist / speed
    if tau < t_lo - _tol(t, t_lo):
        return _OUT
    if tau <= t_hi:
        gain = 0.0 if upstream else fd.k_jam * dist
        return ComponentValue(n_lo + q * (tau - t_lo) + gain, STRIP)
    n_hi = n_lo + q * (t_hi - t_lo)
    return ComponentValue(n_hi + fd.k_crit * (fd.v_free * (t - t_hi) + (-dist if upstream else dist)), FAN_HI)


def _bdry_gen(fd, t_lo, t_hi, q, n_lo, dist, t, upstream, u_q=None):
    if upstream:
        cap, sign = fd.v_max, 1.0
        if u_q is None:
            u_q = fd.free_speed(q)
    else:
        cap, sign = -fd.w_min, -1.0
        if u_q is None:
            u_q = fd.congested_speed(q)
    s_lo = max(t - t_hi, dist / cap, 0.0)
    s_hi = t - t_lo
    if s_lo > s_hi + _tol(t, t_lo):
        return _OUT
    s_hi = max(s_hi, s_lo)
    if dist == 0.0:
        s_star = 0.0
    elif u_q == 0.0:
        s_star = INF
    else:
        s_star = dist / abs(u_q)
    if s_star < s_lo:
        s, branch = s_lo, FAN_HI
    elif s_star > s_hi:
        s, branch = s_hi, FAN_LO
    else:
        s, branch = s_star, STRIP
    base = n_lo + q * (t - s - t_lo)
    if s > 0.0:
        base += s * fd._r(sign * dist / s)
    return ComponentValue(base, branch)


def _bdry(fd, t_lo, t_hi, q, n_lo, dist, t, upstream, general=False):
    if dist < -_tol(dist):
        raise DomainError(f"point lies outside the link (distance {dist!r} from the boundary)")
    dist = max(dist, 0.0)
    if not general and isinstance(fd, TriangularFD):
        return _bdry_tri(fd, t_lo, t_hi, q, n_lo, dist, t, upstream)
    return _bdry_gen(fd, t_lo, t_hi, q, n_lo, dist, t, upstream)


# ---------------------------------------------------------------------------
# public single-component operations
# ---------------------------------------------------------------------------

def initial_component(fd, block, x: float, t: float, general: bool = False) -> ComponentValue:
    """Solution generated by one initial block alone at ``(x, t)``.

    ``general=True`` bypasses the triangular closed form.
    """
    n_lo = block.value(block.x_lo)
    return _ini(fd, block.x_lo, block.x_hi, block.k, n_lo, float(x), float(t), general)


def upstream_component(fd, block, x0: float, x: float, t: float, general: bool = False) -> ComponentValue:
    """Solution generated by one upstream boundary block at ``(x, t)``."""
    n_lo = block.value(block.t_lo)
    return _bdry(fd, block.t_lo, block.t_hi, block.flow, n_lo, float(x) - x0, float(t), True, general)


def downstream_component(fd, block, xn: float, x: float, t: float, general: bool = False) -> ComponentValue:
    """Solution generated by one downstream boundary block at ``(x, t)``."""
    n_lo = block.value(block.t_lo)
    return _bdry(fd, block.t_lo, block.t_hi, block.flow, n_lo, xn - float(x), float(t), False, general)


# ---------------------------------------------------------------------------
# float-only kernels used by the link solvers
# ---------------------------------------------------------------------------

def ini_value(fd, x_lo, x_hi, k, n_lo, x, t):
    return _ini(fd, x_lo, x_hi, k, n_lo, x, t).value


def up_value(fd, t_lo, t_hi, q, n_lo, dist, t, u_q=None):
    if isinstance(fd, TriangularFD):
        return _bdry_tri(fd, t_lo, t_hi, q, n_lo, dist, t, True).value
    return _bdry_gen(fd, t_lo, t_hi, q, n_lo, dist, t, True, u_q).value


def down_value(fd, t_lo, t_hi, q, n_lo, dist, t, u_q=None):
    if isinstance(fd, TriangularFD):
        return _bdry_tri(fd, t_lo, t_hi, q, n_lo, dist, t, False).value
    return _bdry_gen(fd, t_lo, t_hi, q, n_lo, dist, t, False, u_q).value


# ---------------------------------------------------------------------------
# vectorised kernels
# ---------------------------------------------------------------------------

def initial_values(fd, x_lo, x_hi, k, n_lo, x, t):
    """Initial components of many blocks at one point (numpy arrays in, array out)."""
    if t == 0:
        eps = _tol(x)
        inside = (x_lo - eps <= x) & (x <= x_hi + eps)
        return np.where(inside, n_lo - k * (x - x_lo), INF)
    if isinstance(fd, TriangularFD):
        vk = np.where(k < fd.k_crit, fd.v_free, fd.w_cong)
    else:
        vk = fd._speed_arr(k)
    # tiny t overflows the speed bounds to +-inf; those entries are masked below
    with np.errstate(over="ignore", invalid="ignore"):
        u_a = np.maximum(fd.w_min, (x - x_hi) / t)
        u_b = np.minimum(fd.v_max, (x - x_lo) / t)
        ok = u_a <= u_b + _EPS * (1.0 + np.abs(u_b))
        u = np.minimum(np.maximum(vk, u_a), u_b)
        vals = n_lo - k * (x - t * u - x_lo) + t * fd._r_arr(u)
    return np.where(ok, vals, INF)


def boundary_values(fd, t_lo, t_hi, q, n_lo, dist, t, upstream, u_q):
    """Boundary components of many blocks at one point.

    ``u_q`` holds the characteristic speed of each block's flow (see
    :func:`flow_speeds`).
    """
    cap = fd.v_max if upstream else -fd.w_min
    sign = 1.0 if upstream else -1.0
    s_lo = np.maximum(np.maximum(t - t_hi, dist / cap), 0.0)
    s_hi = t - t_lo
    ok = s_lo <= s_hi + _tol(t)
    s_hi = np.maximum(s_hi, s_lo)
    if dist == 0.0:
        s = s_lo
        tail = s * fd.q_max
    else:
        with np.errstate(divide="ignore"):
            s_star = dist / np.abs(u_q)
        s = np.minimum(np.maximum(s_star, s_lo), s_hi)
        tail = s * fd._r_arr(sign * dist / s)
    vals = n_lo + q * (t - s - t_lo) + tail
    return np.where(ok, vals, INF)


def flow_speeds(fd, flows, upstream):
    """Characteristic speed attached to each boundary flow value."""
    f = fd.free_speed if upstream else fd.congested_speed
    return np.array([f(float(q)) for q in flows], dtype=float)


# ---------------------------------------------------------------------------
# point solver by full minimisation
# ---------------------------------------------------------------------------

def arrived_count(times, dist, speed, t):
    """Number of boundary blocks whose first characteristic has reached ``dist`` by ``t``."""
    n = len(times) - 1
    if n <= 0:
        return 0
    lag = dist / speed
    return int(np.searchsorted(times[:-1], t - lag + _tol(t), side="right"))


def solve_point_lh(cond, fd, x: float, t: float, return_count: bool = False):
    """Moskowitz value at ``(x, t)`` as the minimum over every reachable component.

    Boundary blocks that have not yet started influencing ``x`` are skipped.
    On a boundary itself only the latest started block of that side is kept,
    since earlier blocks of the same trace can only give larger values there.
    With ``return_count`` the number of evaluated components is returned too.
    """
    x, t = float(x), float(t)
    if t < 0:
        raise DomainError(f"t={t!r} must be >= 0")
    x0, xn = cond.x0, cond.xn
    eps = _tol(x0, xn)
    if x < x0 - eps or x > xn + eps:
        raise DomainError(f"x={x!r} outside link [{x0}, {xn}]")
    x = min(max(x, x0), xn)
    xs, vs = cond.x_breaks, cond.x_values
    vals = [initial_values(fd, xs[:-1], xs[1:], cond.densities, vs[:-1], x, t)]
    count = cond.n_ini
    for upstream, times, flows, values, dist, speed in (
        (True, cond.up_times, cond.up_flows, cond.up_values, x - x0, fd.v_max),
        (False, cond.down_times, cond.down_flows, cond.down_values, xn - x, -fd.w_min),
    ):
        m = arrived_count(times, dist, speed, t)
        if m == 0:
            continue
        lo = m - 1 if dist == 0.0 else 0
        sl = slice(lo, m)
        u_q = flow_speeds(fd, flows[sl], upstream)
        vals.append(boundary_values(fd, times[sl], times[lo + 1:m + 1], flows[sl], values[sl],
                                    dist, t, upstream, u_q))
        count += m - lo
    best = float(min(np.min(a) for a in vals))
    return (best, count) if return_count else best


def component_table(cond, fd, x: float, t: float):
    """Every initial component value at ``(x, t)`` as an array (inf when out of reach)."""
    xs, vs = cond.x_breaks, cond.x_values
    return initial_values(fd, xs[:-1], xs[1:], cond.densities, vs[:-1], float(x), float(t))


def domains_of_influence(cond, fd, xs, ts, tol: float = 1e-9):
    """Minimising initial block indices at every lattice point ``(x, t)``.

    Returns a dict mapping ``(x, t)`` to a sorted tuple of indices.  Points
    where a boundary block is strictly better than every initial block map
    to an empty tuple.  Ties within ``tol`` report all tied indices.
    """
    out = {}
    for t in ts:
        for x in xs:
            ini = component_table(cond, fd, x, t)
            best = solve_point_lh(cond, fd, x, t)
            hits = np.flatnonzero(ini <= best + tol * (1.0 + abs(best)))
            out[(float(x), float(t))] = tuple(int(i) for i in hits)
    return out
