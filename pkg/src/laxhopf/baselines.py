"""Comparison link models sharing the :class:`flh.FlhLink` step interface.

Every link exposes ``demand()``, ``supply()`` and ``advance(inflow, outflow)``
plus the running boundary counts ``n_up`` / ``n_down``.

* :class:`LhLink`  full Lax-Hopf minimisation over every block, vectorised.
* :class:`CtmLink` Godunov cell scheme.
* :class:`LtmLink` two-wave cumulative-curve scheme (triangular only).
"""

from __future__ import annotations

import math

import numpy as np

from . import components as comp
from .errors import CFLViolation, ContractError, ProbeRefused, ValidationError
from .fundamental_diagram import TriangularFD
from .value_conditions import LinkValueCondition


class _Buffer:
    """Growable float array."""

    def __init__(self, values=()):
        values = np.asarray(values, dtype=float)
        self.data = np.empty(max(16, 2 * len(values)))
        self.data[:len(values)] = values
        self.size = len(values)

    def append(self, v):
        if self.size == len(self.data):
            self.data = np.concatenate([self.data, np.empty(len(self.data))])
        self.data[self.size] = v
        self.size += 1

    @property
    def view(self):
        return self.data[:self.size]


class LhLink:
    """Boundary values by minimising over all components at every step."""

    def __init__(self, cond: LinkValueCondition, fd, dt: float):
        self.fd = fd
        self.dt = float(dt)
        self.x0, self.xn = cond.x0, cond.xn
        self.length = self.xn - self.x0
        if self.dt > self.length / max(fd.v_max, -fd.w_min) * (1 + 1e-12):
            raise CFLViolation(f"dt={dt!r} exceeds the link travel time")
        self.x_lo, self.x_hi = cond.x_breaks[:-1].copy(), cond.x_breaks[1:].copy()
        self.k, self.n_ini_lo = cond.densities.copy(), cond.x_values[:-1].copy()
        self.x_values = cond.x_values.copy()
        self.traces = {}
        for side, ts, qs, vs in (("up", cond.up_times, cond.up_flows, cond.up_values),
                                 ("down", cond.down_times, cond.down_flows, cond.down_values)):
            self.traces[side] = {"t": _Buffer(ts), "q": _Buffer(qs), "n": _Buffer(vs),
                                 "u": _Buffer(comp.flow_speeds(fd, qs, side == "up"))}
        self.t = float(cond.up_times[-1])
        self.step = 0
        self.op_count = {"up": 0, "down": 0}
        self.last_ops = {"up": 0, "down": 0}
        self._cache = {}

    @property
    def n_up(self):
        tr = self.traces["up"]["n"]
        return float(tr.data[tr.size - 1])

    @property
    def n_down(self):
        tr = self.traces["down"]["n"]
        return float(tr.data[tr.size - 1])

    def stored(self) -> float:
        return self.n_up - self.n_down

    @property
    def condition(self) -> LinkValueCondition:
        up, dn = self.traces["up"], self.traces["down"]
        return LinkValueCondition(np.r_[self.x_lo, self.x_hi[-1]], self.k.copy(), self.x_values.copy(),
                                  up["t"].view.copy(), up["q"].view.copy(), up["n"].view.copy(),
                                  dn["t"].view.copy(), dn["q"].view.copy(), dn["n"].view.copy())

    def prospective(self, side: str) -> float:
        key = (side, self.step)
        if key in self._cache:
            return self._cache[key]
        fd, t = self.fd, self.t + self.dt
        downstream = side == "down"
        x = self.xn if downstream else self.x0
        own = self.traces[side]
        other = self.traces["up" if downstream else "down"]
        speed = fd.v_max if downstream else -fd.w_min
        best = float(own["n"].data[own["n"].size - 1]) + fd.q_max * self.dt
        ini = comp.initial_values(fd, self.x_lo, self.x_hi, self.k, self.n_ini_lo, x, t)
        best = min(best, float(ini.min()))
        ts = other["t"].view
        m = comp.arrived_count(ts, self.length, speed, t)
        if m:
            bv = comp.boundary_values(fd, ts[:m], ts[1:m + 1], other["q"].view[:m], other["n"].view[:m],
                                      self.length, t, downstream, other["u"].view[:m])
            best = min(best, float(bv.min()))
        ops = len(self.k) + m + 1
        self.last_ops[side] = ops
        self.op_count[side] += ops
        self._cache[key] = best
        return best

    def demand(self) -> float:
        d = (self.prospective("down") - self.n_down) / self.dt
        return min(max(d, 0.0), self.fd.q_max)

    def supply(self) -> float:
        s = (self.prospective("up") - self.n_up) / self.dt
        return min(max(s, 0.0), self.fd.q_max)

    def advance(self, inflow: float, outflow: float):
        t_next = self.t + self.dt
        for side, q in (("up", inflow), ("down", outflow)):
            tr = self.traces[side]
            q = min(max(float(q), 0.0), self.fd.q_max)
            n_end = float(tr["n"].data[tr["n"].size - 1])
            tr["t"].append(t_next)
            tr["q"].append(q)
            tr["n"].append(n_end + q * self.dt)
            tr["u"].append(comp.flow_speeds(self.fd, [q], side == "up")[0])
        self.t = t_next
        self.step += 1
        self._cache.clear()
        return self.n_up, self.n_down


# ---------------------------------------------------------------------------
# cell transmission
# ---------------------------------------------------------------------------

class CtmLink:
    """Godunov scheme on cells of length at least ``max(v, |w|) dt``.

    The link is cut into ``floor(L / (c dt))`` cells, ``c`` being the fastest
    wave speed; the last cell absorbs the remainder.  Initial densities are
    cell averages of the initial profile.
    """

    def __init__(self, cond: LinkValueCondition, fd, dt: float, record: bool = False):
        self.fd = fd
        self.dt = float(dt)
        self.x0, self.xn = cond.x0, cond.xn
        length = self.xn - self.x0
        cmax = max(fd.v_max, -fd.w_min)
        count = int(math.floor(length / (cmax * self.dt) * (1 + 1e-12)))
        if count < 1:
            raise CFLViolation(f"link of length {length!r} is shorter than one cell ({cmax * dt!r})")
        base = cmax * self.dt
        widths = np.full(count, base)
        widths[-1] = length - base * (count - 1)
        self.widths = widths
        self.edges = self.x0 + np.concatenate([[0.0], np.cumsum(widths)])
        self.edges[-1] = self.xn
        n_edges = np.interp(self.edges, cond.x_breaks, cond.x_values)
        self.k = np.clip(-np.diff(n_edges) / widths, 0.0, fd.k_jam)
        self.n_up = float(n_edges[0])
        self.n_down = float(n_edges[-1])
        self.t = float(cond.up_times[-1])
        self.step = 0
        self.record = record
        self.snapshots = [self.k.copy()] if record else []
        self.n_up_hist = [self.n_up] if record else []
        self._ds = None

    @property
    def cell_count(self) -> int:
        return len(self.k)

    @property
    def dx(self) -> float:
        return float(self.widths[0])

    def _demand_supply(self):
        if self._ds is None:
            self._ds = self.fd.demand_supply(self.k)
        return self._ds

    def demand(self) -> float:
        return float(self._demand_supply()[0][-1])

    def supply(self) -> float:
        return float(self._demand_supply()[1][0])

    def stored(self) -> float:
        return float(np.dot(self.k, self.widths))

    def advance(self, inflow: float, outflow: float):
        d, s = self._demand_supply()
        flux = np.empty(len(self.k) + 1)
        flux[0] = inflow
        flux[-1] = outflow
        flux[1:-1] = np.minimum(d[:-1], s[1:])
        self.k = np.clip(self.k + self.dt / self.widths * (flux[:-1] - flux[1:]), 0.0, self.fd.k_jam)
        self.n_up += inflow * self.dt
        self.n_down += outflow * self.dt
        self.t += self.dt
        self.step += 1
        self._ds = None
        if self.record:
            self.snapshots.append(self.k.copy())
            self.n_up_hist.append(self.n_up)
        return self.n_up, self.n_down

    def probe(self, x: float, t: float):
        """Count and density read from the cell containing ``x`` at step ``floor(t / dt)``."""
        if not self.record:
            raise ContractError("CTM probing needs record=True")
        i = int(math.floor(t / self.dt + 1e-9))
        if i < 0 or i >= len(self.snapshots) or x < self.x0 - 1e-9 or x > self.xn + 1e-9:
            raise ValidationError(f"probe ({x}, {t}) outside the simulated domain")
        k = self.snapshots[i]
        c = min(int(np.searchsorted(self.edges, x, side="right")) - 1, len(k) - 1)
        n = self.n_up_hist[i] - float(np.dot(k[:c], self.widths[:c])) - k[c] * (x - self.edges[c])
        return n, float(k[c])


def ctm_step(state: CtmLink, inflow: float, outflow: float):
    """Apply one Godunov update and return the link's new ``(demand, supply)``."""
    state.advance(inflow, outflow)
    return state.demand(), state.supply()


# ---------------------------------------------------------------------------
# link transmission
# ---------------------------------------------------------------------------

class LtmLink:
    """Cumulative curves at both ends, propagated along the two wave speeds.

    Before ``t = 0`` the curves are read off the initial profile by the same
    translation: ``N_up(-s) = c(x0 + v s)`` and
    ``N_down(-s) = c(xn - |w| s) - k_jam |w| s``.
    """

    def __init__(self, cond: LinkValueCondition, fd, dt: float):
        if not isinstance(fd, TriangularFD):
            raise ContractError("the link transmission model needs a triangular diagram")
        self.fd = fd
        self.dt = float(dt)
        self.x0, self.xn = cond.x0, cond.xn
        self.length = self.xn - self.x0
        if self.dt > self.length / max(fd.v_free, -fd.w_cong) * (1 + 1e-12):
            raise CFLViolation(f"dt={dt!r} exceeds the link travel time")
        self.lag_free = self.length / fd.v_free
        self.lag_cong = self.length / -fd.w_cong
        self._xb, self._xv = cond.x_breaks, cond.x_values
        self.t0 = float(cond.up_times[-1])
        self.t = self.t0
        self.step = 0
        self.up = [float(cond.x_values[0])]
        self.down = [float(cond.x_values[-1])]

    @property
    def n_up(self):
        return self.up[-1]

    @property
    def n_down(self):
        return self.down[-1]

    def _ini(self, x):
        return float(np.interp(x, self._xb, self._xv))

    def curve_up(self, tau):
        """Upstream cumulative count at any time (linear between samples)."""
        s = (tau - self.t0) / self.dt
        if s < 0:
            return self._ini(self.x0 + self.fd.v_free * (self.t0 - tau))
        return self._sample(self.up, s)

    def curve_down(self, tau):
        """Downstream cumulative count at any time (linear between samples)."""
        s = (tau - self.t0) / self.dt
        if s < 0:
            back = -self.fd.w_cong * (self.t0 - tau)
            return self._ini(self.xn - back) - self.fd.k_jam * back
        return self._sample(self.down, s)

    @staticmethod
    def _sample(curve, s):
        i = int(s)
        if i >= len(curve) - 1:
            return curve[-1]
        f = s - i
        return curve[i] + f * (curve[i + 1] - curve[i]) if f > 0 else curve[i]

    def demand(self) -> float:
        fd, t = self.fd, self.t
        sent = min(self.curve_up(t + self.dt - self.lag_free), self.down[-1] + fd.q_max * self.dt)
        return min(max((sent - self.down[-1]) / self.dt, 0.0), fd.q_max)

    def supply(self) -> float:
        fd, t = self.fd, self.t
        room = min(self.curve_down(t + self.dt - self.lag_cong) + fd.k_jam * self.length,
                   self.up[-1] + fd.q_max * self.dt)
        return min(max((room - self.up[-1]) / self.dt, 0.0), fd.q_max)

    def stored(self) -> float:
        return self.up[-1] - self.down[-1]

    def advance(self, inflow: float, outflow: float):
        self.up.append(self.up[-1] + inflow * self.dt)
        self.down.append(self.down[-1] + outflow * self.dt)
        self.t += self.dt
        self.step += 1
        return self.up[-1], self.down[-1]


def ltm_boundary_step(state: LtmLink, inflow: float, outflow: float):
    """Append the step's flows and return the link's next ``(demand, supply)``."""
    state.advance(inflow, outflow)
    return state.demand(), state.supply()


def ltm_interior_probe(state: LtmLink, x: float, t: float) -> float:
    """Interior count from the two translated boundary curves only.

    This ignores expansion fans and is therefore wrong in general; it exists
    to measure that error.
    """
    fd = state.fd
    if x < state.x0 - 1e-9 or x > state.xn + 1e-9:
        raise ProbeRefused(f"x={x!r} outside the link")
    up = state.curve_up(t - (x - state.x0) / fd.v_free)
    dist = state.xn - x
    down = state.curve_down(t - dist / -fd.w_cong) + fd.k_jam * dist
    return min(up, down)
