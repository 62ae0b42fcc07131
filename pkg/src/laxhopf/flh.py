"""Boundary values with permanent candidate pruning.

A :class:`FlhLink` advances one link in time.  At every step it returns the
prospective boundary values at ``t + dt`` (from which demand and supply
follow), then receives the actual boundary flows and appends them.

Two evaluation modes exist:

``general``
    Any concave diagram.  Each boundary keeps the set of surviving initial
    blocks and opposite-boundary blocks.  Candidates are dropped for good
    when another candidate dominates them:

    * initial vs initial: at the downstream end a lower index that is no
      larger than a higher one stays no larger forever (mirrored upstream);
    * boundary vs boundary: an opposite-boundary block whose first
      characteristic has crossed the link dominates every earlier one it
      beats;
    * boundary vs initial: an activated opposite-boundary block removes
      every initial block it beats.

``cfl``
    Triangular diagram, equal-width initial blocks, boundary blocks of one
    time step each and ``dt <= dx / max(v, |w|)``.  Only the one or two
    blocks whose characteristics newly reach the boundary during the step
    are evaluated, plus the previous boundary value grown at capacity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import components as comp
from .errors import ContractError, SequencingError, ValidationError, CFLViolation
from .fundamental_diagram import TriangularFD
from .value_conditions import LinkValueCondition

INF = math.inf
_EPS = 1e-12


def _tie(v):
    return _EPS * (1.0 + abs(v))


@dataclass
class BoundaryCursor:
    """Pruning state at one end of a link.

    ``alive_ini`` lists surviving initial block indices in increasing order;
    ``lo_active_bdry`` is the earliest surviving opposite-boundary block.
    """

    side: str
    alive_ini: list
    ini_retired: bool = False
    lo_active_bdry: int = 0
    last_value: float = 0.0
    last_time: float = 0.0
    op_count: int = 0
    last_ops: int = 0

    @property
    def hi_active_ini(self) -> int:
        """Boundary-adjacent surviving initial index (-1 once none survive)."""
        if not self.alive_ini:
            return -1
        return self.alive_ini[-1] if self.side == "down" else self.alive_ini[0]


class FlhLink:
    """Single-link solver state.

    Parameters
    ----------
    cond : LinkValueCondition
        Initial condition; any boundary blocks already present are kept.
    fd : FundamentalDiagram
    dt : float
        Time step.  Must not exceed the shortest boundary-to-boundary
        travel time ``L / max(v_max, |w_min|)``.
    mode : {"auto", "general", "cfl"}
        ``auto`` picks ``cfl`` when its assumptions hold.
    """

    def __init__(self, cond: LinkValueCondition, fd, dt: float, mode: str = "auto"):
        self.fd = fd
        self.dt = float(dt)
        self.x0, self.xn = cond.x0, cond.xn
        self.length = self.xn - self.x0
        self.lag_free = self.length / fd.v_max
        self.lag_cong = self.length / -fd.w_min
        if self.dt <= 0:
            raise ValidationError(f"dt={dt!r} must be > 0")
        if self.dt > min(self.lag_free, self.lag_cong) * (1 + 1e-12):
            raise CFLViolation(
                f"dt={dt!r} exceeds the link travel time {min(self.lag_free, self.lag_cong)!r}")
        xs = cond.x_breaks
        self.ini_lo = [float(v) for v in xs[:-1]]
        self.ini_hi = [float(v) for v in xs[1:]]
        self.ini_k = [float(v) for v in cond.densities]
        self.ini_n = [float(v) for v in cond.x_values[:-1]]
        self.n_ini = len(self.ini_k)
        self.up = _Trace(fd, True, cond.up_times, cond.up_flows, cond.up_values)
        self.down = _Trace(fd, False, cond.down_times, cond.down_flows, cond.down_values)
        if abs(self.up.end - self.down.end) > 1e-9 * (1 + abs(self.up.end)):
            raise SequencingError("upstream and downstream traces end at different times")
        self.t = self.up.end
        self.t_start = float(cond.up_times[0])
        self.step = 0
        self.dx = self.length / self.n_ini
        cfl_ok = (isinstance(fd, TriangularFD) and cond.is_regular
                  and self.dt <= self.dx / max(fd.v_free, -fd.w_cong) * (1 + 1e-12)
                  and len(self.up.q) == 0 and len(self.down.q) == 0)
        if mode == "auto":
            mode = "cfl" if cfl_ok else "general"
        elif mode == "cfl" and not cfl_ok:
            raise ContractError("cfl mode needs a triangular diagram, equal-width initial blocks, "
                                "dt <= dx / max(v, |w|) and empty boundary traces")
        elif mode not in ("cfl", "general"):
            raise ValidationError(f"unknown mode {mode!r}")
        self.mode = mode
        self.cursors = {
            "down": BoundaryCursor("down", list(range(self.n_ini)), last_value=self.down.n_end,
                                   last_time=self.t),
            "up": BoundaryCursor("up", list(range(self.n_ini)), last_value=self.up.n_end,
                                 last_time=self.t),
        }
        self._pd = self._pu = None
        self._qmax = fd.q_max
        self._cfl = mode == "cfl"
        self._tri = isinstance(fd, TriangularFD)
        if self._tri:
            self._jam_room = fd.k_jam * self.length
        if self._cfl:
            self._down_fn, self._up_fn = self._cfl_down, self._cfl_up
        else:
            self._down_fn = lambda: self._general_value("down")
            self._up_fn = lambda: self._general_value("up")

    # ------------------------------------------------------------------
    @property
    def condition(self) -> LinkValueCondition:
        """Current value condition with every appended boundary block."""
        xs = np.array(self.ini_lo + [self.ini_hi[-1]])
        vals = np.array(self.ini_n + [self.ini_n[-1] - self.ini_k[-1] * (xs[-1] - xs[-2])])
        return LinkValueCondition(xs, np.array(self.ini_k), vals, *self.up.arrays(), *self.down.arrays())

    @property
    def n_up(self) -> float:
        return self.up.n_end

    @property
    def n_down(self) -> float:
        return self.down.n_end

    def stored(self) -> float:
        """Vehicles on the link: count at the entry minus count at the exit."""
        return self.up.n_end - self.down.n_end

    def _ini_eval(self, i, x, t):
        return comp.ini_value(self.fd, self.ini_lo[i], self.ini_hi[i], self.ini_k[i], self.ini_n[i], x, t)

    # ------------------------------------------------------------------
    def prospective(self, side: str) -> float:
        """Boundary value at ``t + dt`` ignoring any own-side block for the step."""
        if side == "down":
            if self._pd is None:
                self._pd = self._down_fn()
            return self._pd
        if side == "up":
            if self._pu is None:
                self._pu = self._up_fn()
            return self._pu
        raise ValueError(f"side must be 'up' or 'down', got {side!r}")

    def demand(self) -> float:
        v = self._pd
        if v is None:
            v = self._pd = self._down_fn()
        d = (v - self.down.n_end) / self.dt
        return 0.0 if d < 0.0 else (d if d < self._qmax else self._qmax)

    def supply(self) -> float:
        v = self._pu
        if v is None:
            v = self._pu = self._up_fn()
        s = (v - self.up.n_end) / self.dt
        return 0.0 if s < 0.0 else (s if s < self._qmax else self._qmax)

    def advance(self, inflow: float, outflow: float):
        """Append the step's boundary flows and move to ``t + dt``."""
        t_next = self.t + self.dt
        up, down = self.up, self.down
        if self._tri:
            # the triangular push, inlined for the per-step hot path
            qm = self._qmax
            q = 0.0 if inflow < 0.0 else (inflow if inflow < qm else qm)
            n = up.n_end = up.n_end + q * (t_next - up.end)
            up.end = t_next
            up.ts.append(t_next)
            up.ns.append(n)
            up.q.append(q)
            q = 0.0 if outflow < 0.0 else (outflow if outflow < qm else qm)
            n = down.n_end = down.n_end + q * (t_next - down.end)
            down.end = t_next
            down.ts.append(t_next)
            down.ns.append(n)
            down.q.append(q)
        else:
            up.push(t_next, inflow)
            down.push(t_next, outflow)
        self.t = t_next
        self.step += 1
        self._pd = self._pu = None
        return self.up.n_end, self.down.n_end

    def _touch(self, cur, own):
        if self.t < cur.last_time - 1e-9 * (1 + abs(self.t)):
            raise SequencingError(f"cursor at t={cur.last_time!r}, link at t={self.t!r}")
        cur.last_time = self.t
        cur.last_value = own.n_end

    # ------------------------------------------------------------------
    def _general_value(self, side: str) -> float:
        cur = self.cursors[side]
        fd, t = self.fd, self.t + self.dt
        downstream = side == "down"
        own = self.down if downstream else self.up
        other = self.up if downstream else self.down
        self._touch(cur, own)
        x = self.xn if downstream else self.x0
        lag = self.lag_free if downstream else self.lag_cong
        speed = fd.v_max if downstream else -fd.w_min
        ops = 1
        best = own.n_end + fd.q_max * self.dt

        ini_vals = {}
        if not cur.ini_retired:
            order = reversed(cur.alive_ini) if downstream else iter(cur.alive_ini)
            for i in order:
                reach = (self.ini_hi[i] + speed * t >= x) if downstream else (self.ini_lo[i] - speed * t <= x)
                if not reach:
                    break
                v = self._ini_eval(i, x, t)
                ops += 1
                ini_vals[i] = v
            # dominance among initial blocks (lower index wins downstream)
            keep = []
            run = INF
            seq = cur.alive_ini if downstream else cur.alive_ini[::-1]
            for i in seq:
                v = ini_vals.get(i, INF)
                if v < INF and run <= v + _tie(v):
                    continue
                keep.append(i)
                run = min(run, v)
            cur.alive_ini = keep if downstream else keep[::-1]
            if ini_vals:
                best = min(best, min(ini_vals.values()))

        n_arr = comp.arrived_count(other.t_lo_arr(), self.length, speed, t)
        bvals = {}
        for j in range(cur.lo_active_bdry, n_arr):
            v = other.value(j, self.length, t)
            ops += 1
            bvals[j] = v
        if bvals:
            best = min(best, min(bvals.values()))
            act = [j for j in bvals if t > other.ts[j] + lag + _tie(t)]
            if act:
                jb = min(act, key=lambda j: bvals[j])
                vb = bvals[jb]
                # later activated blocks beat earlier ones for good
                newest = max(act)
                vn = bvals[newest]
                lo = cur.lo_active_bdry
                while lo < newest and vn <= bvals[lo] + _tie(bvals[lo]):
                    lo += 1
                cur.lo_active_bdry = lo
                if not cur.ini_retired and t >= lag:
                    cur.alive_ini = [i for i in cur.alive_ini
                                     if i not in ini_vals or vb > ini_vals[i] + _tie(ini_vals[i])]
                    if not cur.alive_ini:
                        cur.ini_retired = True
        cur.last_ops = ops
        cur.op_count += ops
        return best

    def _cfl_value(self, side: str) -> float:
        if side == "down":
            return self._cfl_down()
        if side == "up":
            return self._cfl_up()
        raise ValueError(f"side must be 'up' or 'down', got {side!r}")

    def _cfl_down(self) -> float:
        cur, own, other = self.cursors["down"], self.down, self.up
        # the link clock only moves forward in advance(), so no sequencing check here
        cur.last_time = t = self.t
        cur.last_value = own.n_end
        dt = self.dt
        t += dt
        rel = t - self.t_start
        best = own.n_end + self._qmax * dt
        lag = self.lag_free
        if rel <= lag * (1 + _EPS):
            # the initial blocks newly reached by free-flow characteristics
            fd, n = self.fd, self.n_ini
            shift = int(fd.v_free * rel / self.dx + 1e-9)
            edge = n - 1 - shift
            ops = 1
            for i in (edge, edge + 1):
                if 0 <= i < n:
                    val = _ini_tri_value(fd, self.ini_lo[i], self.ini_hi[i], self.ini_k[i],
                                         self.ini_n[i], self.xn, t)
                    if val < best:
                        best = val
                    ops += 1
            alive = cur.alive_ini
            if alive and alive[-1] > edge + 1:
                del alive[max(edge + 2, 0):]
        else:
            # one upstream block: the one containing t - L / v
            if not cur.ini_retired:
                cur.alive_ini = []
                cur.ini_retired = True
                self._down_fn = self._cfl_down_late
                self._cur_down = cur
            tau = rel - lag
            j = int(tau / dt + 1e-9)
            last = len(other.q) - 1
            if j > last:
                j = last
            t_lo, t_hi = other.ts[j], other.ts[j + 1]
            tau += self.t_start
            if tau <= t_hi:
                val = other.ns[j] + other.q[j] * (tau - t_lo)
            else:
                fd = self.fd
                val = (other.ns[j] + other.q[j] * (t_hi - t_lo)
                       + fd.k_crit * (fd.v_free * (t - t_hi) - self.length))
            if val < best:
                best = val
            ops = 2
            cur.lo_active_bdry = j
        cur.last_ops = ops
        cur.op_count += ops
        return best

    def _cfl_up(self) -> float:
        cur, own, other = self.cursors["up"], self.up, self.down
        # the link clock only moves forward in advance(), so no sequencing check here
        cur.last_time = t = self.t
        cur.last_value = own.n_end
        dt = self.dt
        t += dt
        rel = t - self.t_start
        best = own.n_end + self._qmax * dt
        lag = self.lag_cong
        if rel <= lag * (1 + _EPS):
            # the initial blocks newly reached by congested characteristics
            fd, n = self.fd, self.n_ini
            edge = int(-fd.w_cong * rel / self.dx + 1e-9)
            ops = 1
            for i in (edge, edge - 1):
                if 0 <= i < n:
                    val = _ini_tri_value(fd, self.ini_lo[i], self.ini_hi[i], self.ini_k[i],
                                         self.ini_n[i], self.x0, t)
                    if val < best:
                        best = val
                    ops += 1
            alive = cur.alive_ini
            if alive and alive[0] < edge - 1:
                del alive[:min(edge - 1, n) - alive[0]]
        else:
            # one downstream block: the one containing t - L / |w|
            if not cur.ini_retired:
                cur.alive_ini = []
                cur.ini_retired = True
                self._up_fn = self._cfl_up_late
                self._cur_up = cur
            tau = rel - lag
            j = int(tau / dt + 1e-9)
            last = len(other.q) - 1
            if j > last:
                j = last
            t_lo, t_hi = other.ts[j], other.ts[j + 1]
            tau += self.t_start
            fd = self.fd
            if tau <= t_hi:
                val = other.ns[j] + other.q[j] * (tau - t_lo) + fd.k_jam * self.length
            else:
                val = (other.ns[j] + other.q[j] * (t_hi - t_lo)
                       + fd.k_crit * (fd.v_free * (t - t_hi) + self.length))
            if val < best:
                best = val
            ops = 2
            cur.lo_active_bdry = j
        cur.last_ops = ops
        cur.op_count += ops
        return best

    # once every initial block is out of reach only one opposite block matters

    def _cfl_down_late(self) -> float:
        cur = self._cur_down
        cur.last_time = t = self.t
        n_end = cur.last_value = self.down.n_end
        dt = self.dt
        t += dt
        other = self.up
        q = other.q
        j = int((t - self.t_start - self.lag_free) / dt + 1e-9)
        if j >= len(q):
            j = len(q) - 1
        ts = other.ts
        t_hi = ts[j + 1]
        tau = t - self.lag_free
        if tau <= t_hi:
            val = other.ns[j] + q[j] * (tau - ts[j])
        else:
            fd = self.fd
            val = other.ns[j + 1] + fd.k_crit * (fd.v_free * (t - t_hi) - self.length)
        cap = n_end + self._qmax * dt
        cur.lo_active_bdry = j
        cur.op_count += 2
        return val if val < cap else cap

    def _cfl_up_late(self) -> float:
        cur = self._cur_up
        cur.last_time = t = self.t
        n_end = cur.last_value = self.up.n_end
        dt = self.dt
        t += dt
        other = self.down
        q = other.q
        j = int((t - self.t_start - self.lag_cong) / dt + 1e-9)
        if j >= len(q):
            j = len(q) - 1
        ts = other.ts
        t_hi = ts[j + 1]
        tau = t - self.lag_cong
        if tau <= t_hi:
            val = other.ns[j] + q[j] * (tau - ts[j]) + self._jam_room
        else:
            fd = self.fd
            val = other.ns[j + 1] + fd.k_crit * (fd.v_free * (t - t_hi) + self.length)
        cap = n_end + self._qmax * dt
        cur.lo_active_bdry = j
        cur.op_count += 2
        return val if val < cap else cap


def _ini_tri_value(fd, x_lo, x_hi, k, n_lo, x, t):
    v, w, kc = fd.v_free, fd.w_cong, fd.k_crit
    eps = _EPS * (1.0 + abs(x) + abs(x_hi))
    if k < kc:
        if x >= x_lo + t * v - eps:
            if x > x_hi + t * v + eps:
                return INF
            return n_lo - k * (x - x_lo) + t * v * k
        if x >= x_lo + t * w - eps:
            return n_lo + kc * (t * v - (x - x_lo))
        return INF
    if x <= x_hi + t * w + eps:
        if x < x_lo + t * w - eps:
            return INF
        return n_lo - k * (x - x_lo) + t * w * (k - fd.k_jam)
    if x <= x_hi + t * v + eps:
        return n_lo - k * (x_hi - x_lo) + kc * (t * v - (x - x_hi))
    return INF


class _Trace:
    """Append-only boundary trace held in Python lists for fast scalar access.

    ``ts`` and ``ns`` hold the block edges and the values there, so block
    ``j`` spans ``[ts[j], ts[j + 1]]`` and starts at value ``ns[j]``.
    """

    def __init__(self, fd, upstream, times, flows, values):
        self.fd = fd
        self.upstream = upstream
        self.ts = [float(v) for v in times]
        self.ns = [float(v) for v in values]
        self.q = [float(v) for v in flows]
        self.end = self.ts[-1]
        self.n_end = self.ns[-1]
        self._tri = isinstance(fd, TriangularFD)
        self.q_max = fd.q_max
        self.u_q = [] if self._tri else [self._speed(q) for q in self.q]
        self._t_lo_arr = None

    @property
    def start(self):
        return self.ts[0]

    @property
    def n_start(self):
        return self.ns[0]

    @property
    def t_lo(self):
        return self.ts[:-1]

    @property
    def t_hi(self):
        return self.ts[1:]

    @property
    def n_lo(self):
        return self.ns[:-1]

    def _speed(self, q):
        if self._tri:
            return 0.0
        return self.fd.free_speed(q) if self.upstream else self.fd.congested_speed(q)

    def append(self, t_lo, t_hi, q):
        end = self.end
        if t_lo != end and abs(t_lo - end) > 1e-9 * (1 + abs(t_lo)):
            raise SequencingError(f"block starts at {t_lo!r} but the trace ends at {end!r}")
        self.push(t_hi, q)

    def push(self, t_hi, q):
        """Append a block starting at the current trace end."""
        if q < 0.0:
            q = 0.0
        elif q > self.q_max:
            q = self.q_max
        n = self.n_end = self.n_end + q * (t_hi - self.end)
        self.end = t_hi
        self.ts.append(t_hi)
        self.ns.append(n)
        self.q.append(q)
        if not self._tri:
            self.u_q.append(self._speed(q))

    def t_lo_arr(self):
        arr = self._t_lo_arr
        if arr is None or len(arr) != len(self.ts):
            arr = self._t_lo_arr = np.array(self.ts)
        return arr

    def value(self, j, dist, t):
        f = comp.up_value if self.upstream else comp.down_value
        u_q = None if self._tri else self.u_q[j]
        return f(self.fd, self.ts[j], self.ts[j + 1], self.q[j], self.ns[j], dist, t, u_q)

    def arrays(self):
        return np.array(self.ts), np.array(self.q), np.array(self.ns)


# ---------------------------------------------------------------------------
# functional surface
# ---------------------------------------------------------------------------

def boundary_value_step(state: FlhLink, side: str) -> float:
    """Prospective boundary value ``N(boundary, t + dt)`` with pruning (general mode)."""
    if side not in ("up", "down"):
        raise ValueError(f"side must be 'up' or 'down', got {side!r}")
    if state.mode != "general":
        raise ContractError("boundary_value_step needs a link in general mode; use cfl_boundary_step")
    return state.prospective(side)


def cfl_boundary_step(state: FlhLink, side: str) -> float:
    """Prospective boundary value in the equal-width triangular mode."""
    if state.mode != "cfl":
        raise ContractError("cfl_boundary_step needs a link in cfl mode")
    if side not in ("up", "down"):
        raise ValueError(f"side must be 'up' or 'down', got {side!r}")
    return state.prospective(side)


def demand(state: FlhLink) -> float:
    return state.demand()


def supply(state: FlhLink) -> float:
    return state.supply()


# ---------------------------------------------------------------------------
# interior points
# ---------------------------------------------------------------------------

@dataclass
class PointPruneState:
    """Surviving initial blocks per queried position, for repeated queries in time."""

    alive: dict = field(default_factory=dict)
    last_t: dict = field(default_factory=dict)
    last_ops: int = 0


def solve_point_flh(cond: LinkValueCondition, fd, x: float, t: float, prune_state: PointPruneState = None):
    """Moskowitz value at ``(x, t)`` evaluating few components.

    For a triangular diagram only one upstream and one downstream boundary
    block can be minimal: the ones whose trace time the characteristics
    reach.  An initial block is dropped for good once the current minimum is
    no larger than its value and the block has entered its capacity fan at
    ``x``, after which it grows at ``q_max`` and can never win again.

    Other diagrams fall back to :func:`components.solve_point_lh`.
    Queries for one ``x`` must come with nondecreasing ``t``.
    """
    x, t = float(x), float(t)
    if prune_state is None:
        prune_state = PointPruneState()
    if not isinstance(fd, TriangularFD):
        val, ops = comp.solve_point_lh(cond, fd, x, t, return_count=True)
        prune_state.last_ops = ops
        return val
    key = x
    if key in prune_state.last_t and t < prune_state.last_t[key] - 1e-12 * (1 + abs(t)):
        raise SequencingError(f"query at t={t!r} after t={prune_state.last_t[key]!r} for x={x!r}")
    prune_state.last_t[key] = t
    alive = prune_state.alive.setdefault(key, list(range(cond.n_ini)))
    v, w = fd.v_free, fd.w_cong
    xs, ks, ns = cond.x_breaks, cond.densities, cond.x_values
    ops = 0
    vals = {}
    for i in alive:
        x_lo, x_hi = float(xs[i]), float(xs[i + 1])
        if x > x_hi + t * v or x < x_lo + t * w:
            continue
        vals[i] = comp.ini_value(fd, x_lo, x_hi, float(ks[i]), float(ns[i]), x, t)
        ops += 1
    bdry = INF
    for upstream, times, flows, values, dist, speed in (
        (True, cond.up_times, cond.up_flows, cond.up_values, x - cond.x0, v),
        (False, cond.down_times, cond.down_flows, cond.down_values, cond.xn - x, -w),
    ):
        if len(flows) == 0:
            continue
        tau = t - dist / speed
        if tau < times[0] - 1e-12 * (1 + abs(t)):
            continue
        j = int(np.searchsorted(times, tau, side="right")) - 1
        j = min(max(j, 0), len(flows) - 1)
        f = comp.up_value if upstream else comp.down_value
        bdry = min(bdry, f(fd, float(times[j]), float(times[j + 1]), float(flows[j]), float(values[j]), dist, t))
        ops += 1
    best = min([bdry] + list(vals.values()))
    # a block in its capacity fan grows at q_max from now on, so it can be
    # dropped once some other candidate is already no larger
    keep = []
    pool = dict(vals)
    for i in alive:
        if i in vals:
            x_lo, x_hi = float(xs[i]), float(xs[i + 1])
            if ks[i] < fd.k_crit:
                fan = t > (x - x_lo) / v
            else:
                fan = t > (x_hi - x) / -w
            if fan:
                others = min([bdry] + [u for j, u in pool.items() if j != i])
                if others <= vals[i] + _tie(vals[i]):
                    del pool[i]
                    continue
        keep.append(i)
    prune_state.alive[key] = keep
    prune_state.last_ops = ops
    return best
