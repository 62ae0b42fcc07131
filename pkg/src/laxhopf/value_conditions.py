"""Piecewise-linear initial and boundary conditions of the Moskowitz function.

A :class:`LinkValueCondition` stores breakpoints and the value of the
cumulative count at every breakpoint, so continuity holds by construction
and block offsets are always recomputed, never taken from user input.

Initial block ``i`` covers ``[x_i, x_{i+1}]`` with ``c(x) = -k_i x + b_i``.
Boundary block ``j`` covers ``[t_j, t_{j+1}]`` with ``c(t) = q_j t + d_j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import ConstraintViolation, SequencingError

CONTINUITY_TOL = 1e-9
_RANGE_SLACK = 1e-12


class InitialBlock(NamedTuple):
    index: int
    x_lo: float
    x_hi: float
    k: float
    b: float

    def value(self, x):
        return -self.k * x + self.b


class BoundaryBlock(NamedTuple):
    index: int
    t_lo: float
    t_hi: float
    flow: float
    offset: float

    def value(self, t):
        return self.flow * t + self.offset


class Violation(NamedTuple):
    kind: str  # "density" | "flow" | "continuity" | "corner"
    side: str  # "initial" | "up" | "down"
    index: int
    residual: float


def _cumulative(start, breaks, rates, sign):
    widths = np.diff(breaks)
    out = np.empty(len(breaks))
    out[0] = start
    out[1:] = start + sign * np.cumsum(rates * widths)
    return out


@dataclass(frozen=True, eq=False)
class LinkValueCondition:
    """Value condition on one link: initial profile plus boundary traces."""

    x_breaks: np.ndarray
    densities: np.ndarray
    x_values: np.ndarray
    up_times: np.ndarray
    up_flows: np.ndarray
    up_values: np.ndarray
    down_times: np.ndarray
    down_flows: np.ndarray
    down_values: np.ndarray

    @property
    def x0(self) -> float:
        return float(self.x_breaks[0])

    @property
    def xn(self) -> float:
        return float(self.x_breaks[-1])

    @property
    def n_ini(self) -> int:
        return len(self.densities)

    @property
    def initial_blocks(self) -> list:
        xs, ks, vs = self.x_breaks, self.densities, self.x_values
        return [InitialBlock(i, float(xs[i]), float(xs[i + 1]), float(ks[i]),
                             float(vs[i] + ks[i] * xs[i])) for i in range(self.n_ini)]

    @property
    def upstream_blocks(self) -> list:
        return self._blocks(self.up_times, self.up_flows, self.up_values)

    @property
    def downstream_blocks(self) -> list:
        return self._blocks(self.down_times, self.down_flows, self.down_values)

    @staticmethod
    def _blocks(ts, qs, vs):
        return [BoundaryBlock(j, float(ts[j]), float(ts[j + 1]), float(qs[j]),
                              float(vs[j] - qs[j] * ts[j])) for j in range(len(qs))]

    def initial_value(self, x: float) -> float:
        """Initial Moskowitz value c_ini(x) for ``x`` in ``[x0, xn]``."""
        return float(np.interp(x, self.x_breaks, self.x_values))

    def boundary_value(self, side: str, t: float) -> float:
        ts, vs = (self.up_times, self.up_values) if side == "up" else (self.down_times, self.down_values)
        return float(np.interp(t, ts, vs))

    @cached_property
    def is_regular(self) -> bool:
        """True if all initial blocks share one width."""
        w = np.diff(self.x_breaks)
        return bool(np.all(np.abs(w - w[0]) <= 1e-9 * w[0]))

    def with_boundaries(self, up_times, up_flows, down_times, down_flows) -> "LinkValueCondition":
        """Replace both boundary traces; values are rebuilt from continuity."""
        up_times = np.asarray(up_times, dtype=float)
        down_times = np.asarray(down_times, dtype=float)
        up_flows = np.asarray(up_flows, dtype=float)
        down_flows = np.asarray(down_flows, dtype=float)
        return LinkValueCondition(
            self.x_breaks, self.densities, self.x_values,
            up_times, up_flows, _cumulative(self.x_values[0], up_times, up_flows, 1.0),
            down_times, down_flows, _cumulative(self.x_values[-1], down_times, down_flows, 1.0),
        )


def from_density_profile(x_breaks, densities, n_at_x0=0.0, k_jam=None, t0=0.0) -> LinkValueCondition:
    """Initial condition from a piecewise-constant density profile.

    Offsets follow from continuity: ``b_0 = N(x_0) + k_0 x_0`` and
    ``b_{i+1} = b_i + (k_{i+1} - k_i) x_{i+1}``.
    """
    xs = np.asarray(x_breaks, dtype=float)
    ks = np.asarray(densities, dtype=float)
    if xs.ndim != 1 or len(xs) != len(ks) + 1 or len(ks) == 0:
        raise ConstraintViolation("need len(x_breaks) == len(densities) + 1 >= 2")
    if np.any(np.diff(xs) <= 0):
        raise ConstraintViolation("x_breaks must be strictly increasing")
    if not np.isfinite(n_at_x0):
        raise ConstraintViolation(f"N_at_x0={n_at_x0!r} must be finite")
    upper = np.inf if k_jam is None else k_jam * (1 + _RANGE_SLACK)
    for i, k in enumerate(ks):
        if not (k >= -_RANGE_SLACK and k <= upper):
            raise ConstraintViolation(f"growth constraint 0 <= k_i <= k_jam violated at block {i}: k={k!r}")
    ks = np.clip(ks, 0.0, np.inf if k_jam is None else k_jam)
    values = _cumulative(float(n_at_x0), xs, ks, -1.0)
    empty = np.empty(0)
    t = np.array([float(t0)])
    return LinkValueCondition(xs, ks, values, t, empty, values[:1].copy(), t.copy(), empty,
                              values[-1:].copy())


def from_blocks(initial_blocks, up_blocks=(), down_blocks=()) -> LinkValueCondition:
    """Assemble a condition from explicit blocks, offsets included.

    Unlike :func:`from_density_profile` nothing is enforced here, so the
    result may violate constraints; use :func:`validate` to list them.
    """
    ini = sorted(initial_blocks, key=lambda b: b.x_lo)
    xs = np.array([b.x_lo for b in ini] + [ini[-1].x_hi])
    ks = np.array([b.k for b in ini])
    vs = np.array([b.value(b.x_lo) for b in ini] + [ini[-1].value(ini[-1].x_hi)])

    def trace(blocks, corner):
        blocks = sorted(blocks, key=lambda b: b.t_lo)
        if not blocks:
            return np.array([0.0]), np.empty(0), np.array([corner])
        ts = np.array([b.t_lo for b in blocks] + [blocks[-1].t_hi])
        qs = np.array([b.flow for b in blocks])
        vals = np.array([b.value(b.t_lo) for b in blocks] + [blocks[-1].value(blocks[-1].t_hi)])
        return ts, qs, vals

    up = trace(up_blocks, vs[0])
    down = trace(down_blocks, vs[-1])
    return LinkValueCondition(xs, ks, vs, *up, *down)


def uniform_profile(length, densities, x0=0.0):
    """Equal-width breakpoints for ``densities`` over ``[x0, x0 + length]``."""
    return np.linspace(x0, x0 + length, len(densities) + 1)


def validate(cond: LinkValueCondition, fd) -> list:
    """Every violated constraint of ``cond`` under diagram ``fd`` (empty list if valid)."""
    out = []
    kj, qm = fd.k_jam, fd.q_max
    for i, k in enumerate(cond.densities):
        if k < -_RANGE_SLACK * kj or k > kj * (1 + _RANGE_SLACK):
            out.append(Violation("density", "initial", i, float(max(-k, k - kj))))
    step = cond.x_values[:-1] - cond.densities * np.diff(cond.x_breaks)
    for i, r in enumerate(cond.x_values[1:] - step):
        if abs(r) > CONTINUITY_TOL:
            out.append(Violation("continuity", "initial", i, float(r)))
    for side, ts, qs, vs, corner in (
        ("up", cond.up_times, cond.up_flows, cond.up_values, cond.x_values[0]),
        ("down", cond.down_times, cond.down_flows, cond.down_values, cond.x_values[-1]),
    ):
        for j, q in enumerate(qs):
            if q < -_RANGE_SLACK * qm or q > qm * (1 + _RANGE_SLACK):
                out.append(Violation("flow", side, j, float(max(-q, q - qm))))
        step = vs[:-1] + qs * np.diff(ts)
        for j, r in enumerate(vs[1:] - step):
            if abs(r) > CONTINUITY_TOL:
                out.append(Violation("continuity", side, j, float(r)))
        if abs(vs[0] - corner) > CONTINUITY_TOL:
            out.append(Violation("corner", side, 0, float(vs[0] - corner)))
    return out


def append_boundary_flow(cond: LinkValueCondition, side: str, flow: float, dt: float,
                         q_max=None, t_lo=None) -> LinkValueCondition:
    """New condition with one more constant-flow block on ``side`` ("up" or "down").

    The block starts where the last one ended (or at ``t_lo``, which must
    match) and its value at ``t_lo`` continues the trace.
    """
    if side not in ("up", "down"):
        raise ValueError(f"side must be 'up' or 'down', got {side!r}")
    if dt <= 0:
        raise ConstraintViolation(f"dt={dt!r} must be > 0")
    upper = np.inf if q_max is None else q_max * (1 + _RANGE_SLACK)
    if not (flow >= 0 and flow <= upper):
        raise ConstraintViolation(f"boundary flow {flow!r} outside [0, q_max]")
    ts, qs, vs = ((cond.up_times, cond.up_flows, cond.up_values) if side == "up"
                  else (cond.down_times, cond.down_flows, cond.down_values))
    start = float(ts[-1])
    if t_lo is not None and abs(t_lo - start) > 1e-9 * max(1.0, abs(start)):
        raise SequencingError(f"new {side} block starts at {t_lo!r}, trace ends at {start!r}")
    ts = np.append(ts, start + dt)
    qs = np.append(qs, float(flow))
    vs = np.append(vs, vs[-1] + flow * dt)
    if side == "up":
        return LinkValueCondition(cond.x_breaks, cond.densities, cond.x_values, ts, qs, vs,
                                  cond.down_times, cond.down_flows, cond.down_values)
    return LinkValueCondition(cond.x_breaks, cond.densities, cond.x_values,
                              cond.up_times, cond.up_flows, cond.up_values, ts, qs, vs)
