"""First-order node model: demands and supplies in, movement flows out.

The allocation follows the usual generic node model scheme with
first-in-first-out diverges.  Every incoming link ``i`` sends a single flow
``q_i`` split over its outgoing links by ``beta[i][o]``.  Supplies are shared
in proportion to the priorities ``pi_i``: at each round every outgoing link
offers ``a_o = S_o / sum(pi_i beta_io)`` per unit priority, incoming links
whose demand fits their share are served in full, and otherwise the most
restrictive outgoing link is saturated.  Each round removes at least one
incoming link, so there are at most as many rounds as incoming links.

A movement on red is treated as having zero supply, which blocks its
incoming link entirely under first-in-first-out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

ROW_TOL = 1e-12


@dataclass(frozen=True)
class SignalGroup:
    """Movements sharing one periodic green schedule.

    ``greens`` holds half-open ``(start, end)`` intervals within ``[0, period)``.
    """

    movements: tuple
    period: float
    greens: tuple

    def is_green(self, t: float) -> bool:
        phase = t % self.period
        return any(a <= phase < b for a, b in self.greens)


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    incoming: tuple
    outgoing: tuple
    splits: tuple
    priorities: tuple
    signals: tuple = ()

    def __post_init__(self):
        errors = validate_node(self)
        if errors:
            raise ValidationError(errors)

    @property
    def beta(self) -> np.ndarray:
        return np.asarray(self.splits, dtype=float).reshape(len(self.incoming), len(self.outgoing))


@dataclass
class NodeResolution:
    """Movement flows ``flows[i][o]`` and the constraint that bounded each movement."""

    flows: np.ndarray
    binding: list = field(default_factory=list)

    @property
    def inflows(self) -> np.ndarray:
        """Flow leaving each incoming link."""
        return self.flows.sum(axis=1)

    @property
    def outflows(self) -> np.ndarray:
        """Flow entering each outgoing link."""
        return self.flows.sum(axis=0)


def validate_node(spec: NodeSpec) -> list:
    errs = []
    n_in, n_out = len(spec.incoming), len(spec.outgoing)
    where = f"node {spec.node_id!r}"
    if n_in == 0 or n_out == 0:
        errs.append(f"{where}: needs at least one incoming and one outgoing link")
        return errs
    rows = spec.splits
    if len(rows) != n_in or any(len(r) != n_out for r in rows):
        errs.append(f"{where}: split matrix must be {n_in}x{n_out}")
        return errs
    for i, r in enumerate(rows):
        if any(not (0.0 <= b <= 1.0) for b in r):
            errs.append(f"{where}: split row {i} has entries outside [0, 1]")
        if abs(sum(r) - 1.0) > ROW_TOL:
            errs.append(f"{where}: split row {i} sums to {sum(r)!r}, expected 1")
    if len(spec.priorities) != n_in:
        errs.append(f"{where}: need {n_in} priorities, got {len(spec.priorities)}")
    elif any(not p > 0 for p in spec.priorities):
        errs.append(f"{where}: priorities must be positive")
    for g, grp in enumerate(spec.signals):
        if not grp.period > 0:
            errs.append(f"{where}: signal group {g} period must be > 0")
        for a, b in grp.greens:
            if not 0 <= a <= b <= grp.period:
                errs.append(f"{where}: signal group {g} green ({a}, {b}) outside [0, period]")
        for mv in grp.movements:
            if len(mv) != 2 or mv[0] not in spec.incoming or mv[1] not in spec.outgoing:
                errs.append(f"{where}: signal group {g} movement {mv!r} is not a node movement")
    return errs


def signal_phase(spec: NodeSpec, t: float) -> dict:
    """Green flag of every movement ``(in_id, out_id)`` at time ``t``.

    Movements outside every signal group are always green; a movement listed
    in several groups is green only if all of them are.
    """
    green = {(i, o): True for i in spec.incoming for o in spec.outgoing}
    for grp in spec.signals:
        on = grp.is_green(t)
        for mv in grp.movements:
            green[tuple(mv)] = green[tuple(mv)] and on
    return green


def resolve_node(spec: NodeSpec, demands, supplies, t: float = 0.0) -> NodeResolution:
    """Movement flows for the given link demands and supplies at time ``t``."""
    beta = spec.beta
    n_in, n_out = beta.shape
    dem = [max(float(d), 0.0) for d in demands]
    sup = [max(float(s), 0.0) for s in supplies]
    if len(dem) != n_in or len(sup) != n_out:
        raise ValidationError(f"node {spec.node_id!r}: expected {n_in} demands and {n_out} supplies")
    pri = [float(p) for p in spec.priorities]
    q = [0.0] * n_in
    kind = ["demand"] * n_in
    blocked = [False] * n_in
    if spec.signals:
        green = signal_phase(spec, t)
        for i, a in enumerate(spec.incoming):
            for o, b in enumerate(spec.outgoing):
                if beta[i, o] > 0 and not green[(a, b)]:
                    blocked[i] = True
                    kind[i] = "signal"
    uses = [[o for o in range(n_out) if beta[i, o] > 0] for i in range(n_in)]
    active = {i for i in range(n_in) if dem[i] > 0 and not blocked[i]}
    left = list(sup)
    open_out = set(range(n_out))
    while active:
        share = {}
        for o in open_out:
            w = sum(pri[i] * beta[i, o] for i in active if beta[i, o] > 0)
            if w > 0:
                share[o] = left[o] / w
        fits = [i for i in active if dem[i] <= pri[i] * min(share[o] for o in uses[i])]
        if fits:
            for i in fits:
                q[i] = dem[i]
                for o in uses[i]:
                    left[o] = max(left[o] - dem[i] * beta[i, o], 0.0)
                active.discard(i)
            continue
        o_star = min(share, key=lambda o: (share[o], o))
        a = share[o_star]
        for i in [i for i in active if beta[i, o_star] > 0]:
            q[i] = pri[i] * a
            kind[i] = "supply"
            for o in uses[i]:
                left[o] = max(left[o] - q[i] * beta[i, o], 0.0)
            active.discard(i)
        open_out.discard(o_star)
    flows = beta * np.asarray(q)[:, None]
    binding = [[kind[i] if beta[i, o] > 0 else "demand" for o in range(n_out)] for i in range(n_in)]
    return NodeResolution(flows, binding)
