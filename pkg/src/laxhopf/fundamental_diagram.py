"""Concave flow-density laws and their convex transforms.

Every diagram exposes the same surface:

* ``flux(k)``                 Q(k)
* ``conjugate(u)``            R(u) = sup_k (Q(k) - u k)
* ``characteristic_speed(k)`` right derivative of Q
* ``demand_supply(k)``        sending / receiving flow of a cell in state k

Public methods validate their argument and accept floats or numpy arrays.
The underscore methods (``_q``, ``_r``) are unchecked scalar versions used in
the hot loops of the link solvers.

Congested wave speeds are always stored signed (``w_cong < 0``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

_REL = 1e-12


def _check_range(name, value, lo, hi):
    slack = _REL * max(1.0, abs(lo), abs(hi))
    arr = np.asarray(value, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < lo - slack) or np.any(arr > hi + slack):
        bad = arr[(arr < lo - slack) | (arr > hi + slack) | np.isnan(arr)]
        raise DomainError(f"{name}={bad.flat[0]!r} outside [{lo}, {hi}]")
    if np.ndim(value) == 0:
        return min(max(float(value), lo), hi)
    return np.clip(arr, lo, hi)


class FundamentalDiagram:
    """Shared behaviour of concave diagrams defined on [0, k_jam]."""

    k_jam: float
    k_crit: float
    q_max: float

    @property
    def v_max(self) -> float:
        """Largest characteristic speed, the right derivative at k = 0."""
        raise NotImplementedError

    @property
    def w_min(self) -> float:
        """Smallest (most negative) characteristic speed, at k = k_jam."""
        raise NotImplementedError

    # scalar kernels -----------------------------------------------------
    def _q(self, k: float) -> float:
        raise NotImplementedError

    def _r(self, u: float) -> float:
        raise NotImplementedError

    def _speed(self, k: float) -> float:
        raise NotImplementedError

    # vector kernels (default: elementwise loop) ----------------------------
    def _q_arr(self, k: np.ndarray) -> np.ndarray:
        return np.array([self._q(float(v)) for v in np.ravel(k)]).reshape(np.shape(k))

    def _r_arr(self, u: np.ndarray) -> np.ndarray:
        return np.array([self._r(float(v)) for v in np.ravel(u)]).reshape(np.shape(u))

    def _speed_arr(self, k: np.ndarray) -> np.ndarray:
        return np.array([self._speed(float(v)) for v in np.ravel(k)]).reshape(np.shape(k))

    # public API -------------------------------------------------------------
    def flux(self, k):
        k = _check_range("density", k, 0.0, self.k_jam)
        if np.ndim(k) == 0:
            return self._q(k)
        return self._q_arr(k)

    def conjugate(self, u):
        u = _check_range("speed", u, self.w_min, self.v_max)
        if np.ndim(u) == 0:
            return self._r(u)
        return self._r_arr(u)

    def characteristic_speed(self, k):
        k = _check_range("density", k, 0.0, self.k_jam)
        if np.ndim(k) == 0:
            return self._speed(k)
        return self._speed_arr(k)

    def demand_supply(self, k):
        """Return ``(demand, supply)`` of a homogeneous state ``k``."""
        k = _check_range("density", k, 0.0, self.k_jam)
        if np.ndim(k) == 0:
            q = self._q(k)
            if k <= self.k_crit:
                return q, self.q_max
            return self.q_max, q
        q = self._q_arr(k)
        free = k <= self.k_crit
        return np.where(free, q, self.q_max), np.where(free, self.q_max, q)

    def free_speed(self, q: float) -> float:
        """Characteristic speed at the smallest density carrying flow ``q``.

        Any element of the superdifferential is valid; the result is clipped
        to ``[0, v_max]``.
        """
        raise NotImplementedError

    def congested_speed(self, q: float) -> float:
        """Characteristic speed at the largest density carrying flow ``q``, in ``[w_min, 0]``."""
        raise NotImplementedError

    def scaled(self, lanes: float) -> "FundamentalDiagram":
        """Diagram of ``lanes`` identical lanes side by side."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class TriangularFD(FundamentalDiagram):
    """Triangular diagram with free speed ``v_free`` and signed congested speed ``w_cong``.

    Build it with :meth:`from_params` from any three independent parameters.
    """

    v_free: float
    w_cong: float
    k_crit: float
    k_jam: float
    q_max: float

    def __post_init__(self):
        if not self.v_free > 0:
            raise DomainError(f"v_free={self.v_free!r} must be > 0")
        if not self.w_cong < 0:
            raise DomainError(f"w_cong={self.w_cong!r} must be < 0 (signed congested slope)")
        if not 0 < self.k_crit < self.k_jam:
            raise DomainError(f"need 0 < k_crit={self.k_crit!r} < k_jam={self.k_jam!r}")
        if not self.q_max > 0:
            raise DomainError(f"q_max={self.q_max!r} must be > 0")
        tol = 1e-12 * self.q_max
        free = self.v_free * self.k_crit
        cong = self.w_cong * (self.k_crit - self.k_jam)
        if abs(free - self.q_max) > tol or abs(cong - self.q_max) > tol:
            raise DomainError(
                "inconsistent triangular parameters: "
                f"v*k_c={free!r}, w*(k_c-k_jam)={cong!r}, q_max={self.q_max!r}"
            )

    @classmethod
    def from_params(cls, v_free=None, w_cong=None, k_crit=None, k_jam=None, q_max=None):
        """Derive the missing parameters from any determining subset.

        ``w_cong`` may be given as a positive magnitude; it is stored negative.
        Overdetermined inputs must agree to 1e-12 relative.
        """
        p = {"v": v_free, "w": w_cong, "kc": k_crit, "kj": k_jam, "q": q_max}
        if p["w"] is not None:
            p["w"] = -abs(float(p["w"]))
        given = {k: float(v) for k, v in p.items() if v is not None}
        p.update(given)
        for _ in range(5):
            v, w, kc, kj, q = p["v"], p["w"], p["kc"], p["kj"], p["q"]
            if q is None and v is not None and kc is not None:
                p["q"] = v * kc
            elif q is None and w is not None and kc is not None and kj is not None:
                p["q"] = w * (kc - kj)
            if kc is None:
                if q is not None and v is not None:
                    p["kc"] = q / v
                elif q is not None and w is not None and kj is not None:
                    p["kc"] = kj + q / w
                elif v is not None and w is not None and kj is not None:
                    p["kc"] = w * kj / (w - v)
            if v is None and q is not None and p["kc"] is not None:
                p["v"] = p["q"] / p["kc"]
            if w is None and p["q"] is not None and p["kc"] is not None and kj is not None:
                p["w"] = p["q"] / (p["kc"] - kj)
            if kj is None and p["q"] is not None and p["kc"] is not None and w is not None:
                p["kj"] = p["kc"] - p["q"] / w
        missing = [k for k, v in p.items() if v is None]
        if missing:
            raise DomainError(f"triangular diagram underdetermined by {sorted(given)}")
        return cls(p["v"], p["w"], p["kc"], p["kj"], p["q"])

    @property
    def v_max(self) -> float:
        return self.v_free

    @property
    def w_min(self) -> float:
        return self.w_cong

    def _q(self, k):
        if k <= self.k_crit:
            return self.v_free * k
        return self.w_cong * (k - self.k_jam)

    def _q_arr(self, k):
        return np.where(k <= self.k_crit, self.v_free * k, self.w_cong * (k - self.k_jam))

    def _r(self, u):
        return self.k_crit * (self.v_free - u)

    def _r_arr(self, u):
        return self.k_crit * (self.v_free - u)

    def _speed(self, k):
        return self.v_free if k < self.k_crit else self.w_cong

    def _speed_arr(self, k):
        return np.where(k < self.k_crit, self.v_free, self.w_cong)

    def free_speed(self, q):
        return self.v_free

    def congested_speed(self, q):
        return self.w_cong

    def scaled(self, lanes):
        return TriangularFD(self.v_free, self.w_cong, self.k_crit * lanes,
                            self.k_jam * lanes, self.q_max * lanes)

    def as_piecewise_linear(self) -> "PiecewiseLinearFD":
        return PiecewiseLinearFD((0.0, self.k_crit, self.k_jam), (0.0, self.q_max, 0.0))

    def to_dict(self):
        return {"type": "triangular", "v_free": self.v_free, "w_cong": self.w_cong,
                "k_crit": self.k_crit, "k_jam": self.k_jam, "q_max": self.q_max}


@dataclass(frozen=True)
class GreenshieldsFD(FundamentalDiagram):
    """Parabolic diagram Q(k) = v_free / k_jam * k * (k_jam - k)."""

    v_free: float
    k_jam: float

    def __post_init__(self):
        if not self.v_free > 0 or not self.k_jam > 0:
            raise DomainError(f"Greenshields needs v_free>0 and k_jam>0, got {self.v_free!r}, {self.k_jam!r}")

    @property
    def k_crit(self):
        return 0.5 * self.k_jam

    @property
    def q_max(self):
        return 0.25 * self.v_free * self.k_jam

    @property
    def v_max(self):
        return self.v_free

    @property
    def w_min(self):
        return -self.v_free

    def _q(self, k):
        return self.v_free / self.k_jam * k * (self.k_jam - k)

    _q_arr = _q

    def _r(self, u):
        d = self.v_free - u
        return self.k_jam * d * d / (4.0 * self.v_free)

    _r_arr = _r

    def _speed(self, k):
        return self.v_free * (1.0 - 2.0 * k / self.k_jam)

    _speed_arr = _speed

    def free_speed(self, q):
        return self.v_free * math.sqrt(max(0.0, 1.0 - q / self.q_max))

    def congested_speed(self, q):
        return -self.free_speed(q)

    def scaled(self, lanes):
        return GreenshieldsFD(self.v_free, self.k_jam * lanes)

    def to_dict(self):
        return {"type": "greenshields", "v_free": self.v_free, "k_jam": self.k_jam}


@dataclass(frozen=True)
class PiecewiseLinearFD(FundamentalDiagram):
    """Concave piecewise-linear diagram given by its breakpoints.

    ``densities`` starts at 0 and ends at ``k_jam``; ``flows`` starts and ends at 0.
    The conjugate is evaluated exactly as a maximum over breakpoints.
    """

    densities: tuple
    flows: tuple
    _k: np.ndarray = field(init=False, repr=False, compare=False)
    _f: np.ndarray = field(init=False, repr=False, compare=False)
    _slopes: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        k = np.asarray(self.densities, dtype=float)
        f = np.asarray(self.flows, dtype=float)
        if k.ndim != 1 or k.shape != f.shape or k.size < 3:
            raise DomainError("piecewise-linear diagram needs >= 3 matching breakpoints")
        if k[0] != 0.0 or f[0] != 0.0 or f[-1] != 0.0:
            raise DomainError("piecewise-linear diagram must satisfy Q(0) = Q(k_jam) = 0")
        if np.any(np.diff(k) <= 0):
            raise DomainError("breakpoint densities must be strictly increasing")
        if np.any(f < 0):
            raise DomainError("flows must be nonnegative")
        slopes = np.diff(f) / np.diff(k)
        if np.any(np.diff(slopes) > 1e-12 * max(1.0, float(np.max(np.abs(slopes))))):
            raise DomainError("piecewise-linear diagram must be concave")
        object.__setattr__(self, "densities", tuple(float(v) for v in k))
        object.__setattr__(self, "flows", tuple(float(v) for v in f))
        object.__setattr__(self, "_k", k)
        object.__setattr__(self, "_f", f)
        object.__setattr__(self, "_slopes", tuple(float(s) for s in slopes))

    @property
    def k_jam(self):
        return self.densities[-1]

    @property
    def q_max(self):
        return max(self.flows)

    @property
    def k_crit(self):
        return self.densities[int(np.argmax(self._f))]

    @property
    def v_max(self):
        return self._slopes[0]

    @property
    def w_min(self):
        return self._slopes[-1]

    def _q(self, k):
        return float(np.interp(k, self._k, self._f))

    def _q_arr(self, k):
        return np.interp(k, self._k, self._f)

    def _r(self, u):
        return max(f - u * k for k, f in zip(self.densities, self.flows))

    def _r_arr(self, u):
        u = np.asarray(u, dtype=float)
        return np.max(self._f - np.multiply.outer(u, self._k), axis=-1)

    def _segment(self, k):
        i = int(np.searchsorted(self._k, k, side="right")) - 1
        return min(max(i, 0), len(self._slopes) - 1)

    def _speed(self, k):
        return self._slopes[self._segment(k)]

    def _speed_arr(self, k):
        i = np.clip(np.searchsorted(self._k, k, side="right") - 1, 0, len(self._slopes) - 1)
        return np.asarray(self._slopes)[i]

    def free_speed(self, q):
        for s, slope in enumerate(self._slopes):
            if self.flows[s + 1] >= q or slope <= 0:
                return min(max(slope, 0.0), self.v_max)
        return 0.0

    def congested_speed(self, q):
        for s in range(len(self._slopes) - 1, -1, -1):
            slope = self._slopes[s]
            if self.flows[s] >= q or slope >= 0:
                return max(min(slope, 0.0), self.w_min)
        return 0.0

    def scaled(self, lanes):
        return PiecewiseLinearFD(tuple(k * lanes for k in self.densities),
                                 tuple(f * lanes for f in self.flows))

    def to_dict(self):
        return {"type": "piecewise_linear", "densities": list(self.densities),
                "flows": list(self.flows)}


def diagram_from_dict(data: dict) -> FundamentalDiagram:
    """Build a diagram from its JSON object form (``type`` plus parameters)."""
    kind = data.get("type")
    params = {k: v for k, v in data.items() if k != "type"}
    if kind == "triangular":
        return TriangularFD.from_params(**params)
    if kind == "greenshields":
        return GreenshieldsFD(float(params["v_free"]), float(params["k_jam"]))
    if kind == "piecewise_linear":
        return PiecewiseLinearFD(tuple(params["densities"]), tuple(params["flows"]))
    raise DomainError(f"unknown diagram type {kind!r}")
