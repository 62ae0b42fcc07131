import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from laxhopf.errors import DomainError
from laxhopf.fundamental_diagram import (GreenshieldsFD, PiecewiseLinearFD, TriangularFD,
                                         diagram_from_dict)

HW = TriangularFD.from_params(v_free=30.0, k_jam=0.1297, q_max=0.556)
GS = GreenshieldsFD(1.0, 4.0)
PWL = PiecewiseLinearFD((0.0, 0.02, 0.05, 0.12), (0.0, 0.5, 0.6, 0.0))


def test_highway_capacity_and_jam():
    assert HW.flux(HW.k_crit) == pytest.approx(0.556, rel=1e-12)
    assert HW.flux(0.1297) == pytest.approx(0.0, abs=1e-15)
    assert HW.flux(0.004) == pytest.approx(0.12, rel=1e-12)


def test_triangular_parameters_consistent():
    assert HW.v_free * HW.k_crit == pytest.approx(HW.q_max, rel=1e-12)
    assert -HW.w_cong * (HW.k_jam - HW.k_crit) == pytest.approx(HW.q_max, rel=1e-12)
    assert HW.w_cong < 0


@pytest.mark.parametrize("kw", [
    dict(v_free=30.0, k_jam=0.1297, q_max=0.556),
    dict(v_free=30.0, w_cong=5.0015, k_jam=0.1297),
    dict(v_free=30.0, w_cong=-5.0015, k_jam=0.1297),
    dict(k_crit=0.556 / 30, k_jam=0.1297, q_max=0.556),
])
def test_any_three_parameters_determine_the_rest(kw):
    fd = TriangularFD.from_params(**kw)
    ref = TriangularFD.from_params(v_free=30.0, w_cong=fd.w_cong, k_jam=0.1297)
    assert fd.w_cong < 0
    for name in ("v_free", "w_cong", "k_crit", "k_jam", "q_max"):
        assert getattr(fd, name) == pytest.approx(getattr(ref, name), rel=1e-12)


def test_inconsistent_parameters_rejected():
    # free-flow and congested branches do not meet at q_max
    with pytest.raises(DomainError):
        TriangularFD.from_params(v_free=20.0, w_cong=3.5, k_crit=0.037, k_jam=0.1297)


def test_expansion_example_parameters_recompute_critical_density():
    # the other reading of the same parameter set: keep v, w, k_jam and derive k_crit
    fd = TriangularFD.from_params(v_free=20.0, w_cong=3.5, k_jam=0.1297)
    assert fd.k_crit == pytest.approx(3.5 * 0.1297 / 23.5, rel=1e-12)
    assert fd.k_crit == pytest.approx(0.019317, abs=1e-6)
    assert fd.v_free * fd.k_crit == pytest.approx(3.5 * (fd.k_jam - fd.k_crit), rel=1e-12)


def test_underdetermined_rejected():
    with pytest.raises(DomainError):
        TriangularFD.from_params(v_free=30.0, k_jam=0.1297)


def test_flux_out_of_domain():
    with pytest.raises(DomainError, match="0.2"):
        HW.flux(0.2)
    with pytest.raises(DomainError):
        HW.flux(-0.01)


def test_conjugate_examples():
    assert HW.conjugate(HW.v_free) == pytest.approx(0.0, abs=1e-15)
    assert HW.conjugate(0.0) == pytest.approx(0.556, rel=1e-12)
    assert GS.conjugate(0.0) == pytest.approx(1.0, rel=1e-12)
    assert HW.conjugate(HW.w_cong) == pytest.approx(-HW.w_cong * HW.k_jam, rel=1e-12)
    with pytest.raises(DomainError):
        HW.conjugate(31.0)


def test_characteristic_speed_examples():
    assert HW.characteristic_speed(0.004) == 30.0
    assert HW.characteristic_speed(HW.k_crit) == HW.w_cong
    assert GS.characteristic_speed(2.0) == pytest.approx(0.0, abs=1e-15)


def test_demand_supply_examples():
    d, s = HW.demand_supply(0.004)
    assert (d, s) == (pytest.approx(0.12), pytest.approx(0.556))
    d, s = HW.demand_supply(0.1297)
    assert d == pytest.approx(0.556) and s == pytest.approx(0.0, abs=1e-15)
    for fd in (HW, GS, PWL):
        d, s = fd.demand_supply(fd.k_crit)
        assert d == pytest.approx(fd.q_max) and s == pytest.approx(fd.q_max)


@pytest.mark.parametrize("fd", [HW, GS, PWL], ids=["triangular", "greenshields", "piecewise"])
def test_conjugate_matches_dense_sup(fd):
    ks = np.linspace(0.0, fd.k_jam, 1000)
    us = np.linspace(fd.w_min, fd.v_max, 1000)
    gap = fd.conjugate(us)[:, None] - (fd.flux(ks)[None, :] - us[:, None] * ks[None, :])
    assert gap.min() >= -1e-12
    # the supremum is attained on the grid up to its resolution
    h = ks[1] - ks[0]
    assert np.all(gap.min(axis=1) <= (fd.v_max - fd.w_min) * h + 1e-12)


def test_piecewise_conjugate_attained_exactly_at_breakpoints():
    ks = np.asarray(PWL.densities)
    us = np.linspace(PWL.w_min, PWL.v_max, 1000)
    best = (np.asarray(PWL.flows)[None, :] - us[:, None] * ks[None, :]).max(axis=1)
    assert np.allclose(PWL.conjugate(us), best, atol=1e-15)


def test_greenshields_closed_form_conjugate_against_sup():
    ks = np.linspace(0.0, 4.0, 200001)
    for u in np.linspace(-1.0, 1.0, 41):
        assert GS.conjugate(u) == pytest.approx(np.max(GS.flux(ks) - u * ks), abs=1e-9)


@pytest.mark.parametrize("fd", [HW, GS, PWL], ids=["triangular", "greenshields", "piecewise"])
def test_conjugate_convex_nonnegative_nonincreasing(fd):
    us = np.linspace(fd.w_min, fd.v_max, 501)
    r = fd.conjugate(us)
    assert np.all(r >= -1e-15)
    assert np.all(np.diff(r) <= 1e-15)
    assert np.all(r[:-2] + r[2:] - 2 * r[1:-1] >= -1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_flux_midpoint_concavity(a, b, c):
    for fd in (HW, GS, PWL):
        k1, k2, k3 = sorted(x * fd.k_jam for x in (a, b, c))
        if k3 - k1 < 1e-12:
            continue
        lam = (k2 - k1) / (k3 - k1)
        assert fd.flux(k2) >= (1 - lam) * fd.flux(k1) + lam * fd.flux(k3) - 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1))
def test_demand_supply_bounds(a):
    for fd in (HW, GS, PWL):
        k = a * fd.k_jam
        d, s = fd.demand_supply(k)
        assert d <= fd.q_max + 1e-15 and s <= fd.q_max + 1e-15
        assert d + s >= fd.flux(k) + fd.q_max - 1e-12


def test_demand_monotone_supply_antitone():
    ks = np.linspace(0, HW.k_jam, 300)
    d, s = HW.demand_supply(ks)
    assert np.all(np.diff(d) >= -1e-15) and np.all(np.diff(s) <= 1e-15)


def test_flux_array_matches_scalar():
    ks = np.linspace(0, PWL.k_jam, 50)
    assert np.allclose(PWL.flux(ks), [PWL.flux(float(k)) for k in ks])
    assert np.allclose(GS.characteristic_speed(ks[:10]), [GS.characteristic_speed(float(k)) for k in ks[:10]])


def test_triangular_as_piecewise_agrees():
    pw = HW.as_piecewise_linear()
    ks = np.linspace(0, HW.k_jam, 101)
    us = np.linspace(HW.w_cong, HW.v_free, 101)
    assert np.allclose(pw.flux(ks), HW.flux(ks), atol=1e-15)
    assert np.allclose(pw.conjugate(us), HW.conjugate(us), atol=1e-14)


def test_piecewise_rejects_convex_shape():
    with pytest.raises(DomainError):
        PiecewiseLinearFD((0.0, 0.05, 0.1, 0.12), (0.0, 0.1, 0.5, 0.0))


def test_scaled_lanes():
    two = HW.scaled(2)
    assert two.q_max == pytest.approx(2 * HW.q_max) and two.v_free == HW.v_free
    assert GS.scaled(3).q_max == pytest.approx(3 * GS.q_max)
    assert PWL.scaled(2).k_jam == pytest.approx(2 * PWL.k_jam)


@pytest.mark.parametrize("fd", [HW, GS, PWL], ids=["triangular", "greenshields", "piecewise"])
def test_dict_round_trip(fd):
    assert diagram_from_dict(fd.to_dict()) == fd


def test_unknown_diagram_type():
    with pytest.raises(DomainError):
        diagram_from_dict({"type": "trapezoid"})
