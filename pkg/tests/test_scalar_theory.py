from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from spike_spectra import scalar_theory as st
from spike_spectra.checks import fd_derivative, scalar_battery

ys = hst.floats(0.06, 19.0)


def test_mp_edges():
    assert st.mp_edges(1.0) == st.EdgePair(0.0, 4.0)
    e = st.mp_edges(0.25)
    assert e.lambda_minus == pytest.approx(0.25) and e.lambda_plus == pytest.approx(2.25)


def test_mp_edges_match_density_support():
    # the density integrates to 1 over [lambda_-, lambda_+] for y <= 1
    import scipy.integrate

    y = 0.5
    e = st.mp_edges(y)
    assert e.lambda_plus == pytest.approx(2.9142136, abs=1e-7)
    mass, _ = scipy.integrate.quad(lambda x: st.mp_density(x, y), e.lambda_minus, e.lambda_plus, limit=200)
    assert mass == pytest.approx(1.0, abs=1e-7)
    assert st.mp_density(e.lambda_plus + 1e-3, y) == 0.0
    assert st.mp_density(e.lambda_minus - 1e-3, y) == 0.0


def test_m_at_theta_of_two():
    # Stieltjes branch at z = 4.5, y = 1: roots -1/3 and -2/3, the transform is the larger.
    assert st.m1(4.5, 1.0) == pytest.approx(-1 / 3, abs=1e-15)
    assert st.m2(4.5, 1.0) == pytest.approx(-1 / 3, abs=1e-15)
    # the rejected root also solves the quadratic
    assert st.self_consistency_residual(4.5, 1.0, 1, -2 / 3) == pytest.approx(0, abs=1e-15)


@pytest.mark.parametrize("d,y,m1v,m2v", [(3.0, 0.5, -2 / 7, -1 / 4), (1.5, 0.25, -4 / 7, -2 / 5), (2.0, 0.5, -2 / 5, None)])
def test_m_closed_values(d, y, m1v, m2v):
    z = st.theta(d, y)
    assert st.m1(z, y) == pytest.approx(m1v, abs=1e-14)
    if m2v is not None:
        assert st.m2(z, y) == pytest.approx(m2v, abs=1e-14)


def test_m_tail():
    z = 1e6
    assert abs(st.m1(z, 0.5) * (-z) - 1) < 1e-5


@given(ys, hst.floats(0.01, 10.0), hst.floats(1e-3, 10.0))
def test_stieltjes_upper_half_plane(y, x, eta):
    z = complex(st.mp_edges(y).lambda_plus + x, eta)
    for a in (1, 2):
        m = st.m_derivatives(z, y, a, 0)[0]
        assert m.imag > 0
        assert abs(st.self_consistency_residual(z, y, a, m)) < 1e-12


def test_conjugate_symmetry():
    z = 3 + 0.2j
    assert st.m1(z.conjugate(), 0.5) == pytest.approx(np.conj(st.m1(z, 0.5)))


def test_real_axis_left_of_edge_rejected():
    with pytest.raises(st.BranchError):
        st.m1(2.0, 1.0)


@given(ys)
def test_real_negative_increasing(y):
    lp = st.mp_edges(y).lambda_plus
    xs = lp + np.linspace(0.05, 20, 30)
    for a in (1, 2):
        vals = [st.m_derivatives(float(x), y, a, 0)[0] for x in xs]
        assert all(v < 0 for v in vals)
        assert np.all(np.diff(vals) > 0)


def test_derivatives_against_differences():
    # first derivative: plain central difference, step 1e-5
    z, y = 4.5, 0.5
    m, dm = st.m_derivatives(z, y, 1, 1)
    fd = (st.m1(z + 1e-5, y) - st.m1(z - 1e-5, y)) / 2e-5
    assert abs(fd - dm) / abs(dm) < 1e-6
    ms = st.m_derivatives(4.5, 1.0, 1, 3)
    assert ms[0] == st.m1(4.5, 1.0)
    d3 = fd_derivative(lambda x: st.m1(x, 1.0), 4.5, 3, h=1e-2)
    assert abs(d3 - ms[3]) / abs(ms[3]) < 1e-4


def test_complex_derivatives_against_differences():
    z, y = 3.5 + 0.4j, 0.7
    ms = st.m_derivatives(z, y, 2, 2)
    h = 1e-4
    fd2 = (st.m2(z + h, y) - 2 * st.m2(z, y) + st.m2(z - h, y)) / h**2
    assert abs(fd2 - ms[2]) / abs(ms[2]) < 1e-5


def test_theta_and_inverse():
    assert st.theta(2, 1.0) == 4.5
    assert st.theta(3, 0.5) == pytest.approx(14 / 3)
    y = 0.3
    assert st.theta(np.sqrt(y), y) == pytest.approx(st.mp_edges(y).lambda_plus)
    assert st.invert_theta(4.5, 1.0) == pytest.approx(2.0, abs=1e-14)
    assert st.invert_theta(14 / 3, 0.5) == pytest.approx(3.0, abs=1e-13)
    with pytest.raises(st.SubcriticalError):
        st.invert_theta(st.mp_edges(0.5).lambda_plus, 0.5)


@given(ys, hst.floats(0.0, 50.0))
def test_theta_of_inverse(y, excess):
    mu = st.mp_edges(y).lambda_plus * (1 + 1e-9) + excess
    assert abs(st.theta(st.invert_theta(mu, y), y) - mu) < 1e-12 * mu


@given(ys, hst.floats(0.05, 50.0))
def test_invert_theta_round_trip_away_from_edge(y, excess):
    d = np.sqrt(y) + excess
    assert abs(st.invert_theta(st.theta(d, y), y) - d) < 1e-12 * max(1.0, d)


@pytest.mark.xfail(strict=True, reason="one ulp in theta(d) moves d by eps/theta'(d) ~ 1e-10 next to the edge")
def test_invert_theta_round_trip_at_edge():
    y = 1.0
    d = np.sqrt(y) * (1 + 1e-6) + 1e-6
    assert abs(st.invert_theta(st.theta(d, y), y) - d) < 1e-12 * max(1.0, d)


def test_f_g_nu():
    assert st.f_of(2, 1.0) == 4.5
    assert st.g_of(2, 1.0) == 13.5
    assert st.nu(2, 1) == 4
    with pytest.raises(ValueError):
        st.nu(2.0, 2.0)


def test_theta_facts_rationals():
    f = st.theta_facts(2.0, 1.0)
    assert f.a1 == pytest.approx(float(Fraction(1, 27)), rel=1e-14)
    assert f.a2 == pytest.approx(float(Fraction(160, 2187)), rel=1e-14)
    assert f.a3 == pytest.approx(-1 / 6, rel=1e-14)
    assert f.a4 == pytest.approx(5 / 27, rel=1e-14)
    # a3 = z m2 m1^2 with m1 = m2 = -1/3
    assert 4.5 * (-1 / 3) * (1 / 9) == pytest.approx(f.a3)
    with pytest.raises(st.SubcriticalError):
        st.theta_facts(1.0, 1.0)


@pytest.mark.parametrize("d,y", [(2.0, 1.0), (3.0, 0.5), (1.5, 0.25), (2.0, 0.5), (4.0, 3.0)])
def test_green_scalars_match_facts(d, y):
    sc = st.green_scalars(st.theta(d, y), y)
    f = st.theta_facts(d, y)
    for k in ("a1", "a2", "a3", "a4"):
        assert sc[k] == pytest.approx(getattr(f, k), rel=1e-10)


def test_green_scalars_frozen_half():
    # exact values at (2, 1/2) from a symbolic computation
    sc = st.green_scalars(st.theta(2.0, 0.5), 0.5)
    assert sc["a1"] == pytest.approx(8 / 175, rel=1e-13)
    assert sc["a1_prime"] == pytest.approx(-4352 / 42875, rel=1e-12)
    assert sc["a2"] == pytest.approx(617472 / 10504375, rel=1e-12)
    assert sc["a3"] == pytest.approx(-1 / 5, rel=1e-13)
    assert sc["a4"] == pytest.approx(36 / 175, rel=1e-12)


@pytest.mark.parametrize("y", [0.25, 0.5, 1.0, 3.0])
def test_identity_grid(y):
    res = scalar_battery(y)
    assert res["self_consistency_m1"] < 1e-12
    assert res["self_consistency_m2"] < 1e-12
    assert res["m1_from_m2"] < 1e-10
    assert res["m1_m2_linear"] < 1e-10
    assert res["m1_derivative_relation"] < 1e-10
    assert res["outlier_location_equation"] < 1e-12


def test_aspect_ratio_bounds():
    with pytest.raises(ValueError):
        st.check_aspect_ratio(0.01)
    with pytest.raises(ValueError):
        st.check_aspect_ratio(25.0)
