import math

import numpy as np
import pytest

from spike_spectra import scalar_theory as st
from spike_spectra.ensemble import TrialSeed, build_Q, sample_X, top_spectrum
from spike_spectra.model import basis_vector, build_model, decompose_direction, make_entry_law, perpendicular_unit
from spike_spectra.resolvent import (
    ChiStats,
    ContourError,
    ContourSpec,
    Green1,
    RigidityError,
    chi_stats,
    contour_overlap,
    default_contour,
    g1_squared_vs_derivative,
    overlap_form,
    rep_eigenvalue,
    rep_overlap,
    resolvent_identities,
)

GAUSS = make_entry_law("gaussian")


def test_identity_noise_green():
    X = np.eye(5)
    G = Green1(X, 3.0)
    b = np.arange(1.0, 6.0)
    assert np.allclose(G.solve(b), b / (1 - 3.0))


def test_singular_z():
    with pytest.raises(RigidityError):
        Green1(np.eye(4), 1.0)


def test_resolvent_identities_small_and_scalar():
    X = sample_X(40, 70, GAUSS, TrialSeed(0, 0))
    res = resolvent_identities(X, st.theta(2, 40 / 70) + 0.5j)
    assert max(res.values()) < 1e-9
    res = resolvent_identities(np.array([[1.3]]), 4.5 + 0.5j, pairs=3)
    assert max(res.values()) < 1e-14


def test_g1_squared_is_derivative():
    X = sample_X(60, 120, GAUSS, TrialSeed(0, 1))
    v = np.ones(60) / math.sqrt(60)
    assert g1_squared_vs_derivative(X, st.theta(2.0, 0.5), v, step=1e-5) < 1e-5


def test_chi_stats_symmetric_and_small():
    M, N = 250, 500
    rng = np.random.default_rng(2)
    q, _ = np.linalg.qr(rng.standard_normal((M, 2)))
    m = build_model(M, N, [(3.0, q[:, 0]), (2.0, q[:, 1])])
    X = sample_X(M, N, GAUSS, TrialSeed(1, 0))
    D = decompose_direction(m, perpendicular_unit(m))
    cs = chi_stats(X, m, D, st.theta(2.0, m.y))
    assert np.max(np.abs(cs.chi - cs.chi.T)) < 1e-12
    assert np.max(np.abs(cs.chi)) < 20 / math.sqrt(N)


def test_chi_envelope_over_seeds(single_spike):
    m = single_spike
    z = st.theta(2.0, m.y)
    hits = 0
    for s in range(100):
        X = sample_X(m.M, m.N, GAUSS, TrialSeed(5, s))
        hits += abs(chi_stats(X, m, None, z).chi[0, 0]) < 20 / math.sqrt(m.N)
    assert hits >= 99


def test_trace_of_green_near_m1(single_spike):
    m = single_spike
    z = st.theta(2.0, m.y)
    X = sample_X(m.M, m.N, GAUSS, TrialSeed(6, 0))
    tr = np.trace(Green1(X, z).solve(np.eye(m.M))) / m.M
    assert abs(tr - st.m1(z, m.y)) < 20 / m.N


def test_isotropic_envelope(single_spike):
    m = single_spike
    X = sample_X(m.M, m.N, GAUSS, TrialSeed(8, 0))
    rng = np.random.default_rng(1)
    U = rng.standard_normal((m.M, 10))
    U /= np.linalg.norm(U, axis=0)
    W = rng.standard_normal((m.M, 10))
    W /= np.linalg.norm(W, axis=0)
    lp = st.mp_edges(m.y).lambda_plus
    vals = []
    for z in [lp + 0.5 + 0.1j, lp + 1 + 0.5j, 5 + 1j, 8 + 0.01j, lp + 0.2 + 2j]:
        S = Green1(X, z).solve(W)
        stats = np.einsum("ij,ij->j", U, S) - st.m1(z, m.y) * np.einsum("ij,ij->j", U, W)
        vals += list(np.abs(stats) * math.sqrt(m.N))
    assert np.percentile(vals, 99) < 20


def test_synthetic_zero_chi():
    m = build_model(50, 100, [(2.0, basis_vector(50, 1))])
    D = decompose_direction(m, m.v(0))
    zero = ChiStats(np.zeros((1, 1)), np.zeros(1), np.zeros(1), 0.0)
    assert rep_eigenvalue(None, m, 0, chi=zero) == st.theta(2.0, 0.5)
    assert rep_overlap(None, m, D, 0, chi=zero) == pytest.approx((4 - 0.5) / (2 * 2.5))


def test_perp_overlap_form_is_psd():
    M = 30
    rng = np.random.default_rng(4)
    q, _ = np.linalg.qr(rng.standard_normal((M, 2)))
    m = build_model(M, 60, [(3.0, q[:, 0]), (1.5, q[:, 1])])
    w = 0.6 * q[:, 1] + 0.8 * perpendicular_unit(m)
    D = decompose_direction(m, w)
    _, A = overlap_form(m, D, 0)
    assert np.min(np.linalg.eigvalsh(A)) > -1e-12
    chi = ChiStats(rng.standard_normal((2, 2)) * 0.01, rng.standard_normal(2) * 0.01, rng.standard_normal(2) * 0.01, 0.0)
    assert rep_overlap(None, m, D, 0, chi=chi) >= 0


def test_contour_on_diagonal():
    Q = np.diag([4.5, 1.0, 1.0])
    m = build_model(3, 3, [(2.0, basis_vector(3, 1))])
    val = contour_overlap(Q, m, basis_vector(3, 1), 0, ContourSpec(2.0, 0.5, 64))
    assert val == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ValueError):
        ContourSpec(2.0, 0.5, 32)


def test_contour_errors():
    m = build_model(3, 3, [(2.0, basis_vector(3, 1))])
    with pytest.raises(ContourError, match="encloses 0"):
        contour_overlap(np.diag([6.0, 1.0, 1.0]), m, basis_vector(3, 1), 0, ContourSpec(2.0, 0.5, 64))
    # an eigenvalue on the image of the rightmost contour point
    edge = st.theta(2.5, 1.0)
    with pytest.raises(ContourError, match="within"):
        contour_overlap(np.diag([edge, 1.0, 1.0]), m, basis_vector(3, 1), 0, ContourSpec(2.0, 0.5, 64))


def test_contour_matches_eigensolver():
    M, N = 250, 500
    m = build_model(M, N, [(3.0, basis_vector(M, 1))], delta=2.0)
    spec = default_contour(m, 0)
    assert spec.radius == pytest.approx(1.0)
    w = 0.6 * m.v(0) + 0.8 * perpendicular_unit(m)
    X = sample_X(M, N, GAUSS, TrialSeed(12, 0))
    Q = build_Q(m, X)
    _, U = top_spectrum(Q, 2, m.V)
    direct = (w @ U[:, 0]) ** 2
    a = contour_overlap(Q, m, w, 0, ContourSpec(spec.center, spec.radius, 128))
    b = contour_overlap(Q, m, w, 0, spec)
    assert abs(b - direct) < 1e-8
    assert abs(a - b) < 1e-10


def test_representation_at_moderate_N(single_spike):
    m = single_spike
    D = decompose_direction(m, m.v(0))
    X = sample_X(m.M, m.N, GAUSS, TrialSeed(13, 0))
    mu, U = top_spectrum(build_Q(m, X), 2, m.V)
    assert abs(mu[0] - rep_eigenvalue(X, m, 0)) < 50 / m.N
    assert abs((m.v(0) @ U[:, 0]) ** 2 - rep_overlap(X, m, D, 0)) < 50 / m.N + 50 * m.N**-1.5
