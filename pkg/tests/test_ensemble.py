import math

import numpy as np
import pytest

from spike_spectra import scalar_theory as st
from spike_spectra.ensemble import (
    TrialSeed,
    build_Q,
    observe_from_Q,
    observe_trial,
    sample_X,
    top_spectrum,
    trial_csv_header,
    trial_csv_row,
)
from spike_spectra.model import basis_vector, build_model, make_entry_law, perpendicular_unit
from spike_spectra.predictor import covariance_theorem, first_order
from spike_spectra.model import decompose_direction

GAUSS = make_entry_law("gaussian")


def test_sample_X_moments():
    M = N = 500
    X = sample_X(M, N, GAUSS, TrialSeed(7, 0))
    assert abs(X.mean()) < 5 * (1 / math.sqrt(N)) / math.sqrt(M * N)
    v = np.var(X * math.sqrt(N))
    assert abs(v - 1) < 5 * math.sqrt(2 / (M * N))


def test_sample_X_deterministic_and_independent():
    a = sample_X(30, 60, GAUSS, TrialSeed(1, 5))
    b = sample_X(30, 60, GAUSS, TrialSeed(1, 5))
    c = sample_X(30, 60, GAUSS, TrialSeed(1, 6))
    d = sample_X(30, 60, GAUSS, TrialSeed(2, 5))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)
    assert abs(np.corrcoef(a.ravel(), c.ravel())[0, 1]) < 5 / math.sqrt(a.size)


def test_build_Q(single_spike):
    m = single_spike
    X = sample_X(m.M, m.N, GAUSS, TrialSeed(3, 0))
    Q = build_Q(m, X)
    assert np.max(np.abs(Q - Q.T)) < 1e-12 * np.linalg.norm(Q)
    H = X @ X.T
    tr = np.trace(H) + sum(m.d[j] * m.v(j) @ H @ m.v(j) for j in range(m.r))
    assert abs(np.trace(Q) - tr) < 1e-10 * abs(tr)
    R = m.sqrt_sigma()
    assert np.allclose(Q, R @ H @ R)
    null = build_model(m.M, m.N, [])
    assert np.allclose(build_Q(null, X), H)
    with pytest.raises(ValueError):
        build_Q(m, X[:-1])


def test_top_spectrum_diag_and_rank_one():
    w, U = top_spectrum(np.diag([3.0, 2.0, 1.0]), 3)
    assert np.allclose(w, [3, 2, 1]) and np.allclose(U, np.eye(3))
    v = np.ones(6) / math.sqrt(6)
    w, U = top_spectrum(5 * np.outer(v, v), 2)
    assert w[0] == pytest.approx(5) and abs(w[1]) < 1e-12
    assert np.allclose(U[:, 0], v)


def test_top_spectrum_reconstructs():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((50, 50))
    A = A + A.T
    w, U = top_spectrum(A, 50)
    assert np.all(np.diff(w) <= 0)
    assert np.max(np.abs(U @ np.diag(w) @ U.T - A)) < 1e-10
    for j in range(50):
        assert np.linalg.norm(A @ U[:, j] - w[j] * U[:, j]) <= 1e-8 * np.linalg.norm(A)


def test_partial_path_matches_full():
    M, N = 600, 1200
    m = build_model(M, N, [(2.0, basis_vector(M, 1))])
    Q = build_Q(m, sample_X(M, N, GAUSS, TrialSeed(4, 0)))
    w, U = top_spectrum(Q, 2, m.V)
    full = np.linalg.eigvalsh(Q)[::-1][:2]
    assert np.allclose(w, full, rtol=1e-12)
    assert U[:, 0] @ m.v(0) >= 0
    assert np.allclose(np.linalg.norm(U, axis=0), 1, atol=1e-10)


def test_observe_trial_envelope_and_determinism(single_spike):
    m = single_spike
    dirs = [m.v(0), perpendicular_unit(m)]
    a = observe_trial(m, dirs, GAUSS, TrialSeed(9, 3))
    b = observe_trial(m, dirs, GAUSS, TrialSeed(9, 3))
    assert trial_csv_row(a) == trial_csv_row(b)
    assert abs(a.directions[0].upsilon_hat) < 50
    assert a.directions[0].theta_hat is not None and a.directions[0].lambda_sq_hat is None
    p = a.directions[1]
    assert p.theta_hat is None
    assert p.lambda_sq_hat == pytest.approx(p.lambda_signed_hat**2)
    assert a.spike_overlap >= 0
    assert np.all(np.diff(a.mu) <= 0)


def test_identity_noise_surrogate():
    # XX^T = I exactly: Q = Sigma, so the outlier sits at 1 + d
    M, N = 40, 80
    m = build_model(M, N, [(2.0, basis_vector(M, 3))])
    X = np.eye(M, N)
    obs = observe_from_Q(m, build_Q(m, X), [m.v(0)])
    assert obs.mu[0] == pytest.approx(3.0)
    assert obs.mu[1] == pytest.approx(1.0)


def test_overlap_concentration_and_signs(single_spike):
    m = single_spike
    R = 200
    ov = np.empty(R)
    for t in range(R):
        obs = observe_trial(m, [m.v(0)], GAUSS, TrialSeed(17, t))
        assert obs.spike_overlap >= 0
        ov[t] = obs.directions[0].overlap ** 2
    D = decompose_direction(m, m.v(0))
    lim = first_order(m, D, 0)[1]
    v22 = covariance_theorem(m, D, 0, 0.0).V[1, 1]
    assert abs(ov.mean() - lim) <= 5 * math.sqrt(v22 / R) / math.sqrt(m.N) + 30 / m.N


def test_csv_layout(single_spike):
    m = single_spike
    obs = observe_trial(m, [m.v(0), perpendicular_unit(m)], GAUSS, TrialSeed(0, 11))
    header = trial_csv_header(m.r0, 2)
    row = trial_csv_row(obs)
    assert len(header) == len(row)
    assert header[:3] == ["trial_index", "mu_1", "mu_2"]
    assert row[0] == "11"
    assert row[header.index("Theta_hat_w2")] == "NA"
    assert row[header.index("Lambda_sq_hat_w1")] == "NA"


def test_requires_supercritical():
    m = build_model(50, 100, [(0.5, basis_vector(50, 1))])
    with pytest.raises(ValueError):
        observe_trial(m, [m.v(0)], GAUSS, TrialSeed(0, 0))
