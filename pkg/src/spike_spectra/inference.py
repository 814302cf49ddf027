"""Outlier detection, spike debiasing and plug-in confidence intervals."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.stats

from . import scalar_theory as st
from .predictor import var_upsilon

EDGE_MARGIN_C = 4.0


def edge_threshold(M: int, N: int, c: float = EDGE_MARGIN_C) -> float:
    return st.mp_edges(M / N).lambda_plus + c * N ** (-2.0 / 3.0)


def detect_spikes(eigenvalues, M: int, N: int, c: float = EDGE_MARGIN_C) -> list[int]:
    """0-based indices of eigenvalues with ``mu >= lambda_+ + c N^{-2/3}`` (boundary included).

    ``eigenvalues`` must be sorted in descending order.
    """
    mu = np.asarray(eigenvalues, dtype=float)
    if mu.size < 1:
        raise ValueError("need at least one eigenvalue")
    if np.any(np.diff(mu) > 0):
        raise ValueError("eigenvalues must be sorted in descending order")
    thr = edge_threshold(M, N, c)
    return [int(k) for k in np.flatnonzero(mu >= thr)]


@dataclass(frozen=True)
class SpikeEstimate:
    index: int
    mu_observed: float
    d_hat: float
    supercritical: bool
    se: float
    ci_lower: float
    ci_upper: float
    alpha: float

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_spike(
    mu: float,
    M: int,
    N: int,
    kappa4: float = 0.0,
    s4: float = 0.0,
    alpha: float = 0.05,
    index: int = 0,
) -> SpikeEstimate:
    """Debias an outlier eigenvalue and attach a delta-method confidence interval.

    ``s4`` is the assumed ``sum_j v_j^4`` of the spike direction; 0 corresponds
    to a delocalized direction. The variance is evaluated at ``d_hat``.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    y = M / N
    d_hat = st.invert_theta(mu, y)
    v11 = var_upsilon(d_hat, y, kappa4, s4)
    se = math.sqrt(max(v11, 0.0) / N) / abs(st.theta_prime(d_hat, y))
    zq = scipy.stats.norm.ppf(1 - alpha / 2)
    return SpikeEstimate(index, float(mu), float(d_hat), True, float(se), float(d_hat - zq * se), float(d_hat + zq * se), float(alpha))


@dataclass(frozen=True)
class OverlapEstimate:
    loading_sq: float
    clamped: bool


def debias_overlap(overlap_sq: float, d_hat: float, y: float) -> OverlapEstimate:
    """Estimate ``<w, v_i>^2`` from an observed ``<w, xi_i>^2``, clamped to [0, 1]."""
    if d_hat <= math.sqrt(y):
        raise st.SubcriticalError(f"d_hat={d_hat} <= sqrt(y)")
    factor = (d_hat * d_hat - y) / (d_hat * (d_hat + y))
    raw = overlap_sq / factor
    val = min(max(raw, 0.0), 1.0)
    return OverlapEstimate(float(val), bool(val != raw))


def sample_covariance_eigenvalues(data: np.ndarray) -> np.ndarray:
    """Descending eigenvalues of ``data data^T / N`` for a (variables x samples) matrix."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError("data matrix must be two-dimensional")
    N = data.shape[1]
    Q = data @ data.T / N
    return np.linalg.eigvalsh(0.5 * (Q + Q.T))[::-1]


def estimate_all(eigenvalues, M: int, N: int, kappa4: float = 0.0, s4: float = 0.0, alpha: float = 0.05, c: float = EDGE_MARGIN_C) -> list[SpikeEstimate]:
    mu = np.asarray(eigenvalues, dtype=float)
    return [estimate_spike(mu[k], M, N, kappa4, s4, alpha, index=k) for k in detect_spikes(mu, M, N, c)]
