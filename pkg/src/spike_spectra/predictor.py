"""Deterministic predictions for one outlier: first-order limits and the fluctuation covariance.

Two independent evaluations of the 3x3 covariance of (Upsilon, Theta, Lambda)
live here. :func:`covariance_theorem` uses closed-form entries in terms of the
shorthand vectors; :func:`covariance_greens` builds the (r+2)x(r+2) covariance
of the centred Green-function statistics from m-function derivatives, and
:func:`coefficient_map` pushes it forward. The two share nothing beyond
:mod:`scalar_theory`.

Sign of Lambda: it is fixed by ``coefficient_map`` (positive multiple of
``chi_u`` when r = 1). Only Lambda^2 is identifiable from eigenvectors, so
entries (1,3) and (2,3) are meaningful up to a common sign.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import scalar_theory as st
from .model import Direction, SpikeModel


def _check_index(model: SpikeModel, i: int):
    if not 0 <= i < model.r0:
        raise st.SubcriticalError(
            f"spike index {i + 1} is not supercritical (r0={model.r0})"
        )


def s_sum(*pairs) -> float:
    """Componentwise power sum: ``s_sum((a, k), (b, l), ...) = sum_j a_j^k b_j^l ...``."""
    out = None
    for vec, power in pairs:
        term = np.asarray(vec, dtype=float) ** power
        out = term if out is None else out * term
    return float(np.sum(out))


@dataclass(frozen=True)
class ShorthandVectors:
    varsigma: np.ndarray
    vhat: np.ndarray


def shorthand_vectors(model: SpikeModel, direction: Direction, i: int) -> ShorthandVectors:
    _check_index(model, i)
    y, d = model.y, model.d
    di = d[i]
    acc = direction.u.copy()
    for j in range(model.r):
        if j != i:
            acc += direction.coef[j] * di * np.sqrt(d[j] + 1) / (di - d[j]) * model.v(j)
    varsigma = 2 * np.sqrt(1 + di) * (di * di - y) / (di * di * (di + y)) * acc
    c = y * (1 + di) / (di * di * (di + y)) * (1 + di * (di + 1) / (di + y))
    vhat = direction.coef[i] * c * model.v(i)
    return ShorthandVectors(varsigma, vhat)


def first_order(model: SpikeModel, direction: Direction, i: int) -> tuple[float, float]:
    """Limits of the outlier eigenvalue and of the squared generalized component."""
    _check_index(model, i)
    y, di = model.y, model.d[i]
    return st.theta(di, y), (di * di - y) / (di * (di + y)) * direction.coef[i] ** 2


@dataclass(frozen=True)
class FluctuationCovariance:
    gaussian: np.ndarray  # 3x3, kappa4-free part
    quartic: np.ndarray  # 3x3, coefficient of kappa4
    kappa4: float

    @property
    def V(self) -> np.ndarray:
        return self.gaussian + self.kappa4 * self.quartic


def _sym(a: np.ndarray) -> np.ndarray:
    return np.triu(a) + np.triu(a, 1).T


def covariance_theorem(model: SpikeModel, direction: Direction, i: int, kappa4: float) -> FluctuationCovariance:
    """Closed-form covariance of (Upsilon, Theta, Lambda).

    Entry (1,3) carries a kappa4 factor and entry (2,3) has
    ``-(1/2) sqrt(d(d+y)/(d^2-y)) (d^2/(d^2-y)|s|^2 + k4 s22(s,v) + k4 s112(s,vhat,v))``;
    both follow from the Lambda sign convention of :func:`coefficient_map`.
    """
    _check_index(model, i)
    y, di = model.y, model.d[i]
    vi = model.v(i)
    wi = direction.coef[i]
    sh = shorthand_vectors(model, direction, i)
    s, vh = sh.varsigma, sh.vhat
    t = vh + s
    q = di * di - y
    G = np.zeros((3, 3))
    K = np.zeros((3, 3))

    G[0, 0] = (1 + di) ** 2 * q**2 / di**4 * (2 * di * di / q)
    K[0, 0] = (1 + di) ** 2 * q**2 / di**4 * s_sum((vi, 4))

    G[0, 1] = wi * 2 * y * (1 + di) ** 3 / (di * (di + y) ** 2)
    K[0, 1] = (1 + di) * q / di**2 * s_sum((t, 1), (vi, 3))

    K[0, 2] = -(di + 1) / (2 * di) * np.sqrt((di + y) * q / di) * s_sum((s, 1), (vi, 3))

    G[1, 1] = (
        di * di / q * float(t @ t)
        + wi * (di * y + di + 2 * y) / (di + y) ** 2 * s_sum((vh, 1), (vi, 1))
        + wi**2 * y * (1 + di) * q / (di * di * (di + y) ** 3)
    )
    K[1, 1] = s_sum((t, 2), (vi, 2))

    h = 0.5 * np.sqrt(di * (di + y) / q)
    G[1, 2] = -h * di * di / q * float(s @ s)
    K[1, 2] = -h * (s_sum((s, 2), (vi, 2)) + s_sum((s, 1), (vh, 1), (vi, 2)))

    c33 = di * (di + y) / (4 * q)
    G[2, 2] = c33 * di * di / q * float(s @ s)
    K[2, 2] = c33 * s_sum((s, 2), (vi, 2))
    return FluctuationCovariance(_sym(G), _sym(K), float(kappa4))


@dataclass(frozen=True)
class GreensCovariance:
    Mi: np.ndarray
    Ki: np.ndarray
    kappa4: float
    z: complex

    @property
    def Vi(self) -> np.ndarray:
        return self.Mi + self.kappa4 * self.Ki

    def quadratic(self, c) -> float:
        c = np.asarray(c, dtype=float)
        return float(c @ self.Vi @ c)


def covariance_greens(model: SpikeModel, direction: Direction, i: int, kappa4: float, z=None) -> GreensCovariance:
    """Covariance of ``sqrt(N) (chi_i1..chi_ir, chi_ui, chi'_ii)`` at ``z`` (default ``theta(d_i)``).

    Index layout (0-based): spikes 0..r-1, then ``r`` for the residual ``u``,
    then ``r+1`` for the derivative statistic.
    """
    _check_index(model, i)
    y, r = model.y, model.r
    if z is None:
        z = st.theta(model.d[i], y)
    sc = st.green_scalars(z, y)
    a1, a2, a3, a4 = sc["a1"], sc["a2"], sc["a3"], sc["a4"]
    n = r + 2
    dtype = complex if isinstance(a1, complex) else float
    Mi = np.zeros((n, n), dtype=dtype)
    for j in range(r):
        Mi[j, j] = a1
    Mi[i, i] = 2 * a1
    Mi[r, r] = a1 * float(direction.u @ direction.u)
    Mi[r + 1, r + 1] = 2 * a2
    Mi[i, r + 1] = Mi[r + 1, i] = sc["a1_prime"]

    vi = model.v(i)
    vecs = [model.v(j) for j in range(r)] + [direction.u]
    Ki = np.zeros((n, n), dtype=dtype)
    for j in range(r + 1):
        for k in range(j, r + 1):
            Ki[j, k] = Ki[k, j] = s_sum((vecs[j], 1), (vecs[k], 1), (vi, 2)) * a3**2
        # half of d/dz (a3^2)
        Ki[j, r + 1] = Ki[r + 1, j] = s_sum((vecs[j], 1), (vi, 3)) * a3 * a4
    Ki[r + 1, r + 1] = s_sum((vi, 4)) * a4**2
    return GreensCovariance(Mi, Ki, float(kappa4), z)


@dataclass(frozen=True)
class CoefficientMap:
    upsilon: np.ndarray
    theta: np.ndarray
    lam: np.ndarray

    def matrix(self) -> np.ndarray:
        return np.vstack([self.upsilon, self.theta, self.lam])


def coefficient_map(model: SpikeModel, direction: Direction, i: int) -> CoefficientMap:
    """Rows expressing (Upsilon, Theta, Lambda) as linear forms in the chi vector."""
    _check_index(model, i)
    y, r, d = model.y, model.r, model.d
    di = d[i]
    th = st.theta(di, y)
    f, g = st.f_of(di, y), st.g_of(di, y)
    wt = direction.w_tilde
    sq = np.sqrt(1 + di)

    cu = np.zeros(r + 2)
    cu[i] = -(di * di - y) * th

    ct = np.zeros(r + 2)
    cl = np.zeros(r + 2)
    ct[i] = -2 * di * (di + 1) ** 1.5 * wt[i]
    ct[r] = -2 * f / sq
    ct[r + 1] = -f * f / sq * wt[i]
    cl[r] = np.sqrt(g)
    for j in range(r):
        if j != i:
            nj = st.nu(di, d[j]) * wt[j]
            ct[j] = -2 * f / sq * nj
            cl[j] = np.sqrt(g) * nj
    return CoefficientMap(cu, ct, cl)


def covariance_greens_mapped(model: SpikeModel, direction: Direction, i: int, kappa4: float) -> FluctuationCovariance:
    gc = covariance_greens(model, direction, i, kappa4)
    C = coefficient_map(model, direction, i).matrix()
    G = C @ np.real(gc.Mi) @ C.T
    K = C @ np.real(gc.Ki) @ C.T
    return FluctuationCovariance(0.5 * (G + G.T), 0.5 * (K + K.T), float(kappa4))


def predict(model: SpikeModel, direction: Direction, i: int, kappa4: float) -> dict:
    th, ov = first_order(model, direction, i)
    vt = covariance_theorem(model, direction, i, kappa4).V
    vg = covariance_greens_mapped(model, direction, i, kappa4).V
    return {
        "theta": float(th),
        "overlap_limit": float(ov),
        "V_theorem": vt.tolist(),
        "V_greens_mapped": vg.tolist(),
        "consistency_max_abs_diff": float(np.max(np.abs(vt - vg))),
    }


def var_upsilon(d: float, y: float, kappa4: float = 0.0, s4: float = 0.0) -> float:
    """Asymptotic variance of the outlier eigenvalue statistic given ``s4 = sum_j v_j^4``."""
    if d <= np.sqrt(y):
        raise st.SubcriticalError(f"subcritical spike d={d} <= sqrt(y)={np.sqrt(y)}")
    q = d * d - y
    return float((1 + d) ** 2 * q**2 / d**4 * (2 * d * d / q + kappa4 * s4))
