"""Marchenko-Pastur Stieltjes transforms and the spike-to-outlier map.

Everything here is a pure function of ``(z, y)`` or ``(d, y)``. ``m1`` is the
Stieltjes transform of the limiting spectral law of ``X X^T`` (M x M) and
``m2`` that of ``X^T X`` (N x N), with ``y = M / N``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb

import numpy as np

TAU_LOW = 0.05
TAU_HIGH = 20.0


class SubcriticalError(ValueError):
    """A spike or eigenvalue is at or below the BBP threshold."""


class BranchError(ValueError):
    """No root of the self-consistent equation is a Stieltjes transform value."""


def check_aspect_ratio(y: float, tau_low: float = TAU_LOW, tau_high: float = TAU_HIGH) -> float:
    y = float(y)
    if not (tau_low < y < tau_high):
        raise ValueError(f"aspect ratio y={y} outside ({tau_low}, {tau_high})")
    return y


@dataclass(frozen=True)
class EdgePair:
    lambda_minus: float
    lambda_plus: float


def mp_edges(y: float) -> EdgePair:
    s = math.sqrt(y)
    return EdgePair((1.0 - s) ** 2, (1.0 + s) ** 2)


def mp_density(x, y: float):
    """Absolutely continuous part of the MP law of ``X X^T`` (the atom at 0 for y > 1 is dropped)."""
    x = np.asarray(x, dtype=float)
    e = mp_edges(y)
    inside = np.clip((e.lambda_plus - x) * (x - e.lambda_minus), 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(x > 0, np.sqrt(inside) / (2 * np.pi * x * y), 0.0)
    return out


# Both transforms solve  a*z*m^2 + (z + b)*m + 1 = 0.
def _coeffs(a: int, y: float) -> tuple[float, float]:
    if a == 1:
        return y, y - 1.0
    if a == 2:
        return 1.0, 1.0 - y
    raise ValueError(f"transform index must be 1 or 2, got {a}")


def _is_real_outside(z) -> bool:
    return isinstance(z, (int, float, np.floating, np.integer)) or (
        isinstance(z, complex) and z.imag == 0.0
    )


def _m(z, y: float, a: int):
    qa, qb = _coeffs(a, y)
    lp = mp_edges(y).lambda_plus
    if _is_real_outside(z):
        x = float(z.real if isinstance(z, complex) else z)
        if x <= lp:
            raise BranchError(f"real z={x} is not to the right of the spectrum edge {lp}")
        disc = (x + qb) ** 2 - 4 * qa * x
        # Real fast path: the root that tends to -1/z at infinity is the larger one.
        return (-(x + qb) + math.sqrt(disc)) / (2 * qa * x)
    z = complex(z)
    conj = z.imag < 0
    if conj:
        z = z.conjugate()
    sq = np.sqrt(complex((z + qb) ** 2 - 4 * qa * z))
    roots = [(-(z + qb) + s) / (2 * qa * z) for s in (sq, -sq)]
    good = [r for r in roots if r.imag > 0]
    if len(good) != 1:
        raise BranchError(f"cannot select the Stieltjes branch at z={z}")
    m = complex(good[0])
    return m.conjugate() if conj else m


def m1(z, y: float):
    return _m(z, y, 1)


def m2(z, y: float):
    return _m(z, y, 2)


def self_consistency_residual(z, y: float, a: int, m) -> complex:
    qa, qb = _coeffs(a, y)
    return qa * z * m * m + (z + qb) * m + 1


def m_derivatives(z, y: float, a: int = 1, order: int = 3) -> list:
    """``[m, m', ..., m^(order)]`` by repeated implicit differentiation.

    Differentiating ``qa*z*m^2 + (z + qb)*m + 1 = 0`` k times and using
    Leibniz on ``z*m^2`` and ``z*m`` gives a linear equation for ``m^(k)``.
    """
    if not 0 <= order <= 3:
        raise ValueError("order must be in 0..3")
    qa, qb = _coeffs(a, y)
    ms = [_m(z, y, a)]
    # sq[k] = k-th derivative of m^2
    sq = [ms[0] * ms[0]]
    for k in range(1, order + 1):
        inner = sum(comb(k, j) * ms[j] * ms[k - j] for j in range(1, k))
        rhs = qa * z * inner + qa * k * sq[k - 1] + k * ms[k - 1]
        mk = -rhs / (2 * qa * z * ms[0] + z + qb)
        ms.append(mk)
        sq.append(2 * ms[0] * mk + inner)
    return ms


def theta(d, y: float):
    return 1.0 + d + y + y / d


def theta_prime(d, y: float):
    return 1.0 - y / (d * d)


def invert_theta(mu: float, y: float) -> float:
    lp = mp_edges(y).lambda_plus
    if mu <= lp:
        raise SubcriticalError(f"mu={mu} <= lambda_plus={lp}: no supercritical spike explains it")
    b = mu - 1.0 - y
    # larger root of d^2 - b d + y = 0; the smaller one is y / d_hat < sqrt(y).
    # b^2 - 4y = (mu - lambda_+)(b + 2 sqrt(y)) avoids cancellation near the edge.
    disc = (mu - lp) * (b + 2.0 * math.sqrt(y))
    return 0.5 * (b + math.sqrt(disc))


def f_of(d, y: float):
    return (d + 1) * (d * d - y) / d


def g_of(d, y: float):
    return (d + 1) * (d + y) * (d * d - y) / d


def nu(d_i, d_j):
    if d_i == d_j:
        raise ValueError("spike separation violated: d_j == d_i")
    return d_i * (d_j + 1) / (d_i - d_j)


@dataclass(frozen=True)
class ThetaFacts:
    a1: float  # m1^2 (z m1)'
    a2: float  # m1 m1' (z m1)'' + (m1')^2 (z m1)' + m1^2 (z m1)''' / 6
    a3: float  # z m2 m1^2
    a4: float  # (z m2 m1^2)'


def theta_facts(d: float, y: float) -> ThetaFacts:
    """Closed-form rational values of the four m-function combinations at z = theta(d)."""
    if d <= math.sqrt(y):
        raise SubcriticalError(f"d={d} <= sqrt(y)={math.sqrt(y)}")
    dy = d + y
    q = d * d - y
    a1 = 1.0 / (dy**2 * q)
    a2 = d**4 * (4 * d**4 + 4 * d**3 * y - 3 * d**2 * y + d**2 * y**2 + y**2 + y**3) / (dy**4 * q**5)
    a3 = -1.0 / (d * dy)
    a4 = (2 * d + y) / (dy**2 * q)
    return ThetaFacts(a1, a2, a3, a4)


def green_scalars(z, y: float) -> dict:
    """The m-function combinations entering the Green-function covariance, at any admissible z.

    Built from :func:`m_derivatives` only, so at ``z = theta(d)`` it is an
    independent check on :func:`theta_facts`.
    """
    m, dm, d2m, d3m = m_derivatives(z, y, 1, 3)
    n, dn = m_derivatives(z, y, 2, 1)
    # derivatives of z*m1
    zm1 = [z * m, m + z * dm, 2 * dm + z * d2m, 3 * d2m + z * d3m]
    a1 = m * m * zm1[1]
    a1_prime = 2 * m * dm * zm1[1] + m * m * zm1[2]
    a2 = m * dm * zm1[2] + dm * dm * zm1[1] + m * m * zm1[3] / 6
    a3 = z * n * m * m
    a4 = n * m * m + z * dn * m * m + 2 * z * n * m * dm
    return {"a1": a1, "a1_prime": a1_prime, "a2": a2, "a3": a3, "a4": a4}


def domain_grid(y: float, tau: float = 0.1, n: int = 20) -> np.ndarray:
    """``n x n`` grid over ``{E + i eta : lambda_+ + tau <= E <= 1/tau, 0 < eta <= 1/tau}``.

    ``eta`` is log-spaced from ``1e-3`` so the grid approaches the real axis.
    """
    lp = mp_edges(y).lambda_plus
    E = np.linspace(lp + tau, max(1.0 / tau, lp + 2 * tau), n)
    eta = np.geomspace(1e-3, 1.0 / tau, n)
    return (E[:, None] + 1j * eta[None, :]).ravel()
