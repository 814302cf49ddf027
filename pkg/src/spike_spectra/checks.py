"""Identity battery: algebraic relations of the m-functions and Green functions.

Every check returns a maximum residual; :func:`identity_battery` collects them
with their pass thresholds.
"""
from __future__ import annotations

from math import factorial

import numpy as np

from . import scalar_theory as st
from .ensemble import TrialSeed, sample_X
from .model import make_entry_law
from .resolvent import g1_squared_vs_derivative, resolvent_identities

FACT_POINTS = ((2.0, 1.0), (3.0, 0.5), (1.5, 0.25))


def fd_weights(order: int, half_width: int = 4) -> np.ndarray:
    """Central finite-difference weights on offsets ``-half_width..half_width``."""
    k = np.arange(-half_width, half_width + 1, dtype=float)
    A = np.vander(k, increasing=True).T
    b = np.zeros(len(k))
    b[order] = factorial(order)
    return np.linalg.solve(A, b)


def fd_derivative(f, x: float, order: int, h: float = 1e-2, half_width: int = 4) -> float:
    w = fd_weights(order, half_width)
    vals = np.array([f(x + j * h) for j in range(-half_width, half_width + 1)])
    return float(w @ vals) / h**order


def facts_by_differences(d: float, y: float, h: float = 1e-2) -> dict:
    """The four combinations at ``theta(d)`` from finite differences of ``m1``, ``m2`` alone."""
    z = st.theta(d, y)

    def zm1(x):
        return x * st.m1(x, y)

    def m1sq_zm2(x):
        return x * st.m2(x, y) * st.m1(x, y) ** 2

    m = st.m1(z, y)
    dm = fd_derivative(lambda x: st.m1(x, y), z, 1, h)
    zp1 = fd_derivative(zm1, z, 1, h)
    zp2 = fd_derivative(zm1, z, 2, h)
    zp3 = fd_derivative(zm1, z, 3, h)
    return {
        "a1": m * m * zp1,
        "a2": m * dm * zp2 + dm * dm * zp1 + m * m * zp3 / 6,
        "a3": m1sq_zm2(z),
        "a4": fd_derivative(m1sq_zm2, z, 1, h),
    }


def scalar_battery(y: float = 0.5, tau: float = 0.1, n: int = 20) -> dict[str, float]:
    zs = st.domain_grid(y, tau, n)
    sc1 = sc2 = id_a = id_b = id_c = 0.0
    for z in zs:
        m, dm = st.m_derivatives(z, y, 1, 1)
        p, dp = st.m_derivatives(z, y, 2, 1)
        sc1 = max(sc1, abs(st.self_consistency_residual(z, y, 1, m)))
        sc2 = max(sc2, abs(st.self_consistency_residual(z, y, 2, p)))
        id_a = max(id_a, abs(m + 1 / (z * (1 + p))))
        id_b = max(id_b, abs(1 + z * m - (1 + z * p) / y))
        id_c = max(id_c, abs(m * ((p + z * dp) + 1) - dm / m))
    eq313 = 0.0
    for d in (1.1 * np.sqrt(y), 2.0, 5.0, 50.0):
        th = st.theta(d, y)
        eq313 = max(eq313, abs(1 + 1 / d + th * st.m1(th, y)))
    return {
        "self_consistency_m1": sc1,
        "self_consistency_m2": sc2,
        "m1_from_m2": id_a,
        "m1_m2_linear": id_b,
        "m1_derivative_relation": id_c,
        "outlier_location_equation": eq313,
    }


def facts_battery(points=FACT_POINTS) -> dict[str, float]:
    """Max relative error between closed-form facts and finite-difference compositions."""
    out = {}
    for d, y in points:
        closed = st.theta_facts(d, y)
        fd = facts_by_differences(d, y)
        err = max(abs(fd[k] - getattr(closed, k)) / abs(getattr(closed, k)) for k in ("a1", "a2", "a3", "a4"))
        out[f"theta_facts_d{d:g}_y{y:g}"] = float(err)
    return out


def resolvent_battery(M: int = 60, N: int = 120, seed: int = 0) -> dict[str, float]:
    X = sample_X(M, N, make_entry_law("gaussian"), TrialSeed(seed, 0))
    y = M / N
    z = st.theta(2.0, y) + 0.5j
    out = {f"resolvent_{k}": v for k, v in resolvent_identities(X, z).items()}
    v = np.zeros(M)
    v[0] = 1.0
    out["g1_squared_vs_difference"] = g1_squared_vs_derivative(X, st.theta(2.0, y), v)
    return out


THRESHOLDS = {
    "self_consistency_m1": 1e-12,
    "self_consistency_m2": 1e-12,
    "m1_from_m2": 1e-10,
    "m1_m2_linear": 1e-10,
    "m1_derivative_relation": 1e-10,
    "outlier_location_equation": 1e-12,
    "theta_facts": 1e-6,
    "resolvent": 1e-9,
    "g1_squared_vs_difference": 1e-6,
}


def threshold_for(name: str) -> float:
    for key, tol in THRESHOLDS.items():
        if name.startswith(key):
            return tol
    raise KeyError(name)


def identity_battery(seed: int = 0) -> dict[str, dict]:
    res: dict[str, float] = {}
    for y in (0.25, 0.5, 1.0, 2.0):
        for k, v in scalar_battery(y).items():
            res[f"{k}_y{y:g}"] = max(res.get(f"{k}_y{y:g}", 0.0), float(v))
    res.update(facts_battery())
    res.update(resolvent_battery(seed=seed))
    return {k: {"max_residual": v, "threshold": threshold_for(k), "passed": bool(v < threshold_for(k))} for k, v in res.items()}
