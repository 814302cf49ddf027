"""Direct Green-function computations used as oracles.

All quadratic forms go through one LU factorization per z with multiple
right-hand sides; no explicit inverse is ever formed.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import scalar_theory as st
from .model import Direction, SpikeModel

SOLVE_RESIDUAL_TOL = 1e-10
RCOND_MIN = 1e-13


class RigidityError(RuntimeError):
    """z is too close to the spectrum for a reliable solve."""


class ContourError(RuntimeError):
    pass


class Green1:
    """Factorized ``(X X^T - z)`` for repeated solves."""

    def __init__(self, X: np.ndarray, z, H: np.ndarray | None = None):
        self.X = X
        self.z = z
        self.H = X @ X.T if H is None else H
        A = self.H - z * np.eye(self.H.shape[0])
        self._A = A
        with warnings.catch_warnings():
            # singularity is detected below and reported as RigidityError
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            self._lu = scipy.linalg.lu_factor(A, check_finite=False)
        diag = np.abs(np.diag(self._lu[0]))
        if diag.min() <= RCOND_MIN * diag.max():
            raise RigidityError(f"(XX^T - z) is numerically singular at z={z}")

    def solve(self, B: np.ndarray, check: bool = True) -> np.ndarray:
        out = scipy.linalg.lu_solve(self._lu, B, check_finite=False)
        if check:
            res = np.linalg.norm(self._A @ out - B) / max(np.linalg.norm(B), 1e-300)
            if res > SOLVE_RESIDUAL_TOL:
                raise RigidityError(f"solve residual {res:.3g} at z={z_repr(self.z)}")
        return out


def z_repr(z) -> str:
    return f"{complex(z):.6g}"


def green1(X: np.ndarray, z) -> Green1:
    return Green1(X, z)


@dataclass(frozen=True)
class ChiStats:
    chi: np.ndarray  # (r, r): v_j^T Xi v_k
    chi_u: np.ndarray  # (r,): u^T Xi v_j
    chi_prime: np.ndarray  # (r,): v_j^T G1^2 v_j - m1'
    z: complex

    def vector(self, i: int, N: int) -> np.ndarray:
        """``sqrt(N) (chi_i1..chi_ir, chi_ui, chi'_ii)``."""
        return math.sqrt(N) * np.concatenate([self.chi[i], [self.chi_u[i], self.chi_prime[i]]])


def chi_stats(X: np.ndarray, model: SpikeModel, direction: Direction | None, z, G: Green1 | None = None) -> ChiStats:
    y = model.y
    m, dm = st.m_derivatives(z, y, 1, 1)
    G = G if G is not None else Green1(X, z)
    r = model.r
    u = direction.u if direction is not None else np.zeros(model.M)
    S = G.solve(model.V)  # G1 V
    chi = model.V.T @ S - m * np.eye(r)
    chi = 0.5 * (chi + chi.T)
    chi_u = u @ S  # u is orthogonal to V so no m1 correction
    # v^T G1^2 v = (G1 v)^T (G1 v) for real symmetric G1
    chi_prime = np.einsum("ij,ij->j", S, S) - dm
    return ChiStats(chi, chi_u, chi_prime, z)


def rep_eigenvalue(X: np.ndarray, model: SpikeModel, i: int, chi: ChiStats | None = None) -> float:
    y, di = model.y, model.d[i]
    th = st.theta(di, y)
    if chi is None:
        chi = chi_stats(X, model, None, th)
    return float(th - (di * di - y) * th * chi.chi[i, i])


def overlap_form(model: SpikeModel, direction: Direction, i: int) -> tuple[np.ndarray, np.ndarray]:
    """The vector ``l_i`` and matrix ``A_i`` of the second-order overlap expansion."""
    y, r, d = model.y, model.r, model.d
    di = d[i]
    f, g = st.f_of(di, y), st.g_of(di, y)
    wt = direction.w_tilde
    lvec = np.zeros(r + 2)
    lvec[i] = 2 * di * (di + 1) ** 2 * wt[i]
    lvec[r] = 2 * f
    lvec[r + 1] = f * f * wt[i]
    # A_i = g * a a^T with a_j = nu_i(d_j) w~_j (j != i), a_{r+1} = 1
    a = np.zeros(r + 2)
    a[r] = 1.0
    for j in range(r):
        if j != i:
            nj = st.nu(di, d[j]) * wt[j]
            lvec[j] = 2 * f * nj
            a[j] = nj
    return lvec, g * np.outer(a, a)


def rep_overlap(X: np.ndarray, model: SpikeModel, direction: Direction, i: int, chi: ChiStats | None = None) -> float:
    y, di = model.y, model.d[i]
    th = st.theta(di, y)
    if chi is None:
        chi = chi_stats(X, model, direction, th)
    N = model.N
    vec = chi.vector(i, N)
    lvec, A = overlap_form(model, direction, i)
    first = (di * di - y) / (di * (di + y)) * direction.coef[i] ** 2
    return float(first - direction.w_tilde[i] / math.sqrt(N) * (lvec @ vec) + (vec @ A @ vec) / N)


# ------------------------------------------------------------ contour oracle


@dataclass(frozen=True)
class ContourSpec:
    center: float
    radius: float
    nodes: int = 256

    def __post_init__(self):
        if self.nodes < 64:
            raise ValueError("contour needs at least 64 nodes")


def default_contour(model: SpikeModel, i: int, nodes: int = 256) -> ContourSpec:
    d, y = model.d, model.y
    di = d[i]
    rho = min(model.delta / 2, (di - math.sqrt(y)) / 2)
    others = [abs(di - d[j]) for j in range(model.r0) if j != i]
    if others:
        rho = min(rho, min(others) / 2)
    return ContourSpec(float(di), float(rho), nodes)


def _sturm_count(alpha: np.ndarray, beta: np.ndarray, x: float) -> int:
    """Number of eigenvalues of the symmetric tridiagonal (alpha, beta) below x."""
    count = 0
    q = 1.0
    tiny = np.finfo(float).tiny
    for k in range(len(alpha)):
        b2 = beta[k - 1] ** 2 if k > 0 else 0.0
        q = alpha[k] - x - (b2 / q if k > 0 else 0.0)
        if q == 0.0:
            q = -tiny
        if q < 0:
            count += 1
    return count


def contour_overlap(Q: np.ndarray, model: SpikeModel, w: np.ndarray, i: int, spec: ContourSpec | None = None, gap: float = 1e-6) -> float:
    """``-(1/2 pi i) \\oint w^T (Q - z)^{-1} w dz`` over the image of a circle around d_i under theta.

    Q is reduced once to tridiagonal form; every node is then an O(M) banded
    solve. Enclosed eigenvalues are counted with Sturm sequences.
    """
    spec = spec or default_contour(model, i)
    y = model.y
    T, P = scipy.linalg.hessenberg(Q, calc_q=True)
    alpha = np.diag(T).copy()
    beta = np.diag(T, -1).copy()
    b = P.T @ w

    lo = st.theta(spec.center - spec.radius, y)
    hi = st.theta(spec.center + spec.radius, y)
    for x in (lo, hi):
        if _sturm_count(alpha, beta, x - gap) != _sturm_count(alpha, beta, x + gap):
            raise ContourError(f"an eigenvalue lies within {gap} of the contour at {x}")
    enclosed = _sturm_count(alpha, beta, hi) - _sturm_count(alpha, beta, lo)
    if enclosed != 1:
        raise ContourError(f"contour encloses {enclosed} eigenvalues, expected 1")

    n = spec.nodes
    t = 2 * np.pi * np.arange(n) / n
    zeta = spec.center + spec.radius * np.exp(1j * t)
    zs = st.theta(zeta, y)
    dz = st.theta_prime(zeta, y) * 1j * spec.radius * np.exp(1j * t)  # dz/dt
    M = len(alpha)
    ab = np.zeros((3, M), dtype=complex)
    ab[0, 1:] = beta
    ab[2, :-1] = beta
    total = 0.0 + 0.0j
    for zk, dk in zip(zs, dz):
        ab[1] = alpha - zk
        x = scipy.linalg.solve_banded((1, 1), ab, b.astype(complex), check_finite=False)
        total += (b @ x) * dk
    integral = total * (2 * np.pi / n)
    return float((-integral / (2j * np.pi)).real)


# --------------------------------------------------------- resolvent checks


def resolvent_identities(X: np.ndarray, z, pairs: int = 20, rng: np.random.Generator | None = None) -> dict[str, float]:
    """Max residuals of ``G1^l XX^T = G1^{l-1} + z G1^l`` and ``X^T G1^l X = G2^{l-1} + z G2^l``, l = 1, 2."""
    rng = rng or np.random.default_rng(0)
    M, N = X.shape
    g1 = Green1(X, z)
    H2 = X.T @ X
    g2 = Green1(X.T, z, H=H2)
    U = rng.standard_normal((M, pairs))
    U /= np.linalg.norm(U, axis=0)
    Vv = rng.standard_normal((M, pairs))
    Vv /= np.linalg.norm(Vv, axis=0)
    A = rng.standard_normal((N, pairs))
    A /= np.linalg.norm(A, axis=0)
    B = rng.standard_normal((N, pairs))
    B /= np.linalg.norm(B, axis=0)

    out = {}
    # G1 is symmetric, so u^T G1^l H v = (G1^l u)^T H v
    G1u = g1.solve(U)
    G1Gu = g1.solve(G1u)
    H = g1.H
    HV = H @ Vv
    lhs1 = np.einsum("ij,ij->j", G1u, HV)
    rhs1 = np.einsum("ij,ij->j", U, Vv) + z * np.einsum("ij,ij->j", G1u, Vv)
    lhs2 = np.einsum("ij,ij->j", G1Gu, HV)
    rhs2 = np.einsum("ij,ij->j", G1u, Vv) + z * np.einsum("ij,ij->j", G1Gu, Vv)
    out["G1_l1"] = float(np.max(np.abs(lhs1 - rhs1)))
    out["G1_l2"] = float(np.max(np.abs(lhs2 - rhs2)))

    XA = X @ A
    XB = X @ B
    G2a = g2.solve(A)
    G2Ga = g2.solve(G2a)
    lhs1 = np.einsum("ij,ij->j", g1.solve(XA), XB)
    rhs1 = np.einsum("ij,ij->j", A, B) + z * np.einsum("ij,ij->j", G2a, B)
    lhs2 = np.einsum("ij,ij->j", g1.solve(g1.solve(XA)), XB)
    rhs2 = np.einsum("ij,ij->j", G2a, B) + z * np.einsum("ij,ij->j", G2Ga, B)
    out["XtG1X_l1"] = float(np.max(np.abs(lhs1 - rhs1)))
    out["XtG1X_l2"] = float(np.max(np.abs(lhs2 - rhs2)))
    return out


def g1_squared_vs_derivative(X: np.ndarray, z, v: np.ndarray, step: float = 1e-5) -> float:
    """Relative error between ``v^T G1^2 v`` and a central difference of ``v^T G1 v``."""
    sol = Green1(X, z).solve(v)
    exact = sol @ sol
    fp = v @ Green1(X, z + step).solve(v)
    fm = v @ Green1(X, z - step).solve(v)
    fd = (fp - fm) / (2 * step)
    return float(abs(fd - exact) / abs(exact))
