"""Spiked population model, projection directions and entry laws."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .scalar_theory import TAU_HIGH, TAU_LOW, check_aspect_ratio

ORTHO_TOL = 1e-10


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class SpikeModel:
    M: int
    N: int
    d: np.ndarray  # (r,) strictly decreasing
    V: np.ndarray  # (M, r) orthonormal columns
    delta: float = 0.1
    r0: int = field(init=False)

    def __post_init__(self):
        thr = math.sqrt(self.y) + self.delta
        r0 = 0
        for dj in self.d:
            if dj >= thr:
                r0 += 1
            else:
                break
        object.__setattr__(self, "r0", r0)

    @property
    def y(self) -> float:
        return self.M / self.N

    @property
    def r(self) -> int:
        return len(self.d)

    def v(self, i: int) -> np.ndarray:
        """Spike direction, 0-based index."""
        return self.V[:, i]

    def sqrt_sigma_apply(self, A: np.ndarray) -> np.ndarray:
        """``Sigma^{1/2} @ A`` through the spike basis, never forming Sigma."""
        if self.r == 0:
            return A
        scale = np.sqrt(1.0 + self.d) - 1.0
        return A + self.V @ (scale[:, None] * (self.V.T @ A))

    def sigma(self) -> np.ndarray:
        return np.eye(self.M) + (self.V * self.d) @ self.V.T

    def sqrt_sigma(self) -> np.ndarray:
        return self.sqrt_sigma_apply(np.eye(self.M))


def build_model(
    M: int,
    N: int,
    spikes: Sequence[tuple[float, np.ndarray]],
    delta: float = 0.1,
    tau: tuple[float, float] = (TAU_LOW, TAU_HIGH),
    r0: int | None = None,
) -> SpikeModel:
    """Validate and assemble a spiked model.

    ``spikes`` is a sequence of ``(d, v)``. Spikes at or above ``sqrt(y) + delta``
    are supercritical and must be mutually separated by at least ``delta``.
    Passing ``r0`` declares how many leading spikes must be supercritical.
    """
    M, N = int(M), int(N)
    if M < 1 or N < 1:
        raise ModelError("dimensions must be positive")
    y = check_aspect_ratio(M / N, *tau)
    d = np.array([float(s[0]) for s in spikes], dtype=float)
    if len(spikes):
        V = np.column_stack([np.asarray(s[1], dtype=float) for s in spikes])
    else:
        V = np.zeros((M, 0))
    if V.shape[0] != M:
        raise ModelError(f"spike directions must have length M={M}")
    if np.any(d <= 0):
        raise ModelError("spike strengths must be positive")
    if np.any(np.diff(d) >= 0):
        raise ModelError("spike strengths must be strictly decreasing")
    gram = V.T @ V
    if not np.allclose(gram, np.eye(len(d)), rtol=0, atol=ORTHO_TOL):
        raise ModelError("spike directions are not orthonormal")
    model = SpikeModel(M, N, d, V, float(delta))
    sup = d[: model.r0]
    if len(sup) > 1 and np.min(-np.diff(sup)) < delta:
        raise ModelError(f"supercritical spikes are not separated by delta={delta}")
    if r0 is not None and r0 > model.r0:
        bad = d[model.r0]
        raise ModelError(
            f"spike {model.r0 + 1} (d={bad}) declared supercritical but d <= sqrt(y) + delta"
        )
    d.setflags(write=False)
    V.setflags(write=False)
    return model


@dataclass(frozen=True)
class Direction:
    w: np.ndarray
    coef: np.ndarray  # <w, v_j>
    u: np.ndarray  # residual orthogonal to span(v)
    w_tilde: np.ndarray  # coef / sqrt(1 + d_j)

    def recompose(self, model: SpikeModel) -> np.ndarray:
        return model.V @ self.coef + self.u


def decompose_direction(model: SpikeModel, w) -> Direction:
    w = np.asarray(w, dtype=float)
    if w.shape != (model.M,):
        raise ModelError(f"direction must have shape ({model.M},)")
    if abs(np.linalg.norm(w) - 1.0) > ORTHO_TOL:
        raise ModelError("direction must be a unit vector")
    coef = model.V.T @ w
    u = w - model.V @ coef
    return Direction(w, coef, u, coef / np.sqrt(1.0 + model.d))


def basis_vector(M: int, k: int) -> np.ndarray:
    """Unit vector e_k with 1-based ``k``."""
    e = np.zeros(M)
    e[k - 1] = 1.0
    return e


def uniform_vector(M: int) -> np.ndarray:
    return np.full(M, 1.0 / math.sqrt(M))


# ---------------------------------------------------------------- entry laws


@dataclass(frozen=True)
class EntryLaw:
    """Zero-mean, unit-variance scalar law with known third and fourth cumulants."""

    kind: str
    kappa3: float
    kappa4: float
    atoms: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.standard_normal(shape)
        if self.kind == "rademacher":
            return rng.integers(0, 2, size=shape).astype(float) * 2.0 - 1.0
        return rng.choice(np.asarray(self.atoms), size=shape, p=np.asarray(self.probs))

    def moments(self) -> tuple[float, float, float, float]:
        """Exact raw moments E x^k, k = 1..4."""
        if self.kind == "gaussian":
            return 0.0, 1.0, 0.0, 3.0
        a = np.asarray(self.atoms)
        p = np.asarray(self.probs)
        return tuple(float(np.dot(p, a**k)) for k in range(1, 5))


def _three_point(kappa3: float, kappa4: float) -> tuple[tuple[float, ...], tuple[float, ...]]:
    # Atoms {a, 0, b}. The two non-zero atoms carry a measure with moments
    # s1=0, s2=1, s3=k3, s4=k4+3, so they are the roots of x^2 - e1 x + e2
    # with e1 = k3 and e2 = k3^2 - s4.
    s4 = kappa4 + 3.0
    e1 = kappa3
    e2 = kappa3**2 - s4
    disc = e1 * e1 - 4 * e2
    if e2 >= 0 or disc <= 0:
        raise ModelError(f"no three-point law with kappa3={kappa3}, kappa4={kappa4}")
    root = math.sqrt(disc)
    a, b = (e1 - root) / 2, (e1 + root) / 2
    pa = 1.0 / (a * (a - b))
    pb = 1.0 / (b * (b - a))
    p0 = 1.0 - pa - pb
    if not (0 < pa < 1 and 0 < pb < 1 and 0 < p0 < 1):
        raise ModelError(
            f"no three-point law with kappa3={kappa3}, kappa4={kappa4}: "
            f"requires kappa4 > kappa3^2 - 2"
        )
    return (a, 0.0, b), (pa, p0, pb)


def make_entry_law(kind: str = "gaussian", kappa3: float | None = None, kappa4: float | None = None) -> EntryLaw:
    if kind == "gaussian":
        if (kappa3 or 0.0) != 0.0 or (kappa4 or 0.0) != 0.0:
            raise ModelError("gaussian law has kappa3 = kappa4 = 0")
        return EntryLaw("gaussian", 0.0, 0.0)
    if kind == "rademacher":
        if (kappa3 or 0.0) != 0.0 or (kappa4 if kappa4 is not None else -2.0) != -2.0:
            raise ModelError("rademacher law has kappa3 = 0, kappa4 = -2")
        return EntryLaw("rademacher", 0.0, -2.0, (-1.0, 1.0), (0.5, 0.5))
    if kind == "three_point":
        if kappa3 is None or kappa4 is None:
            raise ModelError("three_point law needs kappa3 and kappa4")
        atoms, probs = _three_point(float(kappa3), float(kappa4))
        return EntryLaw("three_point", float(kappa3), float(kappa4), atoms, probs)
    raise ModelError(f"unknown entry law {kind!r}")


# ------------------------------------------------------------ serialization


def _parse_vector(spec, M: int, model: SpikeModel | None = None) -> np.ndarray:
    if isinstance(spec, str):
        s = spec.strip()
        if s.startswith("e_"):
            return basis_vector(M, int(s[2:]))
        if s == "uniform":
            return uniform_vector(M)
        if s.startswith("v_"):
            if model is None:
                raise ModelError("v_k direction needs a model")
            return np.array(model.v(int(s[2:]) - 1))
        raise ModelError(f"cannot parse vector {spec!r}")
    v = np.asarray(spec, dtype=float)
    if v.shape != (M,):
        raise ModelError(f"vector must have length {M}")
    return v


def model_from_dict(cfg: dict) -> SpikeModel:
    M, N = int(cfg["M"]), int(cfg["N"])
    spikes = [(float(s["d"]), _parse_vector(s["v"], M)) for s in cfg.get("spikes", [])]
    return build_model(M, N, spikes, float(cfg.get("delta", 0.1)), r0=cfg.get("r0"))


def model_to_dict(model: SpikeModel) -> dict:
    spikes = []
    for j in range(model.r):
        v = model.v(j)
        nz = np.flatnonzero(v)
        if len(nz) == 1 and v[nz[0]] == 1.0:
            spikes.append({"d": float(model.d[j]), "v": f"e_{nz[0] + 1}"})
        else:
            spikes.append({"d": float(model.d[j]), "v": v.tolist()})
    return {"M": model.M, "N": model.N, "spikes": spikes, "delta": model.delta}


def direction_from_spec(spec, model: SpikeModel) -> np.ndarray:
    """Parse ``{"w": "v_1" | "uniform" | "e_k" | "perp" | [floats]}``.

    ``perp`` is a fixed unit vector orthogonal to every spike direction.
    """
    w = spec["w"] if isinstance(spec, dict) else spec
    if w == "perp":
        return perpendicular_unit(model)
    return _parse_vector(w, model.M, model)


def perpendicular_unit(model: SpikeModel) -> np.ndarray:
    """Deterministic unit vector orthogonal to all v_j: the first e_k with a nonzero residual."""
    for k in range(model.M):
        e = basis_vector(model.M, k + 1)
        res = e - model.V @ (model.V.T @ e)
        n = np.linalg.norm(res)
        if n > 0.5:
            return res / n
    raise ModelError("could not build a direction orthogonal to the spikes")
