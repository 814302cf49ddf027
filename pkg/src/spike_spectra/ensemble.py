"""Sampling Q = Sigma^{1/2} X X^T Sigma^{1/2} and extracting standardized outlier statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from . import scalar_theory as st
from .model import EntryLaw, SpikeModel, decompose_direction
from .predictor import first_order

OVERLAP_EPS = 1e-8
PARTIAL_EIG_MIN_M = 500


@dataclass(frozen=True)
class TrialSeed:
    master_seed: int
    trial_index: int

    def generator(self) -> np.random.Generator:
        """Counter-based stream: Philox keyed by the master seed, spawned per trial index."""
        ss = np.random.SeedSequence(int(self.master_seed) & (2**64 - 1), spawn_key=(int(self.trial_index),))
        return np.random.Generator(np.random.Philox(ss))


def sample_X(M: int, N: int, law: EntryLaw, seed: TrialSeed | np.random.Generator) -> np.ndarray:
    rng = seed.generator() if isinstance(seed, TrialSeed) else seed
    return law.sample(rng, (M, N)) / math.sqrt(N)


def build_Q(model: SpikeModel, X: np.ndarray) -> np.ndarray:
    if X.shape[0] != model.M:
        raise ValueError(f"X has {X.shape[0]} rows, model has M={model.M}")
    Y = model.sqrt_sigma_apply(X)
    Q = Y @ Y.T
    return 0.5 * (Q + Q.T)


def top_spectrum(Q: np.ndarray, k: int, spikes: np.ndarray | None = None):
    """Top-``k`` eigenpairs, eigenvalues descending.

    Signs: ``<v_j, xi_j> >= 0`` for columns matched to ``spikes`` (M x r),
    otherwise the first nonzero component is positive.
    """
    M = Q.shape[0]
    if not 1 <= k <= M:
        raise ValueError(f"k={k} out of range 1..{M}")
    if M > PARTIAL_EIG_MIN_M:
        w, U = scipy.linalg.eigh(Q, subset_by_index=(M - k, M - 1), driver="evr")
    else:
        w, U = np.linalg.eigh(Q)
        w, U = w[M - k:], U[:, M - k:]
    w, U = w[::-1].copy(), U[:, ::-1].copy()
    for j in range(k):
        col = U[:, j]
        if spikes is not None and j < spikes.shape[1]:
            s = spikes[:, j] @ col
        else:
            nz = np.flatnonzero(np.abs(col) > 1e-14)
            s = col[nz[0]] if len(nz) else 1.0
        if s < 0:
            U[:, j] = -col
    return w, U


@dataclass
class DirectionObservation:
    overlap: float  # <w, xi_i>
    upsilon_hat: float
    theta_hat: float | None
    lambda_sq_hat: float | None
    lambda_signed_hat: float | None


@dataclass
class TrialObservation:
    trial_index: int
    mu: np.ndarray
    spike_overlap: float  # <v_i, xi_i> >= 0
    directions: list[DirectionObservation] = field(default_factory=list)


def observe_from_Q(model: SpikeModel, Q: np.ndarray, directions: Sequence[np.ndarray], i: int = 0, trial_index: int = 0) -> TrialObservation:
    if model.r0 < 1:
        raise ValueError("model has no supercritical spike")
    k = model.r0 + 1
    mu, U = top_spectrum(Q, k, model.V[:, : model.r0])
    xi = U[:, i]
    N = model.N
    rt = math.sqrt(N)
    obs = TrialObservation(trial_index, mu, float(model.v(i) @ xi))
    for w in directions:
        D = decompose_direction(model, w)
        th, ov_lim = first_order(model, D, i)
        ov = float(w @ xi)
        wi = D.coef[i]
        theta_hat = rt * (ov * ov - ov_lim) / wi if abs(wi) >= OVERLAP_EPS else None
        if abs(wi) < OVERLAP_EPS:
            lam_sq, lam_signed = N * ov * ov, rt * ov
        else:
            lam_sq = lam_signed = None
        obs.directions.append(DirectionObservation(ov, rt * (mu[i] - th), theta_hat, lam_sq, lam_signed))
    return obs


def observe_trial(model: SpikeModel, directions: Sequence[np.ndarray], law: EntryLaw, seed: TrialSeed, i: int = 0) -> TrialObservation:
    X = sample_X(model.M, model.N, law, seed)
    return observe_from_Q(model, build_Q(model, X), directions, i, seed.trial_index)


CSV_NA = "NA"


def trial_csv_header(r0: int, n_dirs: int) -> list[str]:
    cols = ["trial_index"] + [f"mu_{j + 1}" for j in range(r0 + 1)]
    for k in range(n_dirs):
        sfx = "" if n_dirs == 1 else f"_w{k + 1}"
        cols += [f"overlap{sfx}", f"Upsilon_hat{sfx}", f"Theta_hat{sfx}", f"Lambda_sq_hat{sfx}", f"Lambda_signed_hat{sfx}"]
    return cols


def trial_csv_row(obs: TrialObservation) -> list[str]:
    def fmt(x):
        return CSV_NA if x is None else repr(float(x))

    row = [str(obs.trial_index)] + [fmt(m) for m in obs.mu]
    for d in obs.directions:
        row += [fmt(d.overlap), fmt(d.upsilon_hat), fmt(d.theta_hat), fmt(d.lambda_sq_hat), fmt(d.lambda_signed_hat)]
    return row


def edge(model: SpikeModel) -> float:
    return st.mp_edges(model.y).lambda_plus
