"""Monte Carlo verification of the joint Gaussian law of the outlier statistics.

Trials are grouped into fixed blocks of consecutive indices. Each block is
accumulated sequentially and blocks are merged along a fixed binary tree over
index ranges, so a report depends only on the config, never on worker count.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np
import scipy.stats
from threadpoolctl import threadpool_limits

from . import __version__
from .ensemble import TrialSeed, observe_trial, trial_csv_header, trial_csv_row
from .model import (
    EntryLaw,
    ModelError,
    SpikeModel,
    decompose_direction,
    direction_from_spec,
    make_entry_law,
    model_from_dict,
)
from .predictor import covariance_greens_mapped, covariance_theorem, first_order

log = logging.getLogger(__name__)

BLOCK_SIZE = 50
MIN_TRIALS = 100
MIN_N = 200
RESERVOIR_CAP = 1_000_000
FAILURE_BUDGET = 0.01
WORKERS_ENV = "SPIKE_SPECTRA_WORKERS"


class ConfigError(ValueError):
    pass


class ExperimentError(RuntimeError):
    pass


@dataclass
class Tolerances:
    var_upsilon_rel: float = 0.05
    var_theta_rel: float = 0.10
    cov_rel: float = 0.10
    var_lambda_rel: float = 0.10
    ks_alpha: float = 0.001
    mean_se: float = 4.0
    bias_c: float = 3.0  # bias allowance C / sqrt(N) with C = bias_c * sqrt(V)
    corr_se: float = 3.0


@dataclass
class ExperimentConfig:
    model: dict
    directions: list = field(default_factory=lambda: [{"w": "v_1"}])
    law: dict = field(default_factory=lambda: {"kind": "gaussian"})
    trials: int = 4000
    master_seed: int = 0
    spike_index: int = 1
    workers: int | None = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    expected: list | None = None  # optional per-direction override of the 3x3 prediction
    report_path: str | None = None
    trials_csv: str | None = None

    @classmethod
    def from_dict(cls, cfg: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(cfg) - known - {"outputs"}
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        cfg = dict(cfg)
        outputs = cfg.pop("outputs", {}) or {}
        tol = cfg.pop("tolerances", {}) or {}
        try:
            tolerances = Tolerances(**tol)
        except TypeError as exc:
            raise ConfigError(f"bad tolerances: {exc}") from None
        if "model" not in cfg:
            raise ConfigError("config needs a 'model' section")
        out = cls(tolerances=tolerances, **cfg)
        out.report_path = outputs.get("report", out.report_path)
        out.trials_csv = outputs.get("trials_csv", out.trials_csv)
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("report_path")
        d.pop("trials_csv")
        d.pop("workers")
        return d

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class Setup:
    model: SpikeModel
    law: EntryLaw
    directions: tuple
    i: int


def prepare(config: ExperimentConfig) -> Setup:
    try:
        model = model_from_dict(config.model)
        law = make_entry_law(config.law.get("kind", "gaussian"), config.law.get("kappa3"), config.law.get("kappa4"))
        dirs = tuple(direction_from_spec(d, model) for d in config.directions)
        for w in dirs:
            decompose_direction(model, w)
    except (ModelError, KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if config.trials < MIN_TRIALS:
        raise ConfigError(f"trials={config.trials} below minimum {MIN_TRIALS}")
    if model.N < MIN_N:
        raise ConfigError(f"N={model.N} below minimum {MIN_N}")
    i = config.spike_index - 1
    if not 0 <= i < model.r0:
        raise ConfigError(f"spike_index {config.spike_index} is not a supercritical spike (r0={model.r0})")
    if not config.directions:
        raise ConfigError("at least one direction is required")
    return Setup(model, law, dirs, i)


# -------------------------------------------------------------- accumulator


def observable_names(model: SpikeModel, w: np.ndarray, i: int) -> list[str]:
    D = decompose_direction(model, w)
    if abs(D.coef[i]) >= 1e-8:
        return ["Upsilon", "Theta"]
    return ["Upsilon", "Lambda_signed", "Lambda_sq"]


@dataclass
class MomentAccumulator:
    """Sufficient statistics over a contiguous trial-index range ``[lo, hi)``."""

    dim: int
    lo: int = 0
    hi: int = 0
    count: int = 0
    total: np.ndarray | None = None
    outer: np.ndarray | None = None
    values: list | None = None  # list of per-trial vectors (capped)

    def __post_init__(self):
        if self.total is None:
            self.total = np.zeros(self.dim)
            self.outer = np.zeros((self.dim, self.dim))
            self.values = []

    @property
    def empty(self) -> bool:
        return self.count == 0

    def add(self, index: int, x: np.ndarray):
        """Add trial ``index``; indices must increase (gaps from failed trials are allowed)."""
        if self.empty:
            self.lo = index
        elif index < self.hi:
            raise ValueError(f"trial {index} added out of order")
        self.hi = index + 1
        self.count += 1
        self.total = self.total + x
        self.outer = self.outer + np.outer(x, x)
        if len(self.values) < RESERVOIR_CAP:
            self.values.append(np.array(x))

    def mean(self) -> np.ndarray:
        return self.total / self.count

    def cov(self) -> np.ndarray:
        mu = self.mean()
        c = (self.outer - self.count * np.outer(mu, mu)) / (self.count - 1)
        return 0.5 * (c + c.T)

    def sample(self) -> np.ndarray:
        return np.array(self.values)


def merge(a: MomentAccumulator, b: MomentAccumulator) -> MomentAccumulator:
    if a.empty:
        return b
    if b.empty:
        return a
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    if not (a.hi <= b.lo or b.hi <= a.lo):
        raise ValueError(f"overlapping trial ranges [{a.lo},{a.hi}) and [{b.lo},{b.hi})")
    if b.hi <= a.lo:
        a, b = b, a
    vals = (a.values + b.values)[:RESERVOIR_CAP]
    return MomentAccumulator(a.dim, a.lo, b.hi, a.count + b.count, a.total + b.total, a.outer + b.outer, vals)


def merge_tree(accs: Sequence[MomentAccumulator]) -> MomentAccumulator:
    """Merge block accumulators (ordered by index) along a fixed balanced binary tree."""
    if not accs:
        raise ValueError("nothing to merge")
    if len(accs) == 1:
        return accs[0]
    mid = len(accs) // 2
    return merge(merge_tree(accs[:mid]), merge_tree(accs[mid:]))


# ----------------------------------------------------------------- KS test


def ks_test(sample, distribution: str = "normal", scale: float = 1.0) -> tuple[float, float]:
    """Two-sided one-sample KS statistic with the asymptotic Kolmogorov p-value.

    ``distribution`` is ``"normal"`` (standard normal) or ``"chi2_1"``
    (``scale`` times a chi-square with one degree of freedom).
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    if n < MIN_TRIALS:
        raise ValueError(f"KS test needs at least {MIN_TRIALS} values, got {n}")
    if np.ptp(x) == 0:
        raise ValueError("degenerate sample (zero variance)")
    if distribution == "normal":
        F = scipy.stats.norm.cdf(x)
    elif distribution == "chi2_1":
        F = scipy.stats.chi2.cdf(x / scale, 1)
    else:
        raise ValueError(f"unknown distribution {distribution!r}")
    ranks = np.arange(1, n + 1) / n
    D = float(max(np.max(ranks - F), np.max(F - (ranks - 1.0 / n))))
    p = float(scipy.stats.kstwobign.sf(D * math.sqrt(n)))
    return D, p


# ------------------------------------------------------------------ trials


def _run_block(args) -> tuple[list[MomentAccumulator], list[list[str]], int, list[str]]:
    config_dict, lo, hi, want_rows = args
    config = ExperimentConfig.from_dict(config_dict)
    setup = prepare(config)
    names = [observable_names(setup.model, w, setup.i) for w in setup.directions]
    accs = [MomentAccumulator(len(n)) for n in names]
    rows, failures, messages = [], 0, []
    with threadpool_limits(1):
        for t in range(lo, hi):
            try:
                obs = observe_trial(setup.model, setup.directions, setup.law, TrialSeed(config.master_seed, t), setup.i)
            except (np.linalg.LinAlgError, ValueError) as exc:
                failures += 1
                messages.append(f"trial {t}: {exc}")
                continue
            for k, (acc, d) in enumerate(zip(accs, obs.directions)):
                if names[k][1] == "Theta":
                    x = np.array([d.upsilon_hat, d.theta_hat])
                else:
                    x = np.array([d.upsilon_hat, d.lambda_signed_hat, d.lambda_sq_hat])
                acc.add(t, x)
            if want_rows:
                rows.append(trial_csv_row(obs))
    for acc in accs:
        if not acc.empty:
            acc.lo, acc.hi = lo, hi
    return accs, rows, failures, messages


def resolve_workers(hint: int | None) -> int:
    if hint:
        return max(1, int(hint))
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return 1


def run_trials(config: ExperimentConfig, workers: int | None = None):
    setup = prepare(config)
    R = config.trials
    blocks = [(lo, min(lo + BLOCK_SIZE, R)) for lo in range(0, R, BLOCK_SIZE)]
    cfg = config.to_dict()
    want_rows = config.trials_csv is not None
    jobs = [(cfg, lo, hi, want_rows) for lo, hi in blocks]
    n_workers = resolve_workers(workers if workers is not None else config.workers)
    if n_workers == 1:
        results = [_run_block(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as ex:
            results = list(ex.map(_run_block, jobs))
    failures = sum(r[2] for r in results)
    if failures > FAILURE_BUDGET * R:
        msgs = [m for r in results for m in r[3]][:10]
        raise ExperimentError(f"{failures} of {R} trials failed: " + "; ".join(msgs))
    per_dir = []
    for k in range(len(setup.directions)):
        per_dir.append(merge_tree([r[0][k] for r in results]))
    rows = [row for r in results for row in r[1]]
    return setup, per_dir, rows, failures


# ----------------------------------------------------------------- report


def _col_se_cov(sample: np.ndarray) -> np.ndarray:
    """Standard errors of the sample covariance entries from centred products."""
    c = sample - sample.mean(axis=0)
    n = len(c)
    k = c.shape[1]
    se = np.zeros((k, k))
    for a in range(k):
        for b in range(k):
            prod = c[:, a] * c[:, b]
            se[a, b] = prod.std(ddof=1) / math.sqrt(n)
    return se


def _check(name: str, value: float, target: float, bound: float, passed: bool, **extra) -> dict:
    out = {"name": name, "value": float(value), "target": float(target), "bound": float(bound), "passed": bool(passed)}
    out.update(extra)
    return out


def _rel_check(name, emp, pred, tol):
    if pred == 0:
        return _check(name, emp, pred, tol, abs(emp) <= tol, mode="absolute")
    rel = abs(emp / pred - 1.0)
    return _check(name, emp, pred, tol, rel <= tol, relative_error=float(rel))


def predicted_covariance(setup: Setup, w: np.ndarray) -> dict:
    D = decompose_direction(setup.model, w)
    k4 = setup.law.kappa4
    th, ov = first_order(setup.model, D, setup.i)
    return {
        "theta": float(th),
        "overlap_limit": float(ov),
        "kappa4": float(k4),
        "V_theorem": covariance_theorem(setup.model, D, setup.i, k4).V.tolist(),
        "V_greens_mapped": covariance_greens_mapped(setup.model, D, setup.i, k4).V.tolist(),
    }


def direction_report(setup: Setup, w: np.ndarray, acc: MomentAccumulator, tol: Tolerances, expected=None) -> dict:
    model = setup.model
    N = model.N
    names = observable_names(model, w, setup.i)
    pred = predicted_covariance(setup, w)
    V = np.array(expected if expected is not None else pred["V_theorem"], dtype=float)
    R = acc.count
    sample = acc.sample()
    mean = acc.mean()
    cov = acc.cov()
    mean_se = np.sqrt(np.diag(cov) / R)
    cov_se = _col_se_cov(sample)
    checks = []

    def bias_gate(name, idx, var):
        bound = tol.mean_se * mean_se[idx] + tol.bias_c * math.sqrt(max(var, 0.0)) / math.sqrt(N)
        checks.append(_check(name, mean[idx], 0.0, bound, abs(mean[idx]) <= bound))

    v11 = V[0, 0]
    checks.append(_rel_check("var_upsilon", cov[0, 0], v11, tol.var_upsilon_rel))
    bias_gate("mean_upsilon", 0, v11)
    ks = {}
    D_, p = ks_test(sample[:, 0] / math.sqrt(v11), "normal")
    ks["upsilon"] = {"statistic": D_, "p_value": p}
    checks.append(_check("ks_upsilon", p, tol.ks_alpha, tol.ks_alpha, p > tol.ks_alpha))

    if names[1] == "Theta":
        v22, v12 = V[1, 1], V[0, 1]
        checks.append(_rel_check("var_theta", cov[1, 1], v22, tol.var_theta_rel))
        if v12 == 0:
            bound = 3 * cov_se[0, 1]
            checks.append(_check("cov_upsilon_theta", cov[0, 1], 0.0, bound, abs(cov[0, 1]) <= bound, mode="absolute_se"))
        else:
            checks.append(_rel_check("cov_upsilon_theta", cov[0, 1], v12, tol.cov_rel))
        bias_gate("mean_theta", 1, v22)
        D_, p = ks_test(sample[:, 1] / math.sqrt(v22), "normal")
        ks["theta"] = {"statistic": D_, "p_value": p}
        checks.append(_check("ks_theta", p, tol.ks_alpha, tol.ks_alpha, p > tol.ks_alpha))
    else:
        v33, v13 = V[2, 2], V[0, 2]
        checks.append(_rel_check("var_lambda_signed", cov[1, 1], v33, tol.var_lambda_rel))
        bias_gate("mean_lambda_signed", 1, v33)
        D_, p = ks_test(sample[:, 2], "chi2_1", scale=v33)
        ks["lambda_sq"] = {"statistic": D_, "p_value": p}
        checks.append(_check("ks_lambda_sq", p, tol.ks_alpha, tol.ks_alpha, p > tol.ks_alpha))
        rho_pred = abs(v13) / math.sqrt(v11 * v33)
        rho_emp = abs(cov[0, 1]) / math.sqrt(cov[0, 0] * cov[1, 1])
        bound = tol.corr_se * (1 - rho_pred**2) / math.sqrt(R) + 1.0 / math.sqrt(N)
        checks.append(_check("abs_corr_upsilon_lambda", rho_emp, rho_pred, bound, abs(rho_emp - rho_pred) <= bound))

    z = {}
    for a in range(len(names)):
        for b in range(a, len(names)):
            ia = [0, 1, 2][a] if names[1] == "Theta" else [0, 2, 2][a]
            ib = [0, 1, 2][b] if names[1] == "Theta" else [0, 2, 2][b]
            if names[a] == "Lambda_sq" or names[b] == "Lambda_sq":
                continue
            key = f"{names[a]}*{names[b]}"
            target = V[ia, ib]
            if names[a] != names[b] and "Lambda_signed" in (names[a], names[b]):
                # Lambda is only identified up to sign
                z[key] = float((abs(cov[a, b]) - abs(target)) / cov_se[a, b])
            else:
                z[key] = float((cov[a, b] - target) / cov_se[a, b])

    return {
        "w": [float(x) for x in w] if len(w) <= 16 else None,
        "observables": names,
        "trials": int(R),
        "mean": mean.tolist(),
        "mean_se": mean_se.tolist(),
        "cov": cov.tolist(),
        "cov_se": cov_se.tolist(),
        "predicted": pred,
        "expected_V": V.tolist(),
        "z_scores": z,
        "ks": ks,
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
        "samples": {n: sample[:, k].tolist() for k, n in enumerate(names)},
    }


def run_experiment(config: ExperimentConfig, workers: int | None = None, keep_samples: bool = True) -> dict:
    t0 = time.perf_counter()
    setup, accs, rows, failures = run_trials(config, workers)
    log.info("config %s seed %d: %d trials done", config.hash(), config.master_seed, config.trials)
    expected = config.expected or [None] * len(setup.directions)
    dirs = [direction_report(setup, w, acc, config.tolerances, exp) for w, acc, exp in zip(setup.directions, accs, expected)]
    if not keep_samples:
        for d in dirs:
            d.pop("samples")
    if config.trials_csv:
        write_trials_csv(config.trials_csv, setup, rows)
    report = {
        "provenance": {
            "config_hash": config.hash(),
            "master_seed": int(config.master_seed),
            "version": __version__,
            "config": config.to_dict(),
        },
        "failed_trials": int(failures),
        "directions": dirs,
        "verdict": "pass" if all(d["passed"] for d in dirs) else "fail",
        "calibration_note": "mean, correlation and KS gates use artifact-chosen finite-N allowances",
        "runtime_seconds": time.perf_counter() - t0,
    }
    return report


def write_trials_csv(path: str, setup: Setup, rows: list[list[str]]):
    import csv

    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(trial_csv_header(setup.model.r0, len(setup.directions)))
        wr.writerows(rows)


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2)


def strip_runtime(report: dict) -> dict:
    out = dict(report)
    out.pop("runtime_seconds", None)
    return out


def compare_variances(rep_a: dict, rep_b: dict, k: int = 0, index: int = 0) -> tuple[float, float]:
    """Difference ``Var_b - Var_a`` of one observable across two reports, and its joint standard error."""
    a, b = rep_a["directions"][k], rep_b["directions"][k]
    diff = b["cov"][index][index] - a["cov"][index][index]
    se = math.hypot(a["cov_se"][index][index], b["cov_se"][index][index])
    return diff, se


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw: Any = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return ExperimentConfig.from_dict(raw)
