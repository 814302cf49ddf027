"""Command-line entry point: predict, simulate, verify, estimate, identities, tables.

Exit codes: 0 success or pass, 1 verification failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import scipy.stats

from . import scalar_theory as st
from .checks import identity_battery
from .inference import debias_overlap, detect_spikes, estimate_spike, sample_covariance_eigenvalues
from .model import ModelError, basis_vector, build_model, decompose_direction, perpendicular_unit, uniform_vector
from .montecarlo import (
    WORKERS_ENV,
    ConfigError,
    ExperimentConfig,
    ExperimentError,
    load_config,
    prepare,
    report_json,
    run_experiment,
    run_trials,
    write_trials_csv,
)
from .predictor import predict

log = logging.getLogger("spike_spectra")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
HIST_BINS = 50
DEFAULT_N = 1000


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


# ----------------------------------------------------------------- predict


def _model_from_flags(args):
    if args.config:
        cfg = load_config(args.config)
        setup = prepare(cfg)
        return setup.model, list(setup.directions), setup.law.kappa4
    if args.d is None:
        raise UsageError("--d or --config is required")
    N = args.N or DEFAULT_N
    if args.M is not None:
        M = args.M
    elif args.y is not None:
        M = round(args.y * N)
        if abs(M / N - args.y) > 1e-12:
            raise UsageError(f"--y {args.y} is not representable with N={N}; pass --M and --N")
    else:
        raise UsageError("one of --y or --M is required")
    y = M / N
    if args.d <= math.sqrt(y) + args.delta:
        raise st.SubcriticalError(f"subcritical spike: d={args.d} <= sqrt(y) + delta = {math.sqrt(y) + args.delta:g}")
    model = build_model(M, N, [(args.d, basis_vector(M, 1))], args.delta)
    return model, [_direction(args.w, model)], args.kappa4


def _direction(spec: str, model) -> np.ndarray:
    if spec in ("vi", "v1", "v_1"):
        return np.array(model.v(0))
    if spec == "perp":
        return perpendicular_unit(model)
    if spec == "uniform":
        return uniform_vector(model.M)
    if spec.startswith("file:"):
        w = np.loadtxt(spec[5:], dtype=float).ravel()
        if w.shape != (model.M,):
            raise UsageError(f"direction file has {w.size} entries, expected M={model.M}")
        return w / np.linalg.norm(w)
    raise UsageError(f"unknown direction {spec!r}")


def cmd_predict(args) -> int:
    model, dirs, kappa4 = _model_from_flags(args)
    out = []
    for w in dirs:
        res = predict(model, decompose_direction(model, w), args.spike - 1, kappa4)
        V = res["V_theorem"]
        res["V_entries"] = {"V11": V[0][0], "V12": V[0][1], "V22": V[1][1], "V13": V[0][2], "V23": V[1][2], "V33": V[2][2]}
        res.update({"d": float(model.d[args.spike - 1]), "y": model.y, "M": model.M, "N": model.N, "kappa4": kappa4})
        out.append(res)
    _emit(json.dumps(out if len(out) > 1 else out[0], indent=2, sort_keys=True), args.out)
    return EXIT_OK


# --------------------------------------------------------- verify/simulate


def _experiment_config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.trials is not None:
        cfg.trials = args.trials
    if getattr(args, "expected", None):
        data = json.loads(Path(args.expected).read_text())
        data = data if isinstance(data, list) else [data]
        cfg.expected = [d["V_theorem"] for d in data]
    return cfg


def _workers(args) -> int | None:
    if args.workers is not None:
        return args.workers
    env = os.environ.get(WORKERS_ENV)
    return int(env) if env else None


def cmd_verify(args) -> int:
    cfg = _experiment_config(args)
    log.info("verify: config hash %s, seed %d", cfg.hash(), cfg.master_seed)
    report = run_experiment(cfg, _workers(args))
    out = args.out or cfg.report_path
    _emit(report_json(report), out)
    for d in report["directions"]:
        for c in d["checks"]:
            log.info("%-26s %-5s value=%.6g target=%.6g bound=%.3g", c["name"], "ok" if c["passed"] else "FAIL", c["value"], c["target"], c["bound"])
    log.info("verdict: %s", report["verdict"])
    return EXIT_OK if report["verdict"] == "pass" else EXIT_FAIL


def cmd_simulate(args) -> int:
    cfg = _experiment_config(args)
    out = args.out or cfg.trials_csv
    if not out:
        raise UsageError("simulate needs --out or outputs.trials_csv")
    cfg.trials_csv = out
    log.info("simulate: config hash %s, seed %d", cfg.hash(), cfg.master_seed)
    setup, _, rows, failures = run_trials(cfg, _workers(args))
    write_trials_csv(out, setup, rows)
    log.info("wrote %d trials (%d failed) to %s", len(rows), failures, out)
    return EXIT_OK


# ---------------------------------------------------------------- estimate


def cmd_estimate(args) -> int:
    data = np.loadtxt(args.input, delimiter=",", ndmin=2)
    if data.shape[1] == 1:
        eigs = np.sort(data[:, 0])[::-1]
        if args.M is None or args.N is None:
            raise UsageError("eigenvalue input needs --M and --N")
        M, N = args.M, args.N
    else:
        if not args.y_from_shape and (args.M is None or args.N is None):
            raise UsageError("data matrix input needs --y-from-shape or --M/--N")
        M, N = data.shape
        eigs = sample_covariance_eigenvalues(data)
    st.check_aspect_ratio(M / N)
    idx = detect_spikes(eigs, M, N, args.edge_c)
    out = [estimate_spike(eigs[k], M, N, args.kappa4, args.s4, args.alpha, index=k).to_dict() for k in idx]
    if args.overlap_sq is not None and out:
        ov = debias_overlap(args.overlap_sq, out[0]["d_hat"], M / N)
        out[0]["loading_sq"] = ov.loading_sq
        out[0]["loading_clamped"] = ov.clamped
        if ov.clamped:
            log.warning("debiased loading clamped to [0, 1]")
    _emit(json.dumps(out, indent=2, sort_keys=True), args.out)
    return EXIT_OK


# -------------------------------------------------------------- identities


def cmd_identities(args) -> int:
    res = identity_battery(seed=args.seed or 0)
    _emit(json.dumps({k: v["max_residual"] for k, v in res.items()}, indent=2, sort_keys=True), args.out)
    failed = [k for k, v in res.items() if not v["passed"]]
    for k in failed:
        log.error("identity %s failed: %.3g >= %.3g", k, res[k]["max_residual"], res[k]["threshold"])
    return EXIT_FAIL if failed else EXIT_OK


# ------------------------------------------------------------------ tables


def emit_plot_tables(report: dict, out_dir: str | Path, bins: int = HIST_BINS) -> list[Path]:
    """Write a standardized histogram and a QQ table per observable; returns the paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for k, d in enumerate(report["directions"]):
        samples = d.get("samples")
        if samples is None:
            raise ValueError("report carries no per-trial samples")
        V = np.array(d["expected_V"])
        scales = {"Upsilon": V[0, 0], "Theta": V[1, 1], "Lambda_signed": V[2, 2]}
        for name in ("Upsilon", "Theta", "Lambda_signed"):
            x = np.asarray(samples.get(name, []), dtype=float)
            x = x[np.isfinite(x)]
            if x.size == 0:
                log.info("direction %d: %s has no values, table omitted", k + 1, name)
                continue
            z = x / math.sqrt(scales[name])
            counts, edges = np.histogram(z, bins=bins)
            width = np.diff(edges)
            mid = 0.5 * (edges[:-1] + edges[1:])
            hist = out_dir / f"hist_w{k + 1}_{name}.csv"
            with open(hist, "w", newline="") as fh:
                wr = csv.writer(fh)
                wr.writerow(["bin_left", "bin_right", "count", "density", "normal_pdf"])
                for a, b, c, wdt, m in zip(edges[:-1], edges[1:], counts, width, mid):
                    wr.writerow([repr(float(a)), repr(float(b)), int(c), repr(float(c / (z.size * wdt))), repr(float(scipy.stats.norm.pdf(m)))])
            zs = np.sort(z)
            p = (np.arange(1, zs.size + 1) - 0.5) / zs.size
            qq = out_dir / f"qq_w{k + 1}_{name}.csv"
            with open(qq, "w", newline="") as fh:
                wr = csv.writer(fh)
                wr.writerow(["probability", "empirical", "normal"])
                for pi, e in zip(p, zs):
                    wr.writerow([repr(float(pi)), repr(float(e)), repr(float(scipy.stats.norm.ppf(pi)))])
            written += [hist, qq]
    return written


def cmd_tables(args) -> int:
    path = Path(args.report)
    if not path.exists():
        raise UsageError(f"missing report {path}")
    report = json.loads(path.read_text())
    for p in emit_plot_tables(report, args.out or "."):
        log.info("wrote %s", p)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spike-spectra", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out")

    sp = sub.add_parser("predict", help="closed-form predictions for one outlier")
    common(sp)
    sp.add_argument("--d", type=float)
    sp.add_argument("--y", type=float)
    sp.add_argument("--M", type=int)
    sp.add_argument("--N", type=int)
    sp.add_argument("--w", default="vi")
    sp.add_argument("--kappa3", type=float, default=0.0)
    sp.add_argument("--kappa4", type=float, default=0.0)
    sp.add_argument("--delta", type=float, default=0.1)
    sp.add_argument("--spike", type=int, default=1)
    sp.set_defaults(func=cmd_predict)

    for name, fn, hlp in (("verify", cmd_verify, "Monte Carlo check of the predictions"), ("simulate", cmd_simulate, "write per-trial CSV")):
        sp = sub.add_parser(name, help=hlp)
        common(sp, config_required=True)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--expected", help="predict output whose V_theorem replaces the computed prediction")
        sp.set_defaults(func=fn)

    sp = sub.add_parser("estimate", help="detect and debias outliers")
    sp.add_argument("input")
    sp.add_argument("--M", type=int)
    sp.add_argument("--N", type=int)
    sp.add_argument("--y-from-shape", action="store_true")
    sp.add_argument("--kappa4", type=float, default=0.0)
    sp.add_argument("--s4", type=float, default=0.0)
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--edge-c", type=float, default=4.0)
    sp.add_argument("--overlap-sq", type=float)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("identities", help="run the identity battery")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_identities)

    sp = sub.add_parser("tables", help="plot-ready CSV tables from a report")
    sp.add_argument("--report", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_tables)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except st.SubcriticalError as exc:
        msg = str(exc)
        print(f"error: {msg if msg.startswith('subcritical spike') else 'subcritical spike: ' + msg}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, ConfigError, ModelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
