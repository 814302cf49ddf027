"""Paired gaussian and rademacher runs: the shift in Var(Upsilon) for localized and delocalized spikes."""
import argparse
import json
from pathlib import Path

from spike_spectra.montecarlo import compare_variances, load_config, run_experiment

ROOT = Path(__file__).resolve().parent.parent
PAIRS = {
    "localized": ("desk_gaussian", "rademacher_localized"),
    "delocalized": ("gaussian_delocalized", "rademacher_delocalized"),
}


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()
    d, y, k4 = 2.0, 0.5, -2.0
    out = {}
    for label, (a, b) in PAIRS.items():
        reps = []
        for name in (a, b):
            cfg = load_config(str(ROOT / "configs" / f"{name}.json"))
            if args.trials:
                cfg.trials = args.trials
            reps.append(run_experiment(cfg, workers=args.workers, keep_samples=False))
        diff, se = compare_variances(*reps)
        out[label] = {"delta_var_upsilon": diff, "joint_se": se}
    out["localized"]["predicted"] = k4 * (1 + d) ** 2 * (d * d - y) ** 2 / d**4
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
