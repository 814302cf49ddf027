"""Coverage of the delta-method confidence interval for a single gaussian spike."""
import argparse

from spike_spectra.ensemble import TrialSeed, build_Q, sample_X, top_spectrum
from spike_spectra.inference import estimate_spike
from spike_spectra.model import basis_vector, build_model, make_entry_law


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--d", type=float, default=2.0)
    p.add_argument("--M", type=int, default=250)
    p.add_argument("--N", type=int, default=500)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=909)
    args = p.parse_args()
    m = build_model(args.M, args.N, [(args.d, basis_vector(args.M, 1))])
    law = make_entry_law("gaussian")
    hits = 0
    for t in range(args.trials):
        mu, _ = top_spectrum(build_Q(m, sample_X(args.M, args.N, law, TrialSeed(args.seed, t))), 1)
        e = estimate_spike(mu[0], args.M, args.N, alpha=args.alpha)
        hits += e.ci_lower <= args.d <= e.ci_upper
    print(f"coverage {hits / args.trials:.4f} over {args.trials} trials (nominal {1 - args.alpha:.2f})")


if __name__ == "__main__":
    main()
