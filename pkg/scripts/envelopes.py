"""Percentiles of the outlier and edge deviations for a single gaussian spike across N."""
import argparse
import math

import numpy as np
from scipy.stats import norm

from spike_spectra import scalar_theory as st
from spike_spectra.ensemble import TrialSeed, build_Q, sample_X, top_spectrum
from spike_spectra.model import basis_vector, build_model, make_entry_law
from spike_spectra.predictor import var_upsilon


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--d", type=float, default=2.0)
    p.add_argument("--y", type=float, default=0.5)
    p.add_argument("--N", type=int, nargs="+", default=[250, 500, 1000])
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=808)
    args = p.parse_args()
    law = make_entry_law("gaussian")
    print(f"limiting p99 of sqrt(N)|mu1 - theta|: {norm.ppf(0.995) * math.sqrt(var_upsilon(args.d, args.y)):.3f}")
    for N in args.N:
        M = round(args.y * N)
        m = build_model(M, N, [(args.d, basis_vector(M, 1))])
        th, lp = st.theta(args.d, m.y), st.mp_edges(m.y).lambda_plus
        out, edge = [], []
        for t in range(args.trials):
            mu, _ = top_spectrum(build_Q(m, sample_X(M, N, law, TrialSeed(args.seed, t))), 2, m.V)
            out.append(abs(mu[0] - th))
            edge.append(abs(mu[1] - lp))
        print(f"N={N}: p99 sqrt(N)|mu1-theta| = {np.percentile(out, 99) * math.sqrt(N):.3f}, "
              f"p99 N^(2/3)|mu2-lambda+| = {np.percentile(edge, 99) * N ** (2 / 3):.3f}")


if __name__ == "__main__":
    main()
