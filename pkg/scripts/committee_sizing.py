#!/usr/bin/env python3
"""Print autorecovery failure probabilities and Chernoff committee sizes."""

import sys

from dualchain.analysis import FailureModel, committee_size_bound, monte_carlo_af, pr_af_generating_function


def main() -> int:
    print("N    M   cs kappa theta_l  Pr(AF) exact          Monte Carlo (1e5)")
    for n, m, cs, kappa, th in [(60, 20, 6, 1, 2), (200, 50, 17, 1, 6), (200, 60, 17, 2, 6), (1000, 250, 32, 3, 11)]:
        model = FailureModel(n, m, cs, kappa, th)
        exact = float(pr_af_generating_function(model))
        est, se = monte_carlo_af(model, 100_000, seed=1)
        print(f"{n:<4} {m:<3} {cs:<3} {kappa:<5} {th:<7}  {exact:<20.6g}  {est:.6g} ± {se:.2g}")
    print()
    print("p     F       cs_min (gamma = 1/3)")
    for p in (0.25, 0.30):
        for f in (1e-10, 1e-5, 1e-3):
            print(f"{p:<5} {f:<7g} {committee_size_bound(p, 1 / 3, f)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
