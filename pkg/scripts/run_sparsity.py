"""Share of exact zeros for a truly-zero ARCH loading as n grows (SCAD, lambda = c * n^(-1/3)).

Example: python3 scripts/run_sparsity.py --n 500 1000 2000 4000 --replications 500
"""
import argparse

import numpy as np

from pqmle import Family, PenaltySpec, TrueParams, maximize_penalized, simulate_archx


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[500, 1000, 2000])
    ap.add_argument("--replications", type=int, default=500)
    ap.add_argument("--c", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=606)
    args = ap.parse_args()

    truth = TrueParams(0.0, 0.7, [0.3, 0.0])
    for n in args.n:
        spec = PenaltySpec(Family.SCAD, args.c * n ** (-1 / 3))
        zeros, est = [], []
        for rep in range(args.replications):
            rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(n, rep)))
            fit = maximize_penalized(simulate_archx(truth, n, seed=rng), spec)
            zeros.append(fit.theta[3] == 0.0)
            est.append(fit.theta[2])
        est = np.asarray(est)
        print(f"n={n:6d} lambda={spec.lam:.4f} P(alpha2=0)={100 * np.mean(zeros):5.1f}% "
              f"sqrt(n)*sd(alpha1)={np.sqrt(n) * est.std():.3f}")


if __name__ == "__main__":
    main()
