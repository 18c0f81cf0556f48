"""Write a synthetic daily price file (date,price) driven by a sparse long-lag ARCH.

Usage: python3 scripts/make_synthetic_prices.py out.csv [--n 3000] [--seed 7]
"""
import argparse
import csv
import datetime as dt

import numpy as np

from pqmle.empirics import simulate_arch


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--n", type=int, default=3000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--start", default="2010-01-04")
    args = ap.parse_args()

    alpha = np.zeros(60)
    alpha[[0, 1, 4, 21, 59]] = [0.15, 0.12, 0.1, 0.08, 0.06]
    r = simulate_arch(alpha, omega=0.5, n=args.n, seed=args.seed, mu=0.03) / 100
    prices = 100 * np.exp(np.concatenate([[0.0], np.cumsum(r)]))

    day = dt.date.fromisoformat(args.start)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "price"])
        for v in prices:
            while day.weekday() >= 5:
                day += dt.timedelta(days=1)
            w.writerow([day.isoformat(), f"{v:.6f}"])
            day += dt.timedelta(days=1)


if __name__ == "__main__":
    main()
