"""False-positive rate and p-value uniformity of the randomness tests on
ideal bits.

    python3 scripts/randomness_false_positives.py [--sequences 1000] [--bits 100000]
"""
import argparse

import numpy as np

from nvcoop.randomness import ALPHA, run_tests


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sequences", type=int, default=1000)
    ap.add_argument("--bits", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    pvals = {}
    for _ in range(args.sequences):
        for r in run_tests(rng.integers(0, 2, args.bits, dtype=np.uint8)).ran:
            pvals.setdefault(r.name, []).append(r.p_value)
    print(f"{'test':26s} fail rate   p-value deciles (expected {args.sequences // 10} each)")
    for name, p in pvals.items():
        p = np.asarray(p)
        hist = np.histogram(p, bins=10, range=(0, 1))[0]
        print(f"{name:26s} {np.mean(p < ALPHA):.4f}      {' '.join(f'{h:4d}' for h in hist)}")


if __name__ == "__main__":
    main()
