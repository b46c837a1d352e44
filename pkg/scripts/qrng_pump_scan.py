"""Run the QRNG pipeline at several pump rates and report which tests fail.

At strong pumping the detector dead time leaves too few opportunities for
the same detector to fire twice in a row, so the raw bits anticorrelate
and some tests fail even after von Neumann debiasing.

    python3 scripts/qrng_pump_scan.py [--duration 6e10]
"""
import argparse
import time
from dataclasses import replace

from nvcoop.config import load_scenario
from nvcoop.hbt import CW, clicks_to_bits, detect, simulate_emission, von_neumann
from nvcoop.randomness import run_tests


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--duration", type=float, default=6e10, help="ns of simulated time per point")
    ap.add_argument("--pumps", default="2e-5,1e-4,3e-4")
    args = ap.parse_args()
    sc = load_scenario("qrng")
    for pump in (float(p) for p in args.pumps.split(",")):
        t0 = time.perf_counter()
        rates = replace(sc.model.rates, r_eg=pump, r_ig=10 * pump)
        model = replace(sc.model, rates=rates).build()
        em = simulate_emission(model, CW(), args.duration, sc.seed)
        clicks = detect(em, sc.splitter, sc.detector, sc.seed, args.duration)
        bits = von_neumann(clicks_to_bits(clicks))
        rep = run_tests(bits)
        failed = [r.name for r in rep.ran if not r.passed]
        print(f"r_eg={pump:.1e}  emitted={em.size}  clicks={len(clicks)}  bits={len(bits)}  "
              f"failed={failed or 'none'}  ({time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    main()
