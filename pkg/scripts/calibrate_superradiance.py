"""Choose the radiative rate of the coupled pair so the bright-state decay
time hits a target, then report g2(0) and the fitted g2 exponents.

    python3 scripts/calibrate_superradiance.py [--target 2.05]
"""
import argparse
import warnings
from dataclasses import replace

import numpy as np
from scipy.optimize import brentq

from nvcoop.cli import tau_grid
from nvcoop.config import load_scenario
from nvcoop.fitting import MergedExponentWarning, extract_exponents, fit_curve
from nvcoop.photonstats import decay_curve, g2_exponents, g2_oracle


def decay_time(section, r_ge, t):
    model = replace(section, rates=replace(section.rates, r_ge=r_ge)).build()
    return fit_curve("exp", t, decay_curve(model, t, "symmetric").intensity)["t1"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--target", type=float, default=2.05, help="bright-state decay time (ns)")
    args = ap.parse_args()
    sc = load_scenario("two-coupled")
    t = np.linspace(0, 10 * args.target, 400)
    r_ge = brentq(lambda r: decay_time(sc.model, r, t) - args.target, 0.01, 5.0, xtol=1e-14)
    print(f"r_ge = {r_ge:.17g}  (1/(2 r_ge) = {1 / (2 * r_ge):.6f} ns)")
    model = replace(sc.model, rates=replace(sc.model.rates, r_ge=r_ge)).build()
    curve = g2_oracle(model, tau_grid(sc, g2_exponents(model)))
    print(f"g2(0) = {curve.values[0]:.6f}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MergedExponentWarning)
        rep = extract_exponents(curve)
    for k, fit in sorted(rep.fits.items()):
        print(f"k={k}  aic={fit.aic:.2f}  taus={np.round(fit.taus, 4).tolist()}  amps={np.round(fit.amplitudes, 4).tolist()}")
    print(f"preferred k = {rep.preferred}")


if __name__ == "__main__":
    main()
