"""Command-line front end.

    nvcoop g2 SCENARIO [--simulate]      closed-form and regression g2
    nvcoop decay SCENARIO                intensity decay after a pulse, with fit
    nvcoop fit DATA.csv --model M        fit a two- or three-column CSV
    nvcoop qrng SCENARIO                 HBT simulation -> bits -> tests + entropy
    nvcoop entropy SCENARIO [--g2 CSV]   conditional min-entropy report
    nvcoop test BITS                     randomness tests on a packed bit file
    nvcoop blocks SCENARIO               block census of the Lindbladian
    nvcoop selfcheck                     quick internal consistency checks

Exit codes: 0 success, 1 invalid input, 2 numeric failure, 3 a randomness
test failed.  Output goes to --output, the scenario's [run] output, the
NVCOOP_OUTPUT environment variable, or ./nvcoop-out, in that order.
"""
from __future__ import annotations

import argparse
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import Scenario, load_scenario
from .curves import G2Curve, curve_csv
from .errors import NvCoopError, StructureError, WrongModelError
from .fitting import MODELS, extract_exponents, fit_curve
from .hbt import coincidence_histogram, clicks_to_bits, detect, read_bits, simulate_emission, von_neumann, write_bits
from .lindblad import partition_blocks
from .nvmodel import EmitterModel
from .photonstats import (
    decay_curve, g2_block_noninteracting, g2_closed_interacting, g2_closed_single, g2_exponents, g2_oracle,
    model_steady_state,
)
from .randomness import EntropyInputs, entropy_report, reference_csv, run_tests
from .svg import line_plot

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_TESTS = 0, 1, 2, 3
OUTPUT_ENV = "NVCOOP_OUTPUT"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# --- helpers ----------------------------------------------------------------------

def _outdir(args, scenario: Scenario | None = None) -> Path:
    d = args.output or (scenario.output if scenario else None) or os.environ.get(OUTPUT_ENV) or "nvcoop-out"
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _emit(args, text: str, csv: str) -> None:
    sys.stdout.write(csv if args.format == "csv" else text.rstrip("\n") + "\n")


def tau_grid(scenario: Scenario, rates: np.ndarray) -> np.ndarray:
    """Dense linear grid over the fast dynamics, log-spaced out to 20 slowest times."""
    rates = np.abs(np.real(rates))
    rates = rates[rates > 0]
    n = scenario.analysis.tau_points
    t_fast, t_slow = 1 / rates.max(), 1 / rates.min()
    tmax = scenario.analysis.tau_max or 20 * t_slow
    a = 20 * t_fast
    if a >= tmax / 2:
        return np.linspace(0.0, tmax, n)
    return np.concatenate([np.linspace(0.0, a, n // 2, endpoint=False), np.geomspace(a, tmax, n - n // 2)])


def closed_form_g2(model: EmitterModel, tau) -> G2Curve | None:
    """Model-appropriate closed form, or None when there is none."""
    uncoupled = model.coupling is None or model.coupling.is_zero()
    if model.kind == "single":
        return g2_closed_single(model.rates, tau, exact=True)
    if model.kind == "two-separate":
        if not uncoupled or model.meta.get("rates2", model.rates) != model.rates:
            return None
        one = g2_closed_single(model.rates, tau, exact=True)
        # independent identical emitters: g2 = (1 + g2_single) / 2
        return G2Curve(one.tau, 0.5 * (1 + one.values), "closed-independent", dict(one.meta))
    if uncoupled:
        return g2_block_noninteracting(model, tau, with_oracle=False)
    return g2_closed_interacting(model, tau, with_oracle=False)


def _fmt_rates(values) -> list[str]:
    return [f"{complex(v).real:.10e}{complex(v).imag:+.10e}j" for v in values]


def photon_flux(model: EmitterModel) -> float:
    rho = model_steady_state(model)
    return float(sum(np.trace(A.conj().T @ A @ rho).real for A in model.emission_operators()))


# --- commands ------------------------------------------------------------------------

def cmd_g2(args) -> int:
    sc = load_scenario(args.scenario)
    out = _outdir(args, sc)
    model = sc.model.build()
    exps = g2_exponents(model)
    tau = tau_grid(sc, exps)
    oracle = g2_oracle(model, tau)
    closed = closed_form_g2(model, tau)
    (out / "g2_oracle.csv").write_text(oracle.to_csv())
    lines = [f"scenario = {sc.name}", f"model = {model.kind}", f"g2_0_regression = {oracle.values[0]:.10e}",
             "regression_exponents = " + " ".join(_fmt_rates(exps))]
    series = [(tau, oracle.values, "regression")]
    if closed is not None:
        (out / "g2_closed.csv").write_text(closed.to_csv())
        gap = float(np.max(np.abs(closed.values - oracle.values)))
        lines += [f"closed_form = {closed.label}", f"g2_0_closed = {closed.values[0]:.10e}",
                  f"max_abs_closed_minus_regression = {gap:.6e}"]
        for key in ("lam1", "lam2", "exponents", "decay_constants"):
            if key in closed.meta:
                v = np.atleast_1d(closed.meta[key])
                lines.append(f"closed_{key} = " + " ".join(_fmt_rates(v)))
        if gap > 1e-6:
            print(f"warning: closed form differs from the regression curve by {gap:.3g}", file=sys.stderr)
        series.append((tau, closed.values, closed.label, True))
    else:
        lines.append("closed_form = none")
    if args.simulate:
        seed = sc.require_seed(args.seed)
        em = simulate_emission(model, sc.excitation, sc.analysis.duration, seed)
        clicks = detect(em, sc.splitter, sc.detector, seed, sc.analysis.duration)
        hist = coincidence_histogram(clicks, sc.analysis.bin_width, sc.analysis.max_delay)
        (out / "g2_hbt.csv").write_text(hist.to_csv())
        mid = hist.values[np.argmin(np.abs(hist.tau))]
        lines += [f"seed = {seed}", f"hbt_clicks = {len(clicks)}", f"hbt_g2_0 = {mid:.6f}"]
        keep = np.abs(hist.tau) <= tau.max()
        series.append((hist.tau[keep & (hist.tau >= 0)], hist.values[keep & (hist.tau >= 0)], "HBT histogram"))
    text = "\n".join(lines) + "\n"
    (out / "exponents.txt").write_text(text)
    line_plot(out / "g2.svg", series, "tau (ns)", "g2(tau)", f"g2: {sc.name}", version=__version__)
    _emit(args, text, oracle.to_csv())
    return EXIT_OK


def cmd_decay(args) -> int:
    sc = load_scenario(args.scenario)
    out = _outdir(args, sc)
    model = sc.model.build()
    t = np.linspace(0.0, sc.analysis.decay_tmax, sc.analysis.decay_points)
    curve = decay_curve(model, t, sc.analysis.decay_state)
    (out / "decay.csv").write_text(curve.to_csv())
    fit = fit_curve(sc.analysis.decay_model, t, curve.intensity)
    (out / "decay_fit.txt").write_text(fit.to_text())
    yfit = MODELS[fit.model].func(t, *fit.params.values())
    line_plot(out / "decay.svg", [(t, curve.intensity, "flux"), (t, yfit, f"{fit.model} fit", True)],
              "t (ns)", "photon flux (1/ns)", f"decay: {sc.name}", version=__version__)
    _emit(args, fit.to_text(), curve.to_csv())
    return EXIT_OK


def _read_csv(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    rows = []
    for ln in lines:
        if not ln.strip() or ln.startswith("#"):
            continue
        try:
            rows.append([float(v) for v in ln.split(",")])
        except ValueError:
            if rows:
                raise NvCoopErrorInput(f"{path}: non-numeric row {ln!r}") from None
            continue  # header
    data = np.asarray(rows)
    if data.ndim != 2 or data.shape[1] not in (2, 3):
        raise NvCoopErrorInput(f"{path}: expected 2 or 3 numeric columns (x, y[, weight])")
    return data


def cmd_fit(args) -> int:
    data = _read_csv(args.data)
    out = _outdir(args)
    w = data[:, 2] if data.shape[1] == 3 else None
    fit = fit_curve(args.model, data[:, 0], data[:, 1], weight=w)
    yfit = MODELS[fit.model].func(data[:, 0], *fit.params.values())
    (out / "fit.txt").write_text(fit.to_text())
    csv = curve_csv(("x", "y", "model"), data[:, 0], data[:, 1], yfit)
    (out / "fit.csv").write_text(csv)
    _emit(args, fit.to_text(), csv)
    return EXIT_OK


def _entropy_inputs(sc: Scenario, model: EmitterModel, photon_rate: float, g2: G2Curve | None = None) -> EntropyInputs:
    if g2 is None:
        tmax = max(sc.detector.dead_A, sc.detector.dead_B, 1.0)
        g2 = g2_oracle(model, np.linspace(0.0, tmax, 4001))
    rate = sc.analysis.photon_rate or photon_rate
    I_in = sc.analysis.I_in if sc.analysis.I_in is not None else rate
    return EntropyInputs(g2, sc.detector, sc.splitter, I_in=I_in, photon_rate=rate)


def cmd_qrng(args) -> int:
    sc = load_scenario(args.scenario)
    seed = sc.require_seed(args.seed)
    out = _outdir(args, sc)
    model = sc.model.build()
    T = sc.analysis.duration
    em = simulate_emission(model, sc.excitation, T, seed)
    clicks = detect(em, sc.splitter, sc.detector, seed, T)
    raw = clicks_to_bits(clicks)
    bits = von_neumann(raw)
    write_bits(out / "bits_raw.bin", raw)
    write_bits(out / "bits.bin", bits)
    hist = coincidence_histogram(clicks, sc.analysis.bin_width, sc.analysis.max_delay)
    (out / "g2_hbt.csv").write_text(hist.to_csv())
    report = run_tests(bits, sc.analysis.tests)
    (out / "tests.csv").write_text(report.to_csv())
    ent = entropy_report(_entropy_inputs(sc, model, em.size / T))
    (out / "entropy.csv").write_text(ent.to_csv())
    (out / "entropy_reference.csv").write_text(reference_csv())
    summary = (f"seed = {seed}\nduration_ns = {T:.6g}\nemitted = {em.size}\nclicks = {len(clicks)}\n"
               f"raw_bits = {len(raw)}\ndebiased_bits = {len(bits)}\n"
               f"bit_rate_hz = {len(bits) / (T * 1e-9):.6g}\n\n{report.to_text()}\n\n{ent.to_text()}\n")
    (out / "qrng_summary.txt").write_text(summary)
    _emit(args, summary, report.to_csv())
    return EXIT_OK if report.all_passed else EXIT_TESTS


def cmd_entropy(args) -> int:
    sc = load_scenario(args.scenario)
    out = _outdir(args, sc)
    model = sc.model.build()
    g2 = None
    if args.g2:
        d = _read_csv(args.g2)
        g2 = G2Curve(d[:, 0], d[:, 1], "file")
    ent = entropy_report(_entropy_inputs(sc, model, photon_flux(model), g2))
    (out / "entropy.csv").write_text(ent.to_csv())
    ref = reference_csv()
    (out / "entropy_reference.csv").write_text(ref)
    text = ent.to_text() + "\n\nreported vs recomputed (flag 1 = discrepancy)\n" + ref
    _emit(args, text, ent.to_csv())
    return EXIT_OK


def cmd_test(args) -> int:
    bits = read_bits(args.bits)
    tests = args.tests.split(",") if args.tests else None
    report = run_tests(bits, tests)
    if args.output:
        (_outdir(args) / "tests.csv").write_text(report.to_csv())
    _emit(args, report.to_text(), report.to_csv())
    return EXIT_OK if report.all_passed else EXIT_TESTS


def census_string(census: dict) -> str:
    return " ".join(f"{k}:{v}" for k, v in sorted(census.items()))


def cmd_blocks(args) -> int:
    sc = load_scenario(args.scenario)
    model = sc.model.build()
    census = partition_blocks(model.lindbladian).census()
    csv = "block_size,count\n" + "".join(f"{k},{v}\n" for k, v in sorted(census.items()))
    if args.output or sc.output or os.environ.get(OUTPUT_ENV):
        (_outdir(args, sc) / "blocks.csv").write_text(csv)
    _emit(args, census_string(census), csv)
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    from .nvmodel import DipoleCoupling, RateSet, build_single_nv, build_two_nv, solve_single_hole, single_hole_matrix
    from .randomness import min_entropy

    rates = RateSet(r_eg=0.5, r_ge=0.06, r_ei=0.01, r_ig=0.02)
    tau = np.linspace(0, 200, 101)
    single = build_single_nv(rates)
    checks = []
    gap = np.max(np.abs(g2_closed_single(rates, tau, exact=True).values - g2_oracle(single, tau).values))
    checks.append(("single g2 closed form vs regression", gap <= 1e-10, f"{gap:.2e}"))
    c1 = census_string(partition_blocks(build_two_nv(rates).lindbladian).census())
    checks.append(("uncoupled census", c1 == "1:6 2:6 8:6 15:1", c1))
    c2 = census_string(partition_blocks(build_two_nv(rates, DipoleCoupling(0.05, 0.031, 0.017)).lindbladian).census())
    checks.append(("coupled census", c2 == "1:6 2:18 4:6 15:1", c2))
    g0 = g2_oracle(build_two_nv(rates, collective=False), [0.0]).values[0]
    checks.append(("two separate emitters g2(0) = 1/2", abs(g0 - 0.5) <= 1e-9, f"{g0:.12f}"))
    h = min_entropy(0.6, 0.2)
    checks.append(("min-entropy (0.6, 0.2)", abs(h - 0.736966) <= 1e-6, f"{h:.6f}"))
    sol = solve_single_hole(0.3, 0.2, 0.1 + 0.05j, 0.4)
    bf = np.linalg.eigvalsh(single_hole_matrix(0.3, 0.2, 0.1 + 0.05j, 0.4))
    d = float(np.max(np.abs(np.sort(sol.energies) - bf)))
    checks.append(("single-hole spectrum", d <= 1e-12, f"{d:.2e}"))
    ok = all(c[1] for c in checks)
    text = "\n".join(f"{'pass' if c[1] else 'FAIL'}  {c[0]}  ({c[2]})" for c in checks)
    csv = "check,passed,value\n" + "".join(f"{c[0]},{int(c[1])},{c[2]}\n" for c in checks)
    _emit(args, text, csv)
    return EXIT_OK if ok else EXIT_NUMERIC


class NvCoopErrorInput(NvCoopError, ValueError):
    """Malformed command-line input file."""


# --- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "csv"), default="text")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--output", default=None, help="output directory")

    p = _Parser(prog="nvcoop", description="Photon statistics and QRNG toolkit for one or two NV centres.")
    p.add_argument("--version", action="version", version=f"nvcoop {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("g2", parents=[common], help="closed-form and regression g2")
    s.add_argument("scenario")
    s.add_argument("--simulate", action="store_true", help="also run the HBT simulation (needs a seed)")
    s.set_defaults(func=cmd_g2)

    s = sub.add_parser("decay", parents=[common], help="intensity decay after a pulse")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_decay)

    s = sub.add_parser("fit", parents=[common], help="fit a model to x,y[,weight] CSV data")
    s.add_argument("data")
    s.add_argument("--model", choices=sorted(MODELS), required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("qrng", parents=[common], help="simulate the random-number pipeline")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_qrng)

    s = sub.add_parser("entropy", parents=[common], help="conditional min-entropy report")
    s.add_argument("scenario")
    s.add_argument("--g2", default=None, help="CSV of tau,g2 to use instead of the model curve")
    s.set_defaults(func=cmd_entropy)

    s = sub.add_parser("test", parents=[common], help="randomness tests on a packed bit file")
    s.add_argument("bits")
    s.add_argument("--tests", default=None, help="comma-separated subset")
    s.set_defaults(func=cmd_test)

    s = sub.add_parser("blocks", parents=[common], help="block census of the Lindbladian")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_blocks)

    s = sub.add_parser("selfcheck", parents=[common], help="internal consistency checks")
    s.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (WrongModelError, StructureError, ArithmeticError) as exc:
        print(f"nvcoop: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (NvCoopError, ValueError, OSError) as exc:
        print(f"nvcoop: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
