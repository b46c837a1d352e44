"""Statistical randomness tests and a conditional min-entropy model.

The tests follow the NIST SP800-22 definitions (monobit, block frequency,
runs, longest run of ones, cumulative sums, serial, approximate entropy,
discrete Fourier transform).  A test passes when its p-value exceeds 0.01.

The entropy part estimates H_inf(X|Y) of the bit stream produced by a
beam splitter and two dead-time limited detectors, optionally corrected
for uncorrelated background events.
"""
from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import erfc, gammaincc
from scipy.stats import norm

from .curves import G2Curve
from .errors import DomainError, ValidationError
from .hbt import BitSequence, DetectorSpec, SplitterSpec

ALPHA = 0.01


class FidelityWarning(UserWarning):
    """A literal formula left its domain and the value was clamped."""


# --- reports --------------------------------------------------------------------

@dataclass(frozen=True)
class TestResult:
    name: str
    statistic: float
    p_value: float
    n: int
    skipped: str = ""  # reason; empty when the test ran

    @property
    def passed(self) -> bool:
        return not self.skipped and self.p_value > ALPHA


@dataclass
class TestReport:
    results: list[TestResult]
    n: int

    def __iter__(self):
        return iter(self.results)

    def __getitem__(self, name: str) -> TestResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [r.name for r in self.results]

    @property
    def ran(self) -> list[TestResult]:
        return [r for r in self.results if not r.skipped]

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.ran)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("test,n,statistic,p_value,passed,skipped\n")
        for r in self.results:
            if r.skipped:
                buf.write(f"{r.name},{r.n},,,,{r.skipped}\n")
            else:
                buf.write(f"{r.name},{r.n},{r.statistic:.10e},{r.p_value:.10e},{int(r.passed)},\n")
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"sequence length {self.n}"]
        for r in self.results:
            if r.skipped:
                lines.append(f"  {r.name:<26} SKIPPED  {r.skipped}")
            else:
                flag = "pass" if r.passed else "FAIL"
                lines.append(f"  {r.name:<26} p = {r.p_value:.6f}  {flag}")
        return "\n".join(lines)


# --- individual tests -------------------------------------------------------------

def _pm(bits: np.ndarray) -> np.ndarray:
    return 2 * bits.astype(np.int64) - 1


def monobit(bits: np.ndarray) -> tuple[float, float]:
    n = bits.size
    s_obs = abs(int(_pm(bits).sum())) / math.sqrt(n)
    return s_obs, float(erfc(s_obs / math.sqrt(2)))


def block_size(n: int) -> int:
    return min(128, max(20, n // 10))


def block_frequency(bits: np.ndarray, M: int | None = None) -> tuple[float, float]:
    M = block_size(bits.size) if M is None else M
    N = bits.size // M
    if N < 1:
        raise InsufficientLength(f"needs at least one block of {M} bits")
    pi = bits[: N * M].reshape(N, M).mean(axis=1)
    chi2 = 4.0 * M * float(np.sum((pi - 0.5) ** 2))
    return chi2, float(gammaincc(N / 2.0, chi2 / 2.0))


def runs(bits: np.ndarray) -> tuple[float, float]:
    n = bits.size
    pi = bits.mean()
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        # frequency prerequisite failed; the runs statistic is meaningless
        return float("nan"), 0.0
    v_obs = 1 + int(np.count_nonzero(bits[1:] != bits[:-1]))
    num = abs(v_obs - 2.0 * n * pi * (1 - pi))
    den = 2.0 * math.sqrt(2.0 * n) * pi * (1 - pi)
    return float(v_obs), float(erfc(num / den))


# (M, upper/lower class bounds, class probabilities) from SP800-22 section 3.4
LONGEST_RUN_TABLES = {
    8: (1, 4, (0.2148, 0.3672, 0.2305, 0.1875)),
    128: (4, 9, (0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124)),
    10000: (10, 16, (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727)),
}


def longest_run_probabilities(M: int, lo: int, hi: int) -> np.ndarray:
    """Exact class probabilities for the longest run of ones in M fair bits.

    Classes are <= lo, lo+1, ..., hi-1, >= hi.  Computed by counting
    sequences whose longest run is below each threshold.
    """
    def p_below(r):  # P(longest run < r)
        # f[j] = probability of no run >= r and current trailing run j
        f = np.zeros(r)
        f[0] = 1.0
        for _ in range(M):
            g = np.zeros(r)
            g[0] = 0.5 * f.sum()
            g[1:] = 0.5 * f[:-1]
            f = g
        return f.sum()

    cdf = [p_below(k + 1) for k in range(lo, hi)]
    probs = [cdf[0]] + [cdf[i] - cdf[i - 1] for i in range(1, len(cdf))] + [1.0 - cdf[-1]]
    return np.asarray(probs)


def longest_run(bits: np.ndarray) -> tuple[float, float]:
    n = bits.size
    if n >= 750_000:
        M = 10000
    elif n >= 6272:
        M = 128
    else:
        M = 8
    lo, hi, probs = LONGEST_RUN_TABLES[M]
    N = n // M
    blocks = bits[: N * M].reshape(N, M).astype(np.int64)
    # longest run per block: cumulative run length resets at zeros
    run = np.zeros(N, dtype=np.int64)
    best = np.zeros(N, dtype=np.int64)
    for j in range(M):
        run = (run + 1) * blocks[:, j]
        np.maximum(best, run, out=best)
    counts = np.bincount(np.clip(best, lo, hi) - lo, minlength=hi - lo + 1)
    expected = N * np.asarray(probs)
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    K = len(probs) - 1
    return chi2, float(gammaincc(K / 2.0, chi2 / 2.0))


def _cusum_p(z: float, n: int) -> float:
    if z == 0:
        return 1.0
    sq = math.sqrt(n)
    k1 = np.arange(math.floor((-n / z + 1) / 4), math.floor((n / z - 1) / 4) + 1)
    k2 = np.arange(math.floor((-n / z - 3) / 4), math.floor((n / z - 1) / 4) + 1)
    s1 = np.sum(norm.cdf((4 * k1 + 1) * z / sq) - norm.cdf((4 * k1 - 1) * z / sq))
    s2 = np.sum(norm.cdf((4 * k2 + 3) * z / sq) - norm.cdf((4 * k2 + 1) * z / sq))
    return float(min(1.0, max(0.0, 1.0 - s1 + s2)))


def cumulative_sums(bits: np.ndarray) -> tuple[tuple[float, float], tuple[float, float]]:
    """(z, p) for the forward and the backward walk."""
    x = _pm(bits)
    n = x.size
    zf = float(np.max(np.abs(np.cumsum(x))))
    zb = float(np.max(np.abs(np.cumsum(x[::-1]))))
    return (zf, _cusum_p(zf, n)), (zb, _cusum_p(zb, n))


def _pattern_counts(bits: np.ndarray, m: int) -> np.ndarray:
    """Counts of all overlapping m-bit patterns, wrapping around the end."""
    if m == 0:
        return np.array([bits.size])
    ext = np.concatenate([bits, bits[: m - 1]]).astype(np.int64)
    n = bits.size
    code = np.zeros(n, dtype=np.int64)
    for j in range(m):
        code = (code << 1) | ext[j:j + n]
    return np.bincount(code, minlength=1 << m)


def serial_block(n: int) -> int:
    return max(2, min(8, int(math.floor(math.log2(n))) - 3))


def serial(bits: np.ndarray, m: int | None = None) -> tuple[tuple[float, float], tuple[float, float]]:
    n = bits.size
    m = serial_block(n) if m is None else m

    def psi2(k):
        if k <= 0:
            return 0.0
        c = _pattern_counts(bits, k).astype(float)
        return (2.0**k / n) * float(np.sum(c * c)) - n

    p0, p1, p2 = psi2(m), psi2(m - 1), psi2(m - 2)
    d1 = p0 - p1
    d2 = p0 - 2 * p1 + p2
    return (d1, float(gammaincc(2.0 ** (m - 2), d1 / 2))), (d2, float(gammaincc(2.0 ** (m - 3), d2 / 2)))


def apen_block(n: int) -> int:
    return max(1, min(10, int(math.floor(math.log2(n))) - 6))


def approximate_entropy(bits: np.ndarray, m: int | None = None) -> tuple[float, float]:
    n = bits.size
    m = apen_block(n) if m is None else m

    def phi(k):
        c = _pattern_counts(bits, k) / n
        c = c[c > 0]
        return float(np.sum(c * np.log(c)))

    apen = phi(m) - phi(m + 1)
    chi2 = 2.0 * n * (math.log(2) - apen)
    return chi2, float(gammaincc(2.0 ** (m - 1), chi2 / 2))


def dft(bits: np.ndarray) -> tuple[float, float]:
    x = _pm(bits).astype(float)
    n = x.size
    mod = np.abs(np.fft.rfft(x))[: n // 2]
    T = math.sqrt(math.log(1 / 0.05) * n)
    n0 = 0.95 * n / 2
    n1 = float(np.count_nonzero(mod < T))
    d = (n1 - n0) / math.sqrt(n * 0.95 * 0.05 / 4)
    return d, float(erfc(abs(d) / math.sqrt(2)))


class InsufficientLength(Exception):
    pass


# name -> (minimum length, callable returning list of (row name, stat, p))
def _single(name, fn):
    return lambda b: [(name, *fn(b))]


def _pair(name, fn, suffixes):
    def run(b):
        r1, r2 = fn(b)
        return [(f"{name}_{suffixes[0]}", *r1), (f"{name}_{suffixes[1]}", *r2)]
    return run


TESTS: dict[str, tuple[int, Callable]] = {
    "monobit": (100, _single("monobit", monobit)),
    "block_frequency": (100, _single("block_frequency", block_frequency)),
    "runs": (100, _single("runs", runs)),
    "longest_run": (128, _single("longest_run", longest_run)),
    "cumulative_sums": (100, _pair("cumulative_sums", cumulative_sums, ("forward", "backward"))),
    "serial": (128, _pair("serial", serial, ("1", "2"))),
    "approximate_entropy": (128, _single("approximate_entropy", approximate_entropy)),
    "dft": (1000, _single("dft", dft)),
}

_ROWS = {
    "cumulative_sums": ("cumulative_sums_forward", "cumulative_sums_backward"),
    "serial": ("serial_1", "serial_2"),
}


def run_tests(bits, tests=None) -> TestReport:
    """Run the selected tests (all by default) on a bit sequence.

    Tests whose minimum length exceeds the sequence are reported as
    skipped with a reason instead of raising.
    """
    b = bits.bits if isinstance(bits, BitSequence) else np.asarray(bits, dtype=np.uint8)
    if b.ndim != 1 or (b.size and b.max() > 1):
        raise ValidationError("expected a 1-d sequence of 0/1 bits")
    names = list(TESTS) if tests is None else list(tests)
    unknown = [t for t in names if t not in TESTS]
    if unknown:
        raise ValidationError(f"unknown tests {unknown}; choose from {list(TESTS)}")
    n = int(b.size)
    out = []
    for name in names:
        min_n, fn = TESTS[name]
        rows = _ROWS.get(name, (name,))
        if n < min_n:
            out += [TestResult(r, float("nan"), float("nan"), n, f"needs n >= {min_n}") for r in rows]
            continue
        try:
            for row, stat, p in fn(b):
                out.append(TestResult(row, float(stat), float(min(1.0, max(0.0, p))), n))
        except InsufficientLength as exc:
            out += [TestResult(r, float("nan"), float("nan"), n, str(exc)) for r in rows]
    return TestReport(out, n)


# --- conditional min-entropy ----------------------------------------------------------

@dataclass(frozen=True)
class EntropyInputs:
    g2: G2Curve | Callable  # sampled curve or callable g2(tau)
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    splitter: SplitterSpec = field(default_factory=SplitterSpec)
    I_in: float = 0.0
    p_e: float | None = None  # background probability; derived from g2(0) when None
    photon_rate: float = 1.0  # ns^-1, turns the g2 integrals into occupancies

    def __post_init__(self):
        if self.I_in < 0:
            raise ValidationError("I_in must be >= 0")
        if self.p_e is not None and not 0 <= self.p_e <= 1:
            raise ValidationError("p_e must lie in [0, 1]")
        if not self.photon_rate > 0:
            raise ValidationError("photon_rate must be > 0")

    def arm_fraction(self, arm: str) -> float:
        """Splitter fraction reaching detector ``arm``."""
        s = self.splitter
        return s.T if s.transmitted_arm == arm else s.R

    def g2_at(self, tau: float) -> float:
        if callable(self.g2):
            return float(self.g2(tau))
        return float(np.interp(tau, self.g2.tau, self.g2.values))


def g2_integral(g2, upper: float) -> float:
    """int_0^upper g2 dtau: trapezoid on a sampled curve, quad on a callable."""
    if upper < 0:
        raise DomainError("integration limit must be >= 0")
    if upper == 0:
        return 0.0
    if callable(g2):
        val, _ = integrate.quad(lambda t: float(g2(t)), 0.0, upper, limit=200)
        return float(val)
    tau, val = np.asarray(g2.tau, float), np.asarray(g2.values, float)
    order = np.argsort(tau)
    tau, val = tau[order], val[order]
    if tau[0] > 0 or tau[-1] < upper:
        raise DomainError(f"g2 curve covers [{tau[0]}, {tau[-1]}] ns, need [0, {upper}] ns")
    inside = tau < upper
    t = np.append(tau[inside], upper)
    v = np.append(val[inside], np.interp(upper, tau, val))
    return float(integrate.trapezoid(v, t))


def _occupancy(x: float, what: str) -> float:
    if x > 1:
        warnings.warn(f"{what} = {x:.4g} exceeds 1; clamped", FidelityWarning, stacklevel=3)
        return 1.0
    return x


@dataclass(frozen=True)
class ConditionalProbs:
    pAA: float
    pBA: float
    pA: float
    pAB: float
    r_A: float
    r_B: float

    @property
    def pB(self) -> float:
        return 1.0 - self.pA


def conditional_probs(inp: EntropyInputs) -> ConditionalProbs:
    """p(A|A), p(B|A), p(A) and p(AB) for the two-detector chain."""
    det = inp.detector
    a = det.eta_A * inp.arm_fraction("A")
    b = det.eta_B * inp.arm_fraction("B")
    I_A = _occupancy(inp.photon_rate * g2_integral(inp.g2, det.dead_A), "dead-time occupancy A")
    I_Bh = _occupancy(inp.photon_rate * g2_integral(inp.g2, det.dead_B / 2), "half dead-time occupancy B")
    I_B = _occupancy(inp.photon_rate * g2_integral(inp.g2, det.dead_B), "dead-time occupancy B")
    pAA = a * (1.0 - I_A)
    pBA = b * (1.0 - b * I_Bh**2)
    r_A = a - a * a * inp.I_in * I_A / 4.0
    r_B = b - b * b * inp.I_in * I_B / 4.0
    if r_A < 0 or r_B < 0:
        warnings.warn("negative click rate from the dead-time correction; clamped to 0", FidelityWarning, stacklevel=2)
        r_A, r_B = max(r_A, 0.0), max(r_B, 0.0)
    if r_A + r_B <= 0:
        raise DomainError("both click rates vanish")
    pA = r_A / (r_A + r_B)
    return ConditionalProbs(pAA, pBA, pA, pA * pBA, r_A, r_B)


def _f(pA: float, pAB: float) -> float:
    if not (0 <= pAB <= pA <= 1):
        raise DomainError(f"need 0 <= p(AB) <= p(A) <= 1, got p(A)={pA}, p(AB)={pAB}")
    return max(pA, 1 - pA, 2 * pAB, 1 - 2 * pAB)


def min_entropy(pA: float, pAB: float) -> float:
    """H_inf = -log2 max{p(A), 1 - p(A), 2p(AB), 1 - 2p(AB)}."""
    f = _f(pA, pAB)
    if f <= 0:
        raise DomainError("log argument must be > 0")
    return float(-math.log2(f)) + 0.0


def background_probability(g2_zero: float) -> float:
    """p_e = 1 - sqrt(1 - g2(0)); sqrt(1 - g2(0)) is the single-photon fraction."""
    if not 0 <= g2_zero <= 1:
        raise DomainError(f"g2(0) must lie in [0, 1], got {g2_zero}")
    return 1.0 - math.sqrt(1.0 - g2_zero)


def min_entropy_with_pe(pA: float, pAB: float, p_e: float) -> float:
    if not 0 <= p_e <= 1:
        raise DomainError("p_e must lie in [0, 1]")
    arg = p_e + (1 - p_e) * _f(pA, pAB)
    return float(-math.log2(arg)) + 0.0


def min_entropy_background(pA: float, pAB: float, g2_zero: float) -> float:
    """H_inf with a fraction p_e = 1 - sqrt(1 - g2(0)) of background events."""
    return min_entropy_with_pe(pA, pAB, background_probability(g2_zero))


@dataclass(frozen=True)
class EntropyReport:
    probs: ConditionalProbs
    g2_zero: float
    p_e: float
    h_base: float
    h_background: float

    def __post_init__(self):
        p = self.probs
        vals = (p.pA, p.pB, p.pAA, p.pBA, p.pAB)
        if not all(-1e-15 <= v <= 1 + 1e-15 for v in vals):
            raise DomainError(f"probability outside [0, 1]: {vals}")

    def rows(self) -> list[tuple[str, float]]:
        p = self.probs
        return [
            ("p_A", p.pA), ("p_B", p.pB), ("p_A_given_A", p.pAA), ("p_B_given_A", p.pBA),
            ("p_AB", p.pAB), ("g2_zero", self.g2_zero), ("p_e", self.p_e),
            ("H_min", self.h_base), ("H_min_background", self.h_background),
        ]

    def to_csv(self) -> str:
        return "quantity,value\n" + "".join(f"{k},{v:.12e}\n" for k, v in self.rows())

    def to_text(self) -> str:
        return "\n".join(f"{k:<18} {v:.6f}" for k, v in self.rows())


def entropy_report(inp: EntropyInputs) -> EntropyReport:
    probs = conditional_probs(inp)
    g0 = inp.g2_at(0.0)
    if inp.p_e is not None:
        p_e = inp.p_e
    else:
        p_e = background_probability(min(max(g0, 0.0), 1.0))
    return EntropyReport(probs, g0, p_e, min_entropy(probs.pA, probs.pAB), min_entropy_with_pe(probs.pA, probs.pAB, p_e))


# Reported p(A) and H_inf for four emitters; inputs behind them are incomplete
REFERENCE_PA = (0.6097, 0.6098, 0.6095, 0.7098)
REFERENCE_H = (0.75126, 0.75129, 0.751201, 0.77081)
# reported background correction for the last emitter: g2(0), p_e and H_inf
REFERENCE_BACKGROUND = {"g2_zero": 0.8, "p_e": 0.2, "H": 0.1}


def reference_comparison(tol: float = 1e-4) -> list[dict]:
    """Recompute -log2 p(A) for the reported p(A) values and flag mismatches.

    With p(A) the largest of the four candidates, H_inf = -log2 p(A); the
    reported H_inf values do not satisfy this, so every row is flagged.
    """
    rows = []
    for k, (pA, h_rep) in enumerate(zip(REFERENCE_PA, REFERENCE_H), start=1):
        h = -math.log2(pA)
        rows.append({
            "emitter": f"P{k}", "p_A": pA, "H_reported": h_rep, "H_recomputed": h,
            "discrepancy": abs(h - h_rep) > tol,
        })
    return rows


def background_reference(tol: float = 1e-4) -> dict:
    """Recompute the background-corrected H_inf for the last reported emitter.

    p_e follows from g2(0); the largest candidate probability is p(A).
    """
    ref = REFERENCE_BACKGROUND
    pA = REFERENCE_PA[-1]
    p_e = background_probability(ref["g2_zero"])
    h = float(-math.log2(p_e + (1 - p_e) * pA))
    return {
        "emitter": f"P{len(REFERENCE_PA)}-background", "p_A": pA, "p_e_reported": ref["p_e"], "p_e": p_e,
        "H_reported": ref["H"], "H_recomputed": h,
        "discrepancy": abs(h - ref["H"]) > tol or abs(p_e - ref["p_e"]) > tol,
    }


def reference_csv() -> str:
    buf = io.StringIO()
    buf.write("emitter,p_A,H_reported,H_recomputed,discrepancy\n")
    for r in reference_comparison():
        buf.write(f"{r['emitter']},{r['p_A']:.4f},{r['H_reported']:.6f},{r['H_recomputed']:.6f},{int(r['discrepancy'])}\n")
    b = background_reference()
    buf.write(f"{b['emitter']},{b['p_A']:.4f},{b['H_reported']:.6f},{b['H_recomputed']:.6f},{int(b['discrepancy'])}\n")
    return buf.getvalue()
