import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nvcoop.curves import G2Curve
from nvcoop.errors import DomainError, ValidationError
from nvcoop.hbt import BitSequence, DetectorSpec, SplitterSpec
from nvcoop import randomness as R


def bits(s):
    return np.array([int(c) for c in s], dtype=np.uint8)


# worked examples from the SP800-22 test descriptions
def test_monobit_worked_example():
    assert R.monobit(bits("1011010101"))[1] == pytest.approx(0.527089, abs=1e-6)


def test_block_frequency_worked_example():
    assert R.block_frequency(bits("0110011010"), M=3)[1] == pytest.approx(0.801252, abs=1e-6)


def test_runs_worked_example():
    v, p = R.runs(bits("1001101011"))
    assert v == 7 and p == pytest.approx(0.147232, abs=1e-6)


def test_longest_run_worked_example():
    eps = ("11001100000101010110110001001100111000000000001001001101010100010001001111010110"
           "100000001101011111001100111001101101100010110010")
    chi2, p = R.longest_run(bits(eps))
    assert chi2 == pytest.approx(4.882605, abs=1e-6) and p == pytest.approx(0.180598, abs=1e-6)


def test_cumulative_sums_against_hand_evaluated_series():
    (z, p), (zb, pb) = R.cumulative_sums(bits("1011010111"))
    assert z == 4 and zb == 4
    # the published value 0.4116588 carries a 7e-5 rounding error; the series
    # evaluated by hand with the exact normal CDF gives 0.411585
    assert p == pytest.approx(0.4115847, abs=1e-6)
    assert p == pytest.approx(0.4116588, abs=1e-3)


def test_serial_worked_example():
    (d1, p1), (d2, p2) = R.serial(bits("0011011101"), m=3)
    assert p1 == pytest.approx(0.808792, abs=1e-6) and p2 == pytest.approx(0.670320, abs=1e-6)


def test_approximate_entropy_worked_example():
    assert R.approximate_entropy(bits("0100110101"), m=3)[1] == pytest.approx(0.261961, abs=1e-6)


def test_dft_detects_periodic_sequence():
    x = (np.sin(2 * np.pi * np.arange(4096) / 16) > 0).astype(np.uint8)
    assert R.dft(x)[1] < 1e-10


@pytest.mark.parametrize("M", [8, 128])
def test_longest_run_class_probabilities_match_tables(M):
    lo, hi, table = R.LONGEST_RUN_TABLES[M]
    assert np.allclose(R.longest_run_probabilities(M, lo, hi), table, atol=1e-4)


def test_longest_run_large_block_table_is_an_approximation():
    lo, hi, table = R.LONGEST_RUN_TABLES[10000]
    exact = R.longest_run_probabilities(10000, lo, hi)
    assert np.allclose(exact, table, atol=2e-3) and abs(exact.sum() - 1) < 1e-12


def test_alternating_and_constant_sequences():
    alt = np.tile([0, 1], 500).astype(np.uint8)
    rep = R.run_tests(alt)
    assert rep["monobit"].p_value == 1.0
    assert R.run_tests(alt[:100], ["runs"])["runs"].p_value < 1e-10
    # [DERIVED] erfc(sqrt(1000) / sqrt(2))
    ones = R.run_tests(np.ones(1000, dtype=np.uint8), ["monobit"])["monobit"]
    assert ones.p_value == pytest.approx(math.erfc(math.sqrt(1000 / 2)), rel=1e-12, abs=1e-300)
    assert ones.p_value < 1e-10 and not ones.passed


def test_short_sequences_are_skipped_with_reason():
    rep = R.run_tests(np.ones(150, dtype=np.uint8))
    skipped = {r.name: r.skipped for r in rep if r.skipped}
    assert set(skipped) == {"dft"} and "1000" in skipped["dft"]
    assert not rep["dft"].passed
    assert R.run_tests(np.ones(50, dtype=np.uint8), ["monobit"])["monobit"].skipped


def test_run_tests_validates_input():
    with pytest.raises(ValidationError):
        R.run_tests(np.array([0, 2, 1]))
    with pytest.raises(ValidationError):
        R.run_tests(np.zeros(200, dtype=np.uint8), ["poker"])


def test_ideal_bits_pass(rng):
    rep = R.run_tests(BitSequence(rng.integers(0, 2, 20000)))
    assert len(rep.results) == 10
    assert sum(r.passed for r in rep) >= 9


@given(st.lists(st.integers(0, 1), min_size=1000, max_size=1500))
def test_reports_are_pure_and_bounded(seq):
    a = R.run_tests(np.array(seq, dtype=np.uint8))
    b = R.run_tests(np.array(seq, dtype=np.uint8))
    assert a.to_csv() == b.to_csv()
    for r in a.ran:
        assert 0.0 <= r.p_value <= 1.0
        assert r.passed == (r.p_value > 0.01)


def test_report_text_and_csv():
    rep = R.run_tests(np.tile([0, 1], 60).astype(np.uint8), ["monobit", "dft"])
    assert "SKIPPED" in rep.to_text()
    assert rep.to_csv().splitlines()[0] == "test,n,statistic,p_value,passed,skipped"


# --- min-entropy ------------------------------------------------------------

def test_min_entropy_examples():
    assert R.min_entropy(0.5, 0.25) == 1.0
    assert R.min_entropy(0.6, 0.2) == pytest.approx(-math.log2(0.6), abs=1e-12)
    assert R.min_entropy(0.6, 0.2) == pytest.approx(0.736966, abs=1e-6)
    with pytest.raises(DomainError):
        R.min_entropy(0.3, 0.4)


@given(st.floats(0.5, 0.999))
def test_min_entropy_maximal_at_fair_source(p):
    assert R.min_entropy(0.5, 0.25) >= R.min_entropy(p, p * (1 - p))


@given(st.floats(0.01, 0.99), st.floats(0.0, 1.0), st.floats(1e-6, 1.0))
def test_background_never_adds_entropy(pA, frac, g0):
    pAB = frac * min(pA, 0.499)
    assert R.min_entropy_background(pA, pAB, g0) <= R.min_entropy(pA, pAB) + 1e-15


def test_background_limits():
    assert abs(R.min_entropy_background(0.6, 0.2, 0.0) - R.min_entropy(0.6, 0.2)) <= 1e-12
    assert R.min_entropy_background(0.6, 0.2, 1.0) == 0.0
    with pytest.raises(DomainError):
        R.min_entropy_background(0.6, 0.2, 1.2)


def test_background_reference_arithmetic():
    # [DERIVED] g2(0) = 0.8 gives p_e = 1 - sqrt(0.2), not 0.2
    pA = 0.7098
    assert R.background_probability(0.8) == pytest.approx(0.5528, abs=1e-4)
    assert R.min_entropy_background(pA, pA * (1 - pA), 0.8) == pytest.approx(0.2006, abs=1e-3)


def test_reference_row_is_flagged():
    rows = R.reference_comparison()
    assert [r["p_A"] for r in rows] == [0.6097, 0.6098, 0.6095, 0.7098]
    assert rows[0]["H_recomputed"] == pytest.approx(0.713829, abs=1e-6)  # quoted as 0.7137 (truncated)
    assert all(r["discrepancy"] for r in rows)
    assert "discrepancy" in R.reference_csv().splitlines()[0]


def _flat(values=1.0, tmax=200.0):
    t = np.linspace(0, tmax, 2001)
    return G2Curve(t, np.full_like(t, values))


def test_conditional_probs_zero_dead_time():
    det = DetectorSpec(0.4, 0.4)
    inp = R.EntropyInputs(_flat(), det, SplitterSpec(R=0.55, T=0.45), I_in=1.0)
    cp = R.conditional_probs(inp)
    assert cp.pAA == pytest.approx(0.18) and cp.pBA == pytest.approx(0.22)
    assert cp.pA == pytest.approx(0.45, abs=1e-15)
    assert cp.pA + cp.pB == 1.0


def test_conditional_probs_symmetric_chain():
    inp = R.EntropyInputs(_flat(), DetectorSpec(0.7, 0.7), SplitterSpec(0.5, 0.5))
    rep = R.entropy_report(inp)
    assert rep.probs.pA == 0.5
    assert rep.probs.pAB == pytest.approx(0.5 * 0.35)


def test_arm_assignment_is_configurable():
    det = DetectorSpec(0.4, 0.4)
    a = R.conditional_probs(R.EntropyInputs(_flat(), det, SplitterSpec(0.55, 0.45, "A")))
    b = R.conditional_probs(R.EntropyInputs(_flat(), det, SplitterSpec(0.55, 0.45, "B")))
    assert a.pA == pytest.approx(0.45) and b.pA == pytest.approx(0.55)


def test_dead_time_terms_use_normalised_integral():
    # g2 = 1 - exp(-tau): int_0^T g2 = T - 1 + exp(-T)
    t = np.linspace(0, 100, 100001)
    g2 = G2Curve(t, 1 - np.exp(-t))
    det = DetectorSpec(0.5, 0.5, dead_A=20.0, dead_B=10.0)
    rate = 0.01
    cp = R.conditional_probs(R.EntropyInputs(g2, det, SplitterSpec(), I_in=2.0, photon_rate=rate))
    iA = rate * (20 - 1 + math.exp(-20))
    iBh = rate * (5 - 1 + math.exp(-5))
    iB = rate * (10 - 1 + math.exp(-10))
    assert cp.pAA == pytest.approx(0.25 * (1 - iA), rel=1e-8)
    assert cp.pBA == pytest.approx(0.25 * (1 - 0.25 * iBh**2), rel=1e-8)
    rA, rB = 0.25 - 0.0625 * 2 * iA / 4, 0.25 - 0.0625 * 2 * iB / 4
    assert cp.pA == pytest.approx(rA / (rA + rB), rel=1e-8)


def test_callable_g2_and_integral():
    assert R.g2_integral(lambda t: 1 - math.exp(-t), 3.0) == pytest.approx(3 - 1 + math.exp(-3), rel=1e-10)
    with pytest.raises(DomainError):
        R.g2_integral(_flat(tmax=10.0), 20.0)


def test_occupancy_above_one_is_clamped_with_warning():
    inp = R.EntropyInputs(_flat(), DetectorSpec(0.4, 0.4, 80.0, 80.0), SplitterSpec(), photon_rate=1.0)
    with pytest.warns(R.FidelityWarning):
        cp = R.conditional_probs(inp)
    assert cp.pAA == 0.0


def test_entropy_report_invariants():
    inp = R.EntropyInputs(_flat(0.3), DetectorSpec(0.4, 0.4, 5.0, 5.0), SplitterSpec(0.55, 0.45), photon_rate=0.01)
    rep = R.entropy_report(inp)
    assert abs(rep.probs.pA + rep.probs.pB - 1) <= 1e-12
    assert rep.h_base >= rep.h_background >= 0
    assert rep.p_e == pytest.approx(1 - math.sqrt(0.7))
    assert rep.to_csv().startswith("quantity,value\n")


def test_entropy_inputs_validation():
    with pytest.raises(ValidationError):
        R.EntropyInputs(_flat(), I_in=-1)
    with pytest.raises(ValidationError):
        R.EntropyInputs(_flat(), p_e=1.5)


def test_background_reference_row_is_flagged():
    b = R.background_reference()
    assert b["p_e"] == pytest.approx(1 - np.sqrt(0.2), abs=1e-12)
    assert b["H_recomputed"] == pytest.approx(0.2006, abs=1e-4) and b["discrepancy"]
    assert R.reference_csv().splitlines()[-1].startswith("P4-background,")
