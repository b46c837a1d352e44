import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nvcoop.errors import InsufficientDataError, PropagationError, ValidationError
from nvcoop.hbt import (
    CW, BitSequence, ClickStream, DetectorSpec, Pulsed, SplitterSpec, clicks_to_bits,
    coincidence_histogram, detect, read_bits, read_clicks, simulate_emission, von_neumann,
    write_bits, write_clicks,
)
from nvcoop.nvmodel import DipoleCoupling, RateSet, build_single_nv, build_two_nv
from nvcoop.photonstats import model_steady_state

RATES = RateSet(0.1, 0.0602, 0.005, 0.002)


def flux(model):
    rho = model_steady_state(model)
    return float(sum(np.trace(A.conj().T @ A @ rho).real for A in model.emission_operators()))


def test_spec_validation():
    with pytest.raises(ValidationError):
        SplitterSpec(0.6, 0.5)
    with pytest.raises(ValidationError):
        SplitterSpec(transmitted_arm="C")
    with pytest.raises(ValidationError):
        DetectorSpec(eta_A=1.2)
    with pytest.raises(ValidationError):
        DetectorSpec(dead_B=-1)
    with pytest.raises(ValidationError):
        Pulsed(0.0)
    with pytest.raises(ValidationError):
        Pulsed(10.0, 1.5)
    with pytest.raises(ValidationError):
        simulate_emission(build_single_nv(RATES), CW(), -1.0, 1)
    with pytest.raises(ValidationError):
        BitSequence([0, 2])


def test_single_cw_flux_matches_steady_state():
    model = build_single_nv(RATES)
    T = 5e6
    t = simulate_emission(model, CW(), T, seed=11)
    assert t.size > 1e5 and np.all(np.diff(t) >= 0) and t[-1] < T
    assert t.size / T == pytest.approx(flux(model), rel=0.02)


def test_single_cw_is_antibunched():
    model = build_single_nv(RATES)
    t = simulate_emission(model, CW(), 2e6, seed=2)
    # one emitter cannot emit twice faster than the pump allows
    gaps = np.diff(t)
    assert np.mean(gaps < 0.5) < 1 - np.exp(-RATES.r_eg * 0.5) + 0.01


def test_rate_override():
    model = build_single_nv(RATES)
    lo = simulate_emission(model, CW(0.01), 1e6, seed=3).size
    hi = simulate_emission(model, CW(), 1e6, seed=3).size
    assert lo < hi


def test_pulsed_single_at_most_one_photon_per_period():
    period = 200.0
    t = simulate_emission(build_single_nv(RATES), Pulsed(period, 0.8), 2e5, seed=4)
    per = np.bincount((t // period).astype(int))
    assert per.max() <= 1 and t.size > 0.5 * 1000 * 0.8


def test_seed_determinism_and_independence():
    model = build_single_nv(RATES)
    a = simulate_emission(model, CW(), 1e5, seed=7)
    b = simulate_emission(model, CW(), 1e5, seed=7)
    c = simulate_emission(model, CW(), 1e5, seed=8)
    assert np.array_equal(a, b) and not np.array_equal(a[:50], c[:50])
    ca = detect(a, SplitterSpec(), DetectorSpec(0.5, 0.5, 10, 10, 100, 100), seed=1, duration=1e5)
    cb = detect(a, SplitterSpec(), DetectorSpec(0.5, 0.5, 10, 10, 100, 100), seed=1, duration=1e5)
    assert np.array_equal(ca.times, cb.times) and np.array_equal(ca.detectors, cb.detectors)


def test_collective_pair_flux():
    rates = RateSet(0.5, 0.06, 0.01, 0.02)
    model = build_two_nv(rates, None, collective=True)
    T = 2e5
    t = simulate_emission(model, CW(), T, seed=5)
    # shelving in |i> makes the count variance several times Poissonian
    assert t.size / T == pytest.approx(flux(model), rel=0.08)


def test_coupled_pair_pulsed_runs():
    model = build_two_nv(RATES, DipoleCoupling(0.05, 0.031, 0.017), collective=True)
    t = simulate_emission(model, Pulsed(100.0, 1.0), 2e4, seed=6)
    per = np.bincount((t // 100.0).astype(int))
    assert t.size > 0 and per.max() <= 2


def test_detection_efficiency_and_splitting(rng):
    em = np.sort(rng.uniform(0, 1e7, 200_000))
    cs = detect(em, SplitterSpec(0.3, 0.7, "A"), DetectorSpec(0.5, 1.0), seed=9, duration=1e7)
    nA, nB = cs.arm(0).size, cs.arm(1).size
    assert nA / em.size == pytest.approx(0.7 * 0.5, rel=0.02)
    assert nB / em.size == pytest.approx(0.3, rel=0.02)


def test_dead_time_enforced(rng):
    em = np.sort(rng.uniform(0, 1e6, 100_000))
    det = DetectorSpec(dead_A=77.9, dead_B=74.7)
    cs = detect(em, SplitterSpec(), det, seed=1, duration=1e6)
    for arm, d in ((0, 77.9), (1, 74.7)):
        assert np.diff(cs.arm(arm)).min() >= d
    bad = ClickStream([0.0, 1.0], [0, 0], 10.0)
    with pytest.raises(PropagationError):
        bad.check_dead_time(DetectorSpec(dead_A=5.0))


def test_dark_counts_only():
    T = 1e9  # one second
    cs = detect(np.zeros(0), SplitterSpec(), DetectorSpec(0.0, 0.0, 0, 0, 1e5, 2e4), seed=2, duration=T)
    assert cs.arm(0).size == pytest.approx(1e5, abs=5 * np.sqrt(1e5))
    assert cs.arm(1).size == pytest.approx(2e4, abs=5 * np.sqrt(2e4))


def test_uncorrelated_streams_give_flat_histogram(rng):
    T = 1e8
    ta, tb = np.sort(rng.uniform(0, T, 200_000)), np.sort(rng.uniform(0, T, 200_000))
    cs = ClickStream(np.concatenate([ta, tb]), np.r_[np.zeros(ta.size), np.ones(tb.size)].astype(np.uint8), T)
    order = np.argsort(cs.times, kind="stable")
    cs = ClickStream(cs.times[order], cs.detectors[order], T)
    h = coincidence_histogram(cs, 1.0, 500.0)
    assert h.values.mean() == pytest.approx(1.0, abs=0.02)
    assert h.meta["total"] == int(h.meta["counts"].sum())


def test_histogram_brute_force(rng):
    ta, tb = np.sort(rng.uniform(0, 1000, 60)), np.sort(rng.uniform(0, 1000, 70))
    t = np.concatenate([ta, tb])
    d = np.r_[np.zeros(60), np.ones(70)].astype(np.uint8)
    o = np.argsort(t)
    h = coincidence_histogram(ClickStream(t[o], d[o], 1000.0), 2.0, 20.0, chunk=7)
    diffs = (tb[None, :] - ta[:, None]).ravel()
    edges = np.arange(-21.0, 22.0, 2.0)
    assert np.array_equal(h.meta["counts"], np.histogram(diffs, edges)[0])


def test_histogram_needs_both_arms():
    with pytest.raises(InsufficientDataError):
        coincidence_histogram(ClickStream([1.0, 2.0], [0, 0], 5.0), 0.1, 1.0)


def test_single_emitter_histogram_dips_at_zero():
    model = build_single_nv(RateSet(0.5, 0.0602, 0.005, 0.002))
    T = 2e7
    em = simulate_emission(model, CW(), T, seed=12)
    cs = detect(em, SplitterSpec(), DetectorSpec(), seed=12, duration=T)
    h = coincidence_histogram(cs, 0.5, 50.0)
    mid = h.values[np.abs(h.tau) < 0.3]
    assert mid.max() < 0.25


def test_von_neumann_rate_and_balance():
    rng = np.random.default_rng(0)
    raw = BitSequence((rng.random(1_000_000) < 0.7).astype(np.uint8))
    out = von_neumann(raw)
    assert len(out) / len(raw) == pytest.approx(0.21, abs=0.005)
    assert out.bits.mean() == pytest.approx(0.5, abs=0.005)
    assert out.origin == "debiased"


@given(st.lists(st.integers(0, 1), max_size=64))
def test_von_neumann_maps_pairs(bits):
    out = von_neumann(BitSequence(bits))
    pairs = [(bits[i], bits[i + 1]) for i in range(0, len(bits) - 1, 2)]
    assert list(out.bits) == [a for a, b in pairs if a != b]


def test_clicks_to_bits():
    cs = ClickStream([1.0, 2.0, 3.0], [0, 1, 1], 4.0)
    assert str(clicks_to_bits(cs)) == "011"
    assert str(clicks_to_bits(cs, a_bit=1)) == "100"


def test_click_and_bit_files_round_trip(tmp_path, rng):
    cs = ClickStream(np.sort(rng.uniform(0, 1e4, 50)).round(6), rng.integers(0, 2, 50), 1e4)
    write_clicks(tmp_path / "c.txt", cs)
    back = read_clicks(tmp_path / "c.txt")
    assert np.allclose(back.times, cs.times, atol=1e-6) and np.array_equal(back.detectors, cs.detectors)
    assert back.duration == 1e4
    bits = BitSequence(rng.integers(0, 2, 1001))
    write_bits(tmp_path / "b.bin", bits)
    assert np.array_equal(read_bits(tmp_path / "b.bin").bits, bits.bits)
    (tmp_path / "x.txt").write_text("1.0\tA\n")
    with pytest.raises(ValidationError):
        read_clicks(tmp_path / "x.txt")
