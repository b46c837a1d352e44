import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nvcoop.errors import ConfigurationError, ValidationError
from nvcoop.lindblad import partition_blocks
from nvcoop.nvmodel import (
    LEVELS, DipoleCoupling, RateSet, build_single_nv, build_two_nv, davies_components, dicke_ladder,
    eigenfrequencies, single_hole_matrix, solve_single_hole, two_nv_hamiltonian, LevelSystem,
)

COUPLING = DipoleCoupling(0.05, 0.031, 0.017)
RATES = RateSet(r_eg=0.5, r_ge=0.06, r_ei=0.01, r_ig=0.02)
rate = st.floats(1e-3, 1.0)


@given(rate, rate, rate, rate)
def test_rate_matrix_layout(r_eg, r_ge, r_ei, r_ig):
    # published value: rate-equation matrix in (g, i, e) order with r_gi = r_ie = 0
    R = RateSet(r_eg, r_ge, r_ei, r_ig).rate_matrix()
    ref = np.array([
        [-(r_ig + r_eg), 0.0, r_ge],
        [r_ig, -r_ei, 0.0],
        [r_eg, r_ei, -r_ge],
    ])
    assert np.allclose(R, ref, atol=0)
    assert np.allclose(R.sum(axis=0), 0)


def test_rate_validation():
    with pytest.raises(ValidationError):
        RateSet(-1, 1, 1, 1)
    with pytest.raises(ValidationError):
        RateSet(np.inf, 1, 1, 1)


def test_single_lindbladian_population_block_is_rate_matrix():
    m = build_single_nv(RATES)
    idx = [m.flat(l, l) for l in LEVELS]
    assert np.allclose(m.lindbladian.block(idx).real, RATES.rate_matrix(), atol=1e-14)


def test_censuses():
    # published value: block structure of the two-emitter Lindbladian
    assert partition_blocks(build_single_nv(RATES).lindbladian).census() == {1: 6, 3: 1}
    assert partition_blocks(build_two_nv(RATES).lindbladian).census() == {1: 6, 2: 6, 8: 6, 15: 1}
    assert partition_blocks(build_two_nv(RATES, COUPLING).lindbladian).census() == {1: 6, 2: 18, 4: 6, 15: 1}
    assert partition_blocks(build_two_nv(RATES, collective=False).lindbladian).census() == {1: 36, 3: 12, 9: 1}


def test_accidental_coupling_degeneracy_changes_census():
    # V_ei + V_ig = V_eg makes two dressed gaps coincide
    c = DipoleCoupling(0.05, 0.03, 0.02)
    assert partition_blocks(build_two_nv(RATES, c).lindbladian).census() != {1: 6, 2: 18, 4: 6, 15: 1}


def test_distinct_frequencies():
    # published value: nine distinct transition frequencies once the pair is coupled
    assert eigenfrequencies(build_two_nv(RATES, COUPLING)).size == 9
    assert eigenfrequencies(build_two_nv(RATES)).size == 6


def test_collective_needs_identical_rates():
    with pytest.raises(ConfigurationError):
        build_two_nv(RATES, rates2=RateSet(1, 1, 1, 1))


@given(st.floats(-0.1, 0.1), st.floats(-0.1, 0.1), st.floats(-0.1, 0.1))
def test_davies_components_sum_to_operator(veg, vig, vei):
    H = two_nv_hamiltonian(LevelSystem(), DipoleCoupling(veg, vig, vei))
    op = np.kron(np.diag([1, 0, 0])[:, [2, 1, 0]], np.eye(3)).astype(complex)
    parts = davies_components(op, H)
    assert np.allclose(sum(A for _, A in parts), op, atol=1e-12)
    for w, A in parts:
        assert np.allclose(H @ A - A @ H, -w * A, atol=1e-8)


def test_dicke_ladder_maps_ground_to_symmetric():
    s1, s2 = dicke_ladder()
    gg = np.zeros(9)
    gg[0] = 1
    sym = s1 @ gg
    assert abs(np.linalg.norm(sym) - 1) < 1e-15
    ee = s2 @ sym
    assert abs(np.linalg.norm(ee) - 1) < 1e-15
    anti = np.zeros(9, dtype=complex)
    anti[[2 * 3 + 0, 0 * 3 + 2]] = [1, -1]
    assert np.allclose(s2 @ anti, 0)  # antisymmetric state is dark


def test_with_rates_rebuilds_same_kind():
    m = build_two_nv(RATES, COUPLING)
    m2 = m.with_rates(RATES.without_pump())
    assert m2.kind == m.kind and m2.coupling == COUPLING and m2.rates.r_eg == 0


single_hole_args = st.tuples(
    st.floats(-2, 2), st.floats(-1, 1), st.complex_numbers(max_magnitude=1.0, allow_nan=False, allow_infinity=False),
    st.floats(-2, 2),
)


@given(single_hole_args)
def test_single_hole_spectrum_and_orbitals(args):
    V_C, h_C, h_N, V_N = args
    sol = solve_single_hole(V_C, h_C, h_N, V_N)
    M = single_hole_matrix(V_C, h_C, h_N, V_N)
    ref = np.linalg.eigvalsh(M)
    assert np.max(np.abs(np.sort(sol.energies) - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))
    O = sol.orbitals
    assert np.max(np.abs(O.conj().T @ O - np.eye(4))) <= 1e-12
    # columns a1, a1', e_x, e_y are eigenvectors for lam-, lam+, and the degenerate pair
    resid = M @ O - O @ np.diag([sol.lam_minus, sol.lam_plus, sol.degenerate, sol.degenerate])
    assert np.max(np.abs(resid)) <= 1e-11 * max(1.0, np.max(np.abs(M)))


def test_single_hole_degenerate_pair():
    sol = solve_single_hole(1.0, 0.25, 0.0, 1.5)
    assert sol.degenerate == pytest.approx(0.75)
    assert sol.delta == pytest.approx(0.0)
