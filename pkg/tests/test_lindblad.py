import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nvcoop.errors import DegenerateSourceError, DimensionError, PropagationError, ValidationError
from nvcoop.lindblad import (
    JumpChannel, build_lindbladian, evolve, partition_blocks, propagate, regression_g2, steady_state,
    validate_density,
)

rates = st.floats(1e-3, 2.0)


def _dissipator_direct(H, channels, rho):
    # textbook matrix form, evaluated without any vectorisation
    out = -1j * (H @ rho - rho @ H)
    for ch in channels:
        c = ch.operator
        cd = c.conj().T
        out += ch.rate * (c @ rho @ cd - 0.5 * (cd @ c @ rho + rho @ cd @ c))
    return out


def _random_density(rng, d):
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = X @ X.conj().T
    return rho / np.trace(rho)


def _two_level(up, down):
    sm = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|: 1 -> 0
    return [JumpChannel(sm, down, label="down"), JumpChannel(sm.T.copy(), up, label="up")]


def test_superoperator_matches_direct_action(rng):
    d = 4
    H = rng.normal(size=(d, d))
    H = H + H.T
    chans = [JumpChannel(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)), r) for r in (0.3, 1.1)]
    L = build_lindbladian(H, chans)
    rho = _random_density(rng, d)
    assert np.allclose(L.apply(rho), _dissipator_direct(H, chans, rho), atol=1e-12)


def test_rejects_bad_hamiltonian_and_channels():
    with pytest.raises(ValidationError):
        build_lindbladian(np.array([[0, 1], [0, 0]]), [])
    with pytest.raises(DimensionError):
        build_lindbladian(np.eye(2), [JumpChannel(np.eye(3), 1.0)])
    with pytest.raises(ValidationError):
        JumpChannel(np.eye(2), -1.0)


def test_two_level_decay_closed_form():
    g = 0.7
    L = build_lindbladian(np.diag([0.0, 1.0]), _two_level(0.0, g))
    t = np.linspace(0, 5, 11)
    rhos = evolve(L, np.diag([0.0, 1.0]), t)
    assert np.allclose(rhos[:, 1, 1].real, np.exp(-g * t), atol=1e-13)


def test_coherence_decays_at_half_rate():
    g = 0.4
    L = build_lindbladian(np.zeros((2, 2)), _two_level(0.0, g))
    rho0 = np.full((2, 2), 0.5, dtype=complex)
    r = evolve(L, rho0, [3.0])[0]
    assert abs(r[0, 1] - 0.5 * np.exp(-g * 3.0 / 2)) < 1e-13


@given(rates, rates, st.floats(0.0, 50.0))
def test_two_level_g2_against_closed_form(up, down, tau):
    # incoherently pumped two-level emitter: g2 = 1 - exp(-(up + down) tau)
    L = build_lindbladian(np.diag([0.0, 1.0]), _two_level(up, down))
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    g2 = regression_g2(L, [sm], [tau]).values[0]
    assert abs(g2 - (1 - np.exp(-(up + down) * tau))) < 1e-10


def test_steady_state_populations():
    up, down = 0.3, 0.9
    L = build_lindbladian(np.diag([0.0, 1.0]), _two_level(up, down))
    rho = steady_state(L)
    assert abs(rho[1, 1] - up / (up + down)) < 1e-13


def test_regression_rejects_dark_source():
    L = build_lindbladian(np.diag([0.0, 1.0]), _two_level(0.0, 1.0))
    with pytest.raises(DegenerateSourceError):
        regression_g2(L, [np.array([[0, 1], [0, 0]], dtype=complex)], [0.0])


@given(st.integers(0, 2**31), st.floats(0.0, 30.0))
def test_evolution_preserves_trace_and_positivity(seed, t):
    rng = np.random.default_rng(seed)
    d = 3
    H = np.diag(rng.uniform(0, 2, d))
    chans = [JumpChannel(rng.normal(size=(d, d)), rng.uniform(0, 1)) for _ in range(3)]
    L = build_lindbladian(H, chans)
    rho = evolve(L, _random_density(rng, d), [t], check=False)[0]
    assert abs(np.trace(rho) - 1) < 1e-10
    assert np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] > -1e-10


def test_propagate_by_blocks_equals_full_expm(rng):
    from scipy.linalg import expm

    d = 3
    chans = [JumpChannel(np.outer(np.eye(d)[i], np.eye(d)[j]), rng.uniform(0.1, 1))
             for i in range(d) for j in range(d) if i != j]
    L = build_lindbladian(np.diag([0.0, 0.37, 1.0]), chans)
    v = _random_density(rng, d).ravel()
    out = propagate(L, v, [0.0, 1.3])
    assert np.allclose(out[1], expm(L.matrix * 1.3) @ v, atol=1e-12)
    assert np.allclose(out[0], v)


def test_partition_covers_every_index():
    d = 3
    chans = [JumpChannel(np.outer(np.eye(d)[i], np.eye(d)[j]), 0.5) for i in range(d) for j in range(d) if i != j]
    L = build_lindbladian(np.diag([0.0, 0.37, 1.0]), chans)
    part = partition_blocks(L)
    assert sorted(np.concatenate(part.blocks).tolist()) == list(range(9))
    assert part.census() == {1: 6, 3: 1}


def test_validate_density_flags_each_invariant():
    with pytest.raises(PropagationError) as e:
        validate_density(np.diag([0.5, 0.6]))
    assert e.value.invariant == "trace"
    with pytest.raises(PropagationError) as e:
        validate_density(np.diag([1.5, -0.5]))
    assert e.value.invariant == "positivity"
    with pytest.raises(PropagationError) as e:
        validate_density(np.array([[0.5, 0.1], [0.3, 0.5]]))
    assert e.value.invariant == "hermitian"
