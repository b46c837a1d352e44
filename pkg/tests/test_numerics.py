import numpy as np
import pytest
import scipy.integrate
import scipy.special
from hypothesis import given
from hypothesis import strategies as st

from nvcoop import numerics
from nvcoop.errors import (
    DegenerateSteadyStateError, DimensionError, DomainError, NoSteadyStateError, NumericRangeError,
)


def _random_generator(rng, n):
    # random column-stochastic rate generator: off-diagonals >= 0, columns sum to 0
    K = rng.uniform(0, 1, (n, n))
    np.fill_diagonal(K, 0)
    return K - np.diag(K.sum(axis=0))


def test_expm_matches_eigendecomposition(rng):
    A = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    w, V = np.linalg.eig(A)
    ref = V @ np.diag(np.exp(0.7 * w)) @ np.linalg.inv(V)
    assert np.allclose(numerics.expm(A, 0.7), ref, atol=1e-10)


def test_expm_zero_time_is_identity(rng):
    A = rng.normal(size=(4, 4))
    assert np.array_equal(numerics.expm(A, 0.0), np.eye(4))


def test_expm_rejects_bad_input():
    with pytest.raises(DimensionError):
        numerics.expm(np.ones((2, 3)))
    with pytest.raises(DomainError):
        numerics.expm(np.eye(2), -1.0)
    with pytest.raises(NumericRangeError):
        numerics.expm(np.array([[np.nan]]))
    with pytest.raises(NumericRangeError):
        numerics.expm(np.array([[800.0]]), 2.0)


@given(st.integers(2, 7), st.integers(0, 10_000))
def test_expm_semigroup(n, seed):
    A = np.random.default_rng(seed).normal(size=(n, n))
    lhs = numerics.expm(A, 0.3) @ numerics.expm(A, 0.5)
    assert np.allclose(lhs, numerics.expm(A, 0.8), rtol=1e-10, atol=1e-10)


def test_eig_order_and_reconstruction(rng):
    A = rng.normal(size=(5, 5))
    dec = numerics.eig(A)
    re = dec.values.real
    assert np.all(np.diff(re) <= 1e-12 * np.max(np.abs(dec.values)))
    assert np.allclose(dec.reconstruct(), A, atol=1e-10)
    assert np.allclose(np.linalg.norm(dec.vectors, axis=0), 1.0)


def test_sort_eigenvalues_ties_by_imaginary_part():
    vals = np.array([-1 + 2j, 0.0, -1 - 2j, -3])
    assert list(numerics.sort_eigenvalues(vals)) == [1, 2, 0, 3]


def test_nullspace_steady_against_rate_equation_solve(rng):
    K = _random_generator(rng, 4)
    x = numerics.nullspace_steady(K).real
    # independent oracle: replace one equation by normalisation
    M = K.copy()
    M[-1] = 1.0
    ref = np.linalg.solve(M, np.r_[np.zeros(3), 1.0])
    assert np.allclose(x, ref, atol=1e-12)


def test_nullspace_degenerate_kernel_needs_initial():
    K = np.zeros((4, 4))
    K[:2, :2] = [[-1, 2], [1, -2]]
    K[2:, 2:] = [[-3, 1], [3, -1]]
    with pytest.raises(DegenerateSteadyStateError) as err:
        numerics.nullspace_steady(K)
    assert err.value.kernel_dim == 2
    x = numerics.nullspace_steady(K, initial=np.array([1.0, 0, 0, 0]))
    # long-time limit of exp(K t) from the first state stays in the first block
    ref = numerics.expm(K, 200.0) @ np.array([1.0, 0, 0, 0])
    assert np.allclose(x, ref, atol=1e-10)


def test_nullspace_full_rank_raises():
    with pytest.raises(NoSteadyStateError):
        numerics.nullspace_steady(np.eye(3))
    with pytest.raises(NoSteadyStateError):
        numerics.nullspace_steady(np.zeros((3, 3)))


@given(st.floats(1e-6, 60.0), st.floats(0.0, np.pi))
def test_special_f_against_scipy_spherical_bessel(x, theta):
    ref = scipy.special.spherical_jn(0, x) + 0.5 * (3 * np.cos(theta) ** 2 - 1) * scipy.special.spherical_jn(2, x)
    assert abs(numerics.special_f(x, theta) - ref) < 1e-12


def test_special_f_at_zero_is_one():
    assert numerics.special_f(0.0, 0.3) == 1.0
    with pytest.raises(DomainError):
        numerics.special_f(-1.0, 0.0)


def test_special_f_literal_form_diverges_at_small_x():
    assert abs(numerics.special_f(1e-3, 0.0, literal=True)) > 1e5


def test_pv_integral_constant_numerator():
    # PV int_0^c dx / (x - p) = ln((c - p) / p)
    assert abs(numerics.pv_integral(lambda x: np.ones_like(x), 0.3, 2.0) - np.log(1.7 / 0.3)) < 1e-10


@given(st.floats(0.05, 0.95))
def test_pv_integral_against_scipy_cauchy_weight(p):
    g = np.cos
    ref, _ = scipy.integrate.quad(g, 0.0, 1.0, weight="cauchy", wvar=p, epsabs=1e-13, epsrel=1e-13)
    assert abs(numerics.pv_integral(g, p, 1.0) - ref) < 1e-9


def test_pv_integral_pole_outside_range():
    with pytest.raises(DomainError):
        numerics.pv_integral(np.cos, 2.0, 1.0)


def test_rng_stream_reproducible_and_independent():
    a = numerics.rng_stream(7, 0).random(5)
    b = numerics.rng_stream(7, 0).random(5)
    c = numerics.rng_stream(7, 1).random(5)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)
