"""Dense complex linear algebra, special functions and RNG streams.

Everything in here is pure; matrices are plain ``numpy.ndarray`` objects
(complex128 where it matters).  Higher-level modules never call
``numpy.linalg`` directly for eigenproblems or kernels so that ordering
and tolerance conventions stay in one place.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    DecompositionError,
    DegenerateSteadyStateError,
    DimensionError,
    DomainError,
    NoSteadyStateError,
    NumericRangeError,
)

# Relative gap used to decide that two real parts are "tied" when sorting.
_TIE_RTOL = 1e-12


def _as_square(A) -> np.ndarray:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NumericRangeError("matrix has non-finite entries")
    return A


def expm(A, t: float = 1.0) -> np.ndarray:
    """Return exp(A t) by scaling and squaring with a Pade approximant."""
    A = _as_square(A)
    if t < 0:
        raise DomainError("expm is only defined here for t >= 0")
    with np.errstate(over="raise", invalid="raise"):
        try:
            out = scipy.linalg.expm(A * t)
        except FloatingPointError as exc:
            raise NumericRangeError(f"overflow in expm: {exc}") from None
    if not np.all(np.isfinite(out)):
        raise NumericRangeError("overflow in expm")
    return out


@dataclass(frozen=True)
class EigenDecomposition:
    values: np.ndarray
    vectors: np.ndarray  # columns are right eigenvectors
    condition: float

    def reconstruct(self) -> np.ndarray:
        V = self.vectors
        return V @ np.diag(self.values) @ np.linalg.inv(V)


def sort_eigenvalues(values) -> np.ndarray:
    """Indices ordering ``values`` by real part descending, ties by imaginary part ascending."""
    values = np.asarray(values, dtype=complex)
    if values.size == 0:
        return np.arange(0)
    scale = max(1.0, float(np.max(np.abs(values))))
    order = sorted(range(values.size), key=lambda k: -values[k].real)
    # group near-equal real parts and order each group by imaginary part
    out, group = [], [order[0]]
    for k in order[1:]:
        if abs(values[k].real - values[group[0]].real) <= _TIE_RTOL * scale:
            group.append(k)
        else:
            out.extend(sorted(group, key=lambda j: values[j].imag))
            group = [k]
    out.extend(sorted(group, key=lambda j: values[j].imag))
    return np.array(out, dtype=int)


def eig(A) -> EigenDecomposition:
    A = _as_square(A)
    try:
        w, V = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        # LAPACK does not report the QR sweep count; 30*n is its internal cap
        raise DecompositionError(f"eigensolver did not converge: {exc}", iterations=30 * A.shape[0]) from None
    idx = sort_eigenvalues(w)
    w, V = w[idx], V[:, idx]
    V = V / np.linalg.norm(V, axis=0, keepdims=True)
    norm = np.linalg.norm(A, 2) if A.size else 0.0
    resid = np.linalg.norm(A @ V - V * w, axis=0)
    if A.size and np.max(resid) > 1e-9 * max(norm, np.finfo(float).tiny):
        raise DecompositionError(f"eigenpair residual {np.max(resid):.3e} too large")
    cond = float(np.linalg.cond(V)) if A.size else 1.0
    return EigenDecomposition(values=w, vectors=V, condition=cond)


def nullspace_steady(
    A,
    trace_indices: Sequence[int] | None = None,
    initial=None,
    rtol: float = 1e-10,
) -> np.ndarray:
    """Normalised kernel element of ``A``.

    ``trace_indices`` designates the entries that sum to the physical trace
    (all entries when omitted).  When the kernel is more than one dimensional
    the answer is only defined relative to a starting vector: pass
    ``initial`` to get the long-time limit of exp(A t) @ initial, i.e. the
    spectral projection of ``initial`` onto the kernel.
    """
    A = _as_square(A)
    n = A.shape[0]
    norm = np.linalg.norm(A, 2)
    if norm == 0:
        raise NoSteadyStateError("zero generator: every vector is stationary")
    U, s, Vh = np.linalg.svd(A)
    null = s <= rtol * norm
    k = int(np.count_nonzero(null))
    if k == 0:
        raise NoSteadyStateError(f"matrix is numerically full rank (smallest singular value {s[-1]:.3e})")
    idx = list(trace_indices) if trace_indices is not None else list(range(n))
    if k == 1:
        x = Vh[-1].conj()
    else:
        if initial is None:
            raise DegenerateSteadyStateError(f"kernel has dimension {k}; supply an initial state", kernel_dim=k)
        X = Vh[-k:].conj().T  # right kernel basis
        Y = U[:, -k:]  # left kernel basis (columns y with y^H A = 0)
        x = X @ np.linalg.solve(Y.conj().T @ X, Y.conj().T @ np.asarray(initial, dtype=complex))
    tr = np.sum(x[idx])
    if abs(tr) < 1e-14 * np.linalg.norm(x):
        raise NoSteadyStateError("kernel vector has vanishing trace")
    x = x / tr
    if np.linalg.norm(A @ x) > 1e-10 * norm * max(1.0, np.linalg.norm(x)):
        raise NoSteadyStateError("kernel residual above tolerance")
    return x


# --- special functions -------------------------------------------------

def _j0(x: np.ndarray) -> np.ndarray:
    out = np.ones_like(x)
    big = x > 1e-4
    out[big] = np.sin(x[big]) / x[big]
    xs = x[~big]
    out[~big] = 1.0 - xs**2 / 6.0 + xs**4 / 120.0
    return out


def _j2_series(x: np.ndarray, terms: int = 14) -> np.ndarray:
    # j2(x) = sum_k (-1)^k x^(2k+2) / (2^k k! (2k+5)!!)
    total = np.zeros_like(x)
    term = x**2 / 15.0
    for k in range(terms):
        total += term
        term = -term * x**2 / (2.0 * (k + 1) * (2 * k + 7))
    return total


def _j2(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    small = x < 0.5
    out[small] = _j2_series(x[small])
    xb = x[~small]
    out[~small] = (3.0 / xb**3 - 1.0 / xb) * np.sin(xb) - 3.0 * np.cos(xb) / xb**2
    return out


def special_f(x, theta, literal: bool = False):
    """j0(x) + P2(cos theta) j2(x).

    With ``literal=True`` the truncated form j2 = (3/x^3 - 1/x) sin x is
    used; it diverges as x -> 0 and is only there for comparison.
    """
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0):
        raise DomainError("special_f needs x >= 0")
    xa = np.atleast_1d(x_arr).astype(float)
    u = np.cos(np.asarray(theta, dtype=float))
    p2 = 0.5 * (3.0 * u**2 - 1.0)
    if literal:
        with np.errstate(divide="ignore", invalid="ignore"):
            j2 = (3.0 / xa**3 - 1.0 / xa) * np.sin(xa)
    else:
        j2 = _j2(xa)
    out = _j0(xa) + p2 * j2
    return out.reshape(x_arr.shape) if x_arr.ndim else float(out[0])


# --- principal value quadrature ----------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _composite_gl(f: Callable, a: float, b: float, panels: int) -> float:
    if b <= a:
        return 0.0
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    x = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return float(np.sum(w * f(x)))


def _vectorised(g: Callable) -> Callable:
    def call(x):
        y = np.asarray(g(x), dtype=float)
        if y.shape != np.shape(x):
            y = np.array([float(g(xi)) for xi in x])
        return y
    return call


def pv_integral(g: Callable, pole: float, cutoff: float, rtol: float = 1e-10, max_panels: int = 1 << 14) -> float:
    """Cauchy principal value of the integral of g(x)/(x - pole) over [0, cutoff].

    The interval around the pole is folded onto itself so that nodes sit in
    symmetric pairs pole +/- u; the folded integrand is regular.  Panels are
    doubled until successive estimates agree to ``rtol``.
    """
    if not 0.0 < pole < cutoff:
        raise DomainError(f"pole {pole} must lie strictly inside (0, {cutoff})")
    g = _vectorised(g)
    h = min(pole, cutoff - pole)

    def folded(u):
        return (g(pole + u) - g(pole - u)) / u

    def outer(x):
        return g(x) / (x - pole)

    if cutoff - pole > pole:
        lo, hi = pole + h, cutoff
    else:
        lo, hi = 0.0, pole - h

    def estimate(n):
        return _composite_gl(folded, 0.0, h, n) + _composite_gl(outer, lo, hi, n)

    panels = 4
    prev = estimate(panels)
    while panels < max_panels:
        panels *= 2
        cur = estimate(panels)
        if abs(cur - prev) <= rtol * max(abs(cur), 1.0):
            return cur
        prev = cur
    raise NumericRangeError("principal value quadrature did not converge")


# --- random streams ------------------------------------------------------

def rng_stream(seed: int, shard: int = 0) -> np.random.Generator:
    """Independent, reproducible generator for (seed, shard)."""
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=(int(shard),))
    return np.random.Generator(np.random.PCG64(ss))
