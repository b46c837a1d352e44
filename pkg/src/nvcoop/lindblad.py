"""Lindblad superoperators on row-major vectorised density matrices.

Convention: vec(rho)[p*d + q] = rho[p, q], i.e. ``rho.ravel()``.  With this
ordering vec(A rho B) = kron(A, B.T) @ vec(rho).  hbar = 1 throughout, so
Hamiltonians and rates share one angular-frequency unit.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import numerics
from .curves import G2Curve
from .errors import DegenerateSourceError, DimensionError, PropagationError, ValidationError


@dataclass(frozen=True)
class JumpChannel:
    operator: np.ndarray
    rate: float
    frequency: float = 0.0
    label: str = ""
    radiative: bool = False

    def __post_init__(self):
        op = np.asarray(self.operator, dtype=complex)
        if op.ndim != 2 or op.shape[0] != op.shape[1]:
            raise DimensionError(f"jump operator must be square, got {op.shape}")
        if not self.rate >= 0:
            raise ValidationError(f"negative rate {self.rate} on channel {self.label!r}")
        object.__setattr__(self, "operator", op)


@dataclass(frozen=True)
class Superoperator:
    matrix: np.ndarray
    dim: int

    def index(self, p: int, q: int) -> int:
        return p * self.dim + q

    def pair(self, k: int) -> tuple[int, int]:
        return divmod(k, self.dim)

    @property
    def diagonal_indices(self) -> list[int]:
        return [p * self.dim + p for p in range(self.dim)]

    def apply(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        return (self.matrix @ rho.ravel()).reshape(self.dim, self.dim)

    def block(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=int)
        return self.matrix[np.ix_(idx, idx)]


@dataclass(frozen=True)
class BlockPartition:
    blocks: list = field(default_factory=list)

    def census(self) -> dict[int, int]:
        return dict(sorted(Counter(len(b) for b in self.blocks).items()))

    def block_of(self, k: int) -> np.ndarray:
        for b in self.blocks:
            if k in b:
                return b
        raise KeyError(k)

    def __len__(self):
        return len(self.blocks)


def build_lindbladian(H, channels: Sequence[JumpChannel]) -> Superoperator:
    """L vec(rho) = vec(-i[H, rho] + sum_k rate_k (c rho c^+ - 1/2 {c^+ c, rho}))."""
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise DimensionError(f"Hamiltonian must be square, got {H.shape}")
    if not np.allclose(H, H.conj().T, atol=1e-12 * max(1.0, np.abs(H).max())):
        raise ValidationError("Hamiltonian is not Hermitian")
    d = H.shape[0]
    eye = np.eye(d)
    L = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    for ch in channels:
        c = ch.operator
        if c.shape != (d, d):
            raise DimensionError(f"channel {ch.label!r} has shape {c.shape}, system dimension is {d}")
        if ch.rate == 0:
            continue
        cdc = c.conj().T @ c
        L += ch.rate * (np.kron(c, c.conj()) - 0.5 * (np.kron(cdc, eye) + np.kron(eye, cdc.T)))
    return Superoperator(matrix=L, dim=d)


def partition_blocks(L: Superoperator, tol: float = 1e-12) -> BlockPartition:
    """Connected components of the symmetrised nonzero pattern of L."""
    M = np.abs(L.matrix) > tol
    M = M | M.T
    n, labels = connected_components(csr_matrix(M), directed=False)
    blocks = [np.flatnonzero(labels == k) for k in range(n)]
    blocks.sort(key=lambda b: b[0])
    return BlockPartition(blocks=blocks)


def validate_density(rho, trace_tol: float = 1e-9, herm_tol: float = 1e-10, pos_tol: float = 1e-9) -> None:
    rho = np.asarray(rho)
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise PropagationError("density matrix lost Hermiticity", invariant="hermitian")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        raise PropagationError(f"trace drifted to {tr.real:.15f}", invariant="trace")
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if w[0] < -pos_tol:
        raise PropagationError(f"negative eigenvalue {w[0]:.3e}", invariant="positivity")


def _support_blocks(partition: BlockPartition, vec: np.ndarray, tol: float = 0.0) -> list:
    nz = set(np.flatnonzero(np.abs(vec) > tol))
    return [b for b in partition.blocks if nz.intersection(b.tolist())]


def propagate(L: Superoperator, vec, times, partition: BlockPartition | None = None) -> np.ndarray:
    """exp(L t) @ vec for every t; returns shape (len(times), d*d)."""
    vec = np.asarray(vec, dtype=complex)
    times = np.asarray(times, dtype=float)
    if partition is None:
        partition = partition_blocks(L)
    out = np.zeros((times.size, vec.size), dtype=complex)
    for b in _support_blocks(partition, vec):
        sub = L.block(b)
        v = vec[b]
        for n, t in enumerate(times):
            out[n, b] = numerics.expm(sub, t) @ v
    return out


def evolve(L: Superoperator, rho0, times, partition: BlockPartition | None = None, check: bool = True) -> np.ndarray:
    """Density matrices exp(L t) rho0 on ``times``; shape (len(times), d, d)."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValidationError("times must be nonnegative and ascending")
    rho0 = np.asarray(rho0, dtype=complex)
    d = L.dim
    vecs = propagate(L, rho0.ravel(), times, partition)
    rhos = vecs.reshape(times.size, d, d)
    if check:
        for r in rhos:
            validate_density(r)
    return rhos


def steady_state(L: Superoperator, initial=None) -> np.ndarray:
    """Stationary density matrix; ``initial`` selects one when the kernel is degenerate."""
    init = None if initial is None else np.asarray(initial, dtype=complex).ravel()
    x = numerics.nullspace_steady(L.matrix, trace_indices=L.diagonal_indices, initial=init)
    rho = x.reshape(L.dim, L.dim)
    return 0.5 * (rho + rho.conj().T)


def regression_g2(
    L: Superoperator,
    sigma_list: Sequence[np.ndarray],
    times,
    rho_ss=None,
    initial=None,
    partition: BlockPartition | None = None,
) -> G2Curve:
    """Intensity correlation by the quantum regression theorem.

    g2(tau) = sum_ij tr[s_i^+ s_i exp(L tau)(s_j rho s_j^+)] / (sum_i tr[s_i^+ s_i rho])^2
    with rho the steady state.  Pass a single collective operator to get
    interference between emitters; pass one operator per emitter for an
    incoherent sum.
    """
    times = np.asarray(times, dtype=float)
    rho = steady_state(L, initial) if rho_ss is None else np.asarray(rho_ss, dtype=complex)
    ops = [np.asarray(s, dtype=complex) for s in sigma_list]
    ns = [s.conj().T @ s for s in ops]
    mean = sum(np.trace(n @ rho).real for n in ns)
    if mean < 1e-14:
        raise DegenerateSourceError(f"steady-state emission {mean:.3e} is zero; g2 undefined")
    if partition is None:
        partition = partition_blocks(L)
    num = np.zeros(times.size)
    d = L.dim
    for s in ops:
        x = s @ rho @ s.conj().T
        vecs = propagate(L, x.ravel(), times, partition).reshape(times.size, d, d)
        for n in ns:
            num += np.einsum("ij,tji->t", n, vecs).real
    return G2Curve(tau=times, values=num / mean**2, label="regression")
