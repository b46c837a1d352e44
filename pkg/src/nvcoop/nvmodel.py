"""Concrete emitter models: single-hole spectrum, one NV, two NVs.

Rate naming follows the population rate matrix: ``r_lm`` is the rate of
the channel |l><m|, i.e. the transition m -> l.  So ``r_eg`` pumps the
ground state into the excited state and ``r_ge`` is the radiative decay.
The level order is (g, i, e) for one emitter and the 9 product states
gg, gi, ge, ig, ii, ie, eg, ei, ee for two.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, ValidationError
from .lindblad import JumpChannel, Superoperator, build_lindbladian

LEVELS = ("g", "i", "e")
PAIR_LABELS = tuple(a + b for a in LEVELS for b in LEVELS)
# transitions of the rate matrix, keyed by rate name: (to, from)
TRANSITIONS = {
    "r_eg": ("e", "g"),
    "r_ge": ("g", "e"),
    "r_ei": ("e", "i"),
    "r_ig": ("i", "g"),
    "r_gi": ("g", "i"),
    "r_ie": ("i", "e"),
}
RADIATIVE = ("r_eg", "r_ge")
PUMP = ("r_eg", "r_ig")  # channels leaving the ground state


@dataclass(frozen=True)
class RateSet:
    r_eg: float
    r_ge: float
    r_ei: float
    r_ig: float
    r_gi: float = 0.0
    r_ie: float = 0.0

    def __post_init__(self):
        for name in TRANSITIONS:
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValidationError(f"{name} must be finite and >= 0, got {v}")

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in TRANSITIONS}

    def rate_matrix(self) -> np.ndarray:
        """3x3 population generator in (g, i, e) order; columns sum to zero."""
        R = np.zeros((3, 3))
        for name, (to, frm) in TRANSITIONS.items():
            k = getattr(self, name)
            R[LEVELS.index(to), LEVELS.index(frm)] += k
            R[LEVELS.index(frm), LEVELS.index(frm)] -= k
        return R

    def without_pump(self) -> "RateSet":
        return replace(self, **{k: 0.0 for k in PUMP})


@dataclass(frozen=True)
class LevelSystem:
    """Level energies in angular-frequency units (hbar = 1).

    The defaults are small, incommensurate frame frequencies: only their
    differences matter for which jump components are secular, and keeping
    them O(1) avoids carrying optical phases through the propagators.
    """

    E_g: float = 0.0
    E_i: float = 0.37
    E_e: float = 1.0
    dipole_sq: float = 1.0  # |<g|z|e>|^2
    h_gi: float = 1.0
    h_ie: float = 1.0

    def __post_init__(self):
        if min(self.dipole_sq, self.h_gi, self.h_ie) < 0:
            raise ValidationError("transition strengths must be >= 0")

    @property
    def energies(self) -> np.ndarray:
        return np.array([self.E_g, self.E_i, self.E_e])

    @property
    def omega_eg(self):
        return self.E_e - self.E_g

    @property
    def omega_ig(self):
        return self.E_i - self.E_g

    @property
    def omega_ei(self):
        return self.E_e - self.E_i


@dataclass(frozen=True)
class DipoleCoupling:
    V_eg: float = 0.0
    V_ig: float = 0.0
    V_ei: float = 0.0

    def is_zero(self) -> bool:
        return self.V_eg == 0 and self.V_ig == 0 and self.V_ei == 0


@dataclass(frozen=True)
class EmitterModel:
    kind: str  # single | two-separate | two-collective
    H: np.ndarray
    channels: tuple
    rates: RateSet
    levels: LevelSystem
    labels: tuple
    coupling: DipoleCoupling | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def n_emitters(self) -> int:
        return 1 if self.kind == "single" else 2

    @property
    def collective(self) -> bool:
        return self.kind == "two-collective"

    @cached_property
    def lindbladian(self) -> Superoperator:
        return build_lindbladian(self.H, self.channels)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def ket(self, label: str) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index(label)] = 1.0
        return v

    def projector(self, label: str) -> np.ndarray:
        v = self.ket(label)
        return np.outer(v, v.conj())

    def ground_state(self) -> np.ndarray:
        return self.projector(self.labels[0])

    def flat(self, ket: str, bra: str) -> int:
        """Flat superoperator index of |ket><bra|."""
        return self.index(ket) * self.dim + self.index(bra)

    def radiative_channels(self) -> list:
        return [c for c in self.channels if c.radiative]

    def emission_operators(self) -> list:
        """Operators whose jumps are detected photons (the e -> g decays)."""
        return [np.sqrt(c.rate) * c.operator for c in self.channels if c.radiative and c.label.startswith("r_ge")]

    def with_rates(self, rates: RateSet) -> "EmitterModel":
        builder = self.meta.get("builder")
        if builder is None:
            raise ConfigurationError("model was not built by a known constructor")
        return builder(rates)


def _local(l: str, m: str) -> np.ndarray:
    s = np.zeros((3, 3), dtype=complex)
    s[LEVELS.index(l), LEVELS.index(m)] = 1.0
    return s


def build_single_nv(rates: RateSet, levels: LevelSystem | None = None) -> EmitterModel:
    levels = levels or LevelSystem()
    H = np.diag(levels.energies).astype(complex)
    channels = []
    for name, (to, frm) in TRANSITIONS.items():
        E = levels.energies
        omega = E[LEVELS.index(frm)] - E[LEVELS.index(to)]
        channels.append(
            JumpChannel(_local(to, frm), getattr(rates, name), frequency=omega, label=name, radiative=name in RADIATIVE)
        )
    return EmitterModel(
        kind="single",
        H=H,
        channels=tuple(channels),
        rates=rates,
        levels=levels,
        labels=LEVELS,
        meta={"builder": lambda r: build_single_nv(r, levels)},
    )


def two_nv_hamiltonian(levels: LevelSystem, coupling: DipoleCoupling | None = None) -> np.ndarray:
    E = levels.energies
    eye = np.eye(3)
    H = np.kron(np.diag(E), eye) + np.kron(eye, np.diag(E))
    H = H.astype(complex)
    if coupling is not None:
        for (a, b), V in (
            (("e", "g"), coupling.V_eg),
            (("i", "g"), coupling.V_ig),
            (("e", "i"), coupling.V_ei),
        ):
            p, q = PAIR_LABELS.index(a + b), PAIR_LABELS.index(b + a)
            H[p, q] += V
            H[q, p] += V
    return H


def davies_components(op: np.ndarray, H: np.ndarray, tol: float = 1e-9) -> list[tuple[float, np.ndarray]]:
    """Split ``op`` into eigenoperators of H: op = sum_w A(w), [H, A(w)] = -w A(w).

    Degenerate eigenvalues (within ``tol``) share a projector; components
    whose Bohr frequencies agree within ``tol`` are merged.
    """
    E, W = np.linalg.eigh(H)
    clusters = []
    for k, e in enumerate(E):
        if clusters and abs(e - E[clusters[-1][0]]) <= tol:
            clusters[-1].append(k)
        else:
            clusters.append([k])
    projs = [(float(np.mean(E[c])), W[:, c] @ W[:, c].conj().T) for c in clusters]
    parts: list[tuple[float, np.ndarray]] = []
    for (ea, Pa), (eb, Pb) in itertools.product(projs, projs):
        A = Pa @ op @ Pb
        if np.max(np.abs(A)) <= 1e-13:
            continue
        w = eb - ea
        for n, (w0, A0) in enumerate(parts):
            if abs(w - w0) <= tol:
                parts[n] = (w0, A0 + A)
                break
        else:
            parts.append((w, A))
    parts.sort(key=lambda p: p[0])
    return parts


def build_two_nv(
    rates: RateSet,
    coupling: DipoleCoupling | None = None,
    collective: bool = True,
    levels: LevelSystem | None = None,
    rates2: RateSet | None = None,
) -> EmitterModel:
    """Two NV centres in the 9-dimensional product space.

    ``collective=False``: each emitter has its own jump operators
    |l><m| x I and I x |l><m| (independent baths).  ``collective=True``:
    identical rates for both emitters and a common bath, so each channel is
    the symmetric operator |l><m| x I + I x |l><m|, resolved into Davies
    components with respect to H0 + V.
    """
    levels = levels or LevelSystem()
    if collective and rates2 is not None and rates2 != rates:
        raise ConfigurationError("collective emission needs identical rates on both emitters")
    rates2 = rates2 or rates
    H = two_nv_hamiltonian(levels, coupling)
    eye = np.eye(3)
    channels = []
    for name, (to, frm) in TRANSITIONS.items():
        s = _local(to, frm)
        ops = [np.kron(s, eye), np.kron(eye, s)]
        radiative = name in RADIATIVE
        if collective:
            k = getattr(rates, name)
            for w, A in davies_components(ops[0] + ops[1], H):
                channels.append(JumpChannel(A, k, frequency=w, label=f"{name}@{w:+.6g}", radiative=radiative))
        else:
            for n, (op, rs) in enumerate(zip(ops, (rates, rates2)), start=1):
                k = getattr(rs, name)
                for w, A in davies_components(op, H):
                    channels.append(JumpChannel(A, k, frequency=w, label=f"{name}[{n}]@{w:+.6g}", radiative=radiative))
    kind = "two-collective" if collective else "two-separate"
    return EmitterModel(
        kind=kind,
        H=H,
        channels=tuple(channels),
        rates=rates,
        levels=levels,
        labels=PAIR_LABELS,
        coupling=coupling,
        meta={
            "builder": lambda r: build_two_nv(r, coupling, collective, levels, None if collective else rates2),
            "rates2": rates2,
        },
    )


def eigenfrequencies(model: EmitterModel, tol: float = 1e-9) -> np.ndarray:
    """Distinct eigenvalues of the system Hamiltonian (hbar = 1)."""
    E = np.linalg.eigvalsh(model.H)
    out = [E[0]]
    for e in E[1:]:
        if e - out[-1] > tol:
            out.append(e)
    return np.array(out)


def bohr_frequencies(model: EmitterModel, tol: float = 1e-9) -> np.ndarray:
    """Distinct positive frequencies carried by the model's jump components."""
    ws = sorted(abs(c.frequency) for c in model.channels if c.rate > 0 and abs(c.frequency) > tol)
    out: list[float] = []
    for w in ws:
        if not out or w - out[-1] > tol:
            out.append(w)
    return np.array(out)


def dicke_ladder(normalized: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Raising operators gg -> (eg+ge) and (eg+ge) -> ee on the 9-level space."""
    def ket(lbl):
        v = np.zeros(9, dtype=complex)
        v[PAIR_LABELS.index(lbl)] = 1.0
        return v

    sym = ket("eg") + ket("ge")
    if normalized:
        sym = sym / np.sqrt(2.0)
    s1 = np.outer(sym, ket("gg"))
    s2 = np.outer(ket("ee"), sym.conj())
    return s1, s2


# --- single-hole spectrum --------------------------------------------------


@dataclass(frozen=True)
class SingleHoleSolution:
    degenerate: float
    lam_plus: float
    lam_minus: float
    alpha1: complex
    beta1: float
    alpha2: complex
    beta2: float
    delta: float
    orbitals: np.ndarray  # columns a1, a1', e_x, e_y in the (s1, s2, s3, sN) basis

    @property
    def energies(self) -> np.ndarray:
        return np.array([self.lam_minus, self.lam_plus, self.degenerate, self.degenerate])


def single_hole_matrix(V_C: float, h_C: float, h_N: complex, V_N: float) -> np.ndarray:
    M = np.full((4, 4), h_C, dtype=complex)
    np.fill_diagonal(M, V_C)
    M[:3, 3] = h_N
    M[3, :3] = np.conj(h_N)
    M[3, 3] = V_N
    return M


def solve_single_hole(V_C: float, h_C: float, h_N: complex, V_N: float) -> SingleHoleSolution:
    a = V_C + 2 * h_C
    b = V_N
    c = np.sqrt(3.0) * complex(h_N)
    cc = abs(c) ** 2
    delta = float(np.sqrt((a - b) ** 2 + 4 * cc))
    lam_p = 0.5 * (a + b + delta)
    lam_m = 0.5 * (a + b - delta)
    if delta == 0.0:
        alpha1, beta1, alpha2, beta2 = 0.0, 1.0, 1.0, 0.0
    else:
        # s = a-b+delta and t = delta-a+b, each formed without cancellation
        s = a - b + delta if a >= b else 4 * cc / (delta - (a - b))
        t = delta - (a - b) if a <= b else 4 * cc / (delta + (a - b))
        if s > 0:
            alpha1 = -c / np.sqrt(delta * s / 2)
            beta1 = np.sqrt(s / (2 * delta))
        else:
            alpha1, beta1 = 1.0, 0.0
        if t > 0:
            alpha2 = c / np.sqrt(delta * t / 2)
            beta2 = np.sqrt(t / (2 * delta))
        else:
            alpha2, beta2 = 1.0, 0.0
    sC = np.array([1, 1, 1, 0]) / np.sqrt(3.0)
    sN = np.array([0, 0, 0, 1.0])
    a1 = alpha1 * sC + beta1 * sN
    a1p = alpha2 * sC + beta2 * sN
    ex = np.array([2, -1, -1, 0]) / np.sqrt(6.0)
    ey = np.array([0, 1, -1, 0]) / np.sqrt(2.0)
    orb = np.column_stack([a1, a1p, ex, ey]).astype(complex)
    return SingleHoleSolution(
        degenerate=V_C - h_C,
        lam_plus=lam_p,
        lam_minus=lam_m,
        alpha1=complex(alpha1),
        beta1=float(beta1),
        alpha2=complex(alpha2),
        beta2=float(beta2),
        delta=delta,
        orbitals=orb,
    )
