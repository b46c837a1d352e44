"""Second-order correlation functions and intensity decays.

Closed forms are always paired with the quantum-regression oracle built
from the full Lindbladian, so every curve can report how far it is from
the numerically exact answer.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import numerics
from .curves import DecayCurve, G2Curve
from .errors import DegenerateSourceError, SingularParameterError, StructureError, WrongModelError
from .lindblad import partition_blocks, propagate, regression_g2, steady_state
from .nvmodel import PAIR_LABELS, EmitterModel, RateSet

# operator sector that carries the collective g2 numerator, in the order used
# by the block formula (|ge><gg| first, the two |ee><.| coherences last)
SECTOR_8 = (
    ("ge", "gg"), ("ie", "gi"), ("ie", "ig"), ("eg", "gg"),
    ("ei", "gi"), ("ei", "ig"), ("ee", "ge"), ("ee", "eg"),
)
SECTOR_J1 = (("ee", "ge"), ("ee", "eg"))
SECTOR_J2 = (("ge", "gg"), ("eg", "gg"))


@dataclass(frozen=True)
class SingleSpectrum:
    lam1: complex
    lam2: complex
    a: complex
    rho_e: float


def _single_steady(rates: RateSet) -> np.ndarray:
    R = rates.rate_matrix()
    return numerics.nullspace_steady(R).real


def single_spectrum(rates: RateSet, exact: bool = True) -> SingleSpectrum:
    """Decay constants and shelving amplitude of the single-emitter g2.

    ``exact=False`` gives the weak-shelving approximations
    lam1 = r_eg + r_ge, lam2 = r_ei + r_ig r_ge / (r_eg + r_ge).
    """
    if rates.r_eg == 0:
        raise DegenerateSourceError("r_eg = 0: the emitter is never excited")
    A, B, C, D = rates.r_eg, rates.r_ig, rates.r_ei, rates.r_ge
    if not exact:
        if C == 0:
            raise SingularParameterError("r_ei = 0 makes the shelving amplitude undefined")
        lam1 = A + D
        lam2 = C + B * D / (A + D)
        a = D * B / (C * (A + D))
        rho_e = float(_single_steady(rates)[2]) if rates.r_ig == 0 or C > 0 else 0.0
        return SingleSpectrum(lam1, lam2, a, rho_e)
    R = rates.rate_matrix()
    s = -np.trace(R)
    # sum of principal 2x2 minors = product of the two nonzero eigenvalues
    p = sum(R[i, i] * R[j, j] - R[i, j] * R[j, i] for i in range(3) for j in range(i + 1, 3))
    disc = np.sqrt(complex(s * s - 4 * p))
    lam1, lam2 = 0.5 * (s + disc), 0.5 * (s - disc)
    pop = _single_steady(rates)
    rho_e = float(pop[2])
    if rho_e <= 1e-300:
        raise DegenerateSourceError("steady-state excited population is zero")
    if abs(lam1 - lam2) <= 1e-12 * abs(s):
        a = np.nan  # repeated root; handled in the evaluator
    else:
        a = (A / rho_e - lam1) / (lam1 - lam2)
    return SingleSpectrum(complex(lam1), complex(lam2), complex(a), rho_e)


def _exp_divided_difference(l1, l2, tau):
    """(exp(-l1 tau) - exp(-l2 tau)) / (l1 - l2).

    Where x = (l1 - l2) tau / 2 is small the identity
    -tau exp(-m tau) sinh(x) / x, m = (l1 + l2) / 2, avoids the cancellation.
    """
    tau = np.asarray(tau, dtype=float)
    x = 0.5 * (l1 - l2) * tau
    small = np.abs(x) < 1e-3
    out = np.empty(tau.shape, dtype=complex)
    ts, xs = tau[small], x[small]
    out[small] = -ts * np.exp(-0.5 * (l1 + l2) * ts) * (1 + xs**2 / 6 + xs**4 / 120)
    tb = tau[~small]
    out[~small] = (np.exp(-l1 * tb) - np.exp(-l2 * tb)) / (l1 - l2)
    return out


def g2_closed_single(rates: RateSet, tau, exact: bool = False) -> G2Curve:
    """1 - (1 + a) exp(-lam1 tau) + a exp(-lam2 tau).

    With ``exact=True`` the decay constants are the exact nonzero
    eigenvalues of the rate matrix and ``a`` follows from g2(0) = 0 and the
    initial slope r_eg / rho_e; this matches the regression oracle to
    rounding.  The default uses the weak-shelving approximations.
    """
    tau = np.asarray(tau, dtype=float)
    if not exact and rates.r_ig + rates.r_ei > 0.1 * rates.r_eg:
        warnings.warn("r_ig + r_ei exceeds 0.1 r_eg; the approximate decay constants are unreliable", stacklevel=2)
    sp = single_spectrum(rates, exact=exact)
    if exact:
        # 1 - e1 - c (e1 - e2) / (lam1 - lam2) with c = a (lam1 - lam2); the
        # divided difference is evaluated without cancellation near lam1 = lam2
        c = rates.r_eg / sp.rho_e - sp.lam1
        vals = 1.0 - np.exp(-sp.lam1 * tau) - c * _exp_divided_difference(sp.lam1, sp.lam2, tau)
    else:
        vals = 1.0 - (1.0 + sp.a) * np.exp(-sp.lam1 * tau) + sp.a * np.exp(-sp.lam2 * tau)
    meta = {"lam1": sp.lam1, "lam2": sp.lam2, "a": sp.a, "exact": exact}
    return G2Curve(tau=tau, values=np.real(vals), label="closed-single" + ("-exact" if exact else ""), meta=meta)


def model_steady_state(model: EmitterModel) -> np.ndarray:
    """Steady state; for collective models the kernel is degenerate (exchange
    symmetry) and the state reached from the ground state is returned."""
    init = model.ground_state() if model.n_emitters == 2 else None
    return steady_state(model.lindbladian, initial=init)


def g2_oracle(model: EmitterModel, tau, rho_ss=None) -> G2Curve:
    """Quantum-regression g2 over the model's detected (e -> g) jump operators."""
    rho = model_steady_state(model) if rho_ss is None else rho_ss
    curve = regression_g2(model.lindbladian, model.emission_operators(), tau, rho_ss=rho)
    curve.label = "regression"
    return curve


def _flat_indices(model: EmitterModel, pairs) -> list[int]:
    return [model.flat(k, b) for k, b in pairs]


def sector_block(model: EmitterModel, pairs, check_closed: bool = True) -> np.ndarray:
    idx = _flat_indices(model, pairs)
    if check_closed:
        part = partition_blocks(model.lindbladian)
        blk = set(part.block_of(idx[0]).tolist())
        if blk != set(idx):
            names = [f"|{PAIR_LABELS[k // 9]}><{PAIR_LABELS[k % 9]}|" for k in sorted(blk)]
            raise StructureError(f"sector does not form a closed block; its block is {names}")
    return model.lindbladian.block(idx)


def rho_ee_ee(model: EmitterModel) -> float:
    rho = model_steady_state(model)
    val = float(rho[model.index("ee"), model.index("ee")].real)
    if val < 1e-14:
        raise DegenerateSourceError("steady-state |ee> population vanishes; g2 undefined")
    return val


def _rotating(block: np.ndarray, omega: float) -> np.ndarray:
    # remove the bare optical phase exp(-i omega t) common to the sector
    return block + 1j * omega * np.eye(block.shape[0])


def distinct_decay_constants(values, rtol: float = 1e-6) -> np.ndarray:
    """Distinct -Re(lambda) > 0, ascending."""
    rates = sorted(-np.real(values))
    floor = 1e-10 * max(max(np.abs(rates), default=0.0), 1e-300)
    out: list[float] = []
    for r in rates:
        if r <= floor:
            continue
        if not out or abs(r - out[-1]) > rtol * max(abs(r), 1e-300):
            out.append(r)
    return np.array(out)


def _is_uncoupled(model: EmitterModel) -> bool:
    return model.coupling is None or model.coupling.is_zero()


def g2_block_noninteracting(model: EmitterModel, tau, with_oracle: bool = True) -> G2Curve:
    """Block formula for two collective emitters without dipole coupling.

    Evaluates ((D_1 + D_4)^2 + (D_7 + D_8)^2) / rho_ee,ee^2 where D_k are the
    diagonal entries of exp(J tau) for the 8x8 sector block J in the order of
    ``SECTOR_8``.  The formula is kept as written; ``meta['oracle']`` holds the
    regression curve and ``meta['max_discrepancy']`` the gap between them.
    """
    if not model.collective or not _is_uncoupled(model):
        raise WrongModelError("block formula needs the collective two-emitter model without coupling")
    tau = np.asarray(tau, dtype=float)
    J = _rotating(sector_block(model, SECTOR_8), model.levels.omega_eg)
    rho = rho_ee_ee(model)
    vals = np.empty(tau.size)
    for n, t in enumerate(tau):
        D = np.diag(numerics.expm(J, t))
        vals[n] = (((D[0] + D[3]) ** 2 + (D[6] + D[7]) ** 2) / rho**2).real
    eigs = numerics.eig(J).values
    meta = {"eigenvalues": eigs, "decay_constants": distinct_decay_constants(eigs), "rho_ee": rho}
    if with_oracle:
        oracle = g2_oracle(model, tau)
        meta["oracle"] = oracle
        meta["max_discrepancy"] = float(np.max(np.abs(oracle.values - vals)))
    return G2Curve(tau=tau, values=vals, label="block-noninteracting", meta=meta)


def symmetric_block_params(J: np.ndarray, tol: float = 1e-10) -> tuple[complex, complex]:
    J = np.asarray(J)
    if J.shape != (2, 2):
        raise StructureError(f"expected a 2x2 block, got {J.shape}")
    scale = max(1.0, float(np.max(np.abs(J))))
    if abs(J[0, 0] - J[1, 1]) > tol * scale or abs(J[0, 1] - J[1, 0]) > tol * scale:
        raise StructureError("block is not of the form [[a, b], [b, a]]")
    return complex(J[0, 0]), complex(J[0, 1])


def interacting_closed_form(a1, b1, a2, b2, tau, rho_ee: float = 1.0) -> np.ndarray:
    """e^{a1 t}(e^{b1 t} + e^{-b1 t})(e^{(a2+b2) t} + e^{(a2-b2) t}) / rho_ee^2."""
    t = np.asarray(tau, dtype=float)
    # expanded into the four combined exponents so no factor overflows on its own
    num = sum(np.exp(k * t) for k in interacting_exponents(a1, b1, a2, b2))
    return num / rho_ee**2


def interacting_expm_oracle(J1, J2, tau, rho_ee: float = 1.0) -> np.ndarray:
    """tr exp(J1 t) * tr exp(J2 t) / rho_ee^2 by direct matrix exponentials."""
    t = np.atleast_1d(np.asarray(tau, dtype=float))
    out = np.array([np.trace(numerics.expm(J1, s)) * np.trace(numerics.expm(J2, s)) for s in t])
    return out / rho_ee**2


def interacting_exponents(a1, b1, a2, b2) -> list[complex]:
    return [a1 + s1 * b1 + a2 + s2 * b2 for s1 in (1, -1) for s2 in (1, -1)]


def g2_closed_interacting(model: EmitterModel, tau, with_oracle: bool = True) -> G2Curve:
    """Four-exponential form for dipole-coupled collective emitters.

    (a1, b1) and (a2, b2) are read from the 2x2 blocks J1 ({|ee><ge|, |ee><eg|})
    and J2 ({|ge><gg|, |eg><gg|}) in the frame rotating at the bare optical
    frequency.  Real part returned.
    """
    if not model.collective or _is_uncoupled(model):
        raise WrongModelError("four-exponential form needs the dipole-coupled collective model")
    tau = np.asarray(tau, dtype=float)
    w = model.levels.omega_eg
    J1 = _rotating(sector_block(model, SECTOR_J1), w)
    J2 = _rotating(sector_block(model, SECTOR_J2), w)
    a1, b1 = symmetric_block_params(J1)
    a2, b2 = symmetric_block_params(J2)
    rho = rho_ee_ee(model)
    vals = interacting_closed_form(a1, b1, a2, b2, tau, rho).real
    meta = {
        "a1": a1, "b1": b1, "a2": a2, "b2": b2, "rho_ee": rho,
        "exponents": interacting_exponents(a1, b1, a2, b2),
        # the diagonal-product sum as written is half the trace product
        "diagonal_sum": np.array([
            sum(numerics.expm(J1, t)[j, j] * numerics.expm(J2, t)[j, j] for j in range(2)).real for t in tau
        ]) / rho**2,
    }
    if with_oracle:
        oracle = g2_oracle(model, tau)
        meta["oracle"] = oracle
        meta["max_discrepancy"] = float(np.max(np.abs(oracle.values - vals)))
    return G2Curve(tau=tau, values=vals, label="closed-interacting", meta=meta)


def g2_exponents(model: EmitterModel, rtol: float = 1e-6) -> np.ndarray:
    """Decay constants that can appear in the regression g2 of ``model``.

    These are the nonzero eigenvalues of the population block reached from
    the emission-conditioned state.
    """
    L = model.lindbladian
    part = partition_blocks(L)
    b = part.block_of(model.flat(model.labels[0], model.labels[0]))
    return distinct_decay_constants(numerics.eig(L.block(b)).values, rtol)


def initial_state(model: EmitterModel, kind: str = "excited") -> np.ndarray:
    """Pulse-prepared state: 'excited' (|e> or |ee>), 'symmetric' (bright
    single-excitation Dicke state), or 'ground'."""
    if kind == "ground":
        return model.ground_state()
    if kind == "excited":
        return model.projector("e" if model.n_emitters == 1 else "ee")
    if kind == "symmetric":
        if model.n_emitters != 2:
            raise WrongModelError("the symmetric Dicke state needs two emitters")
        v = (model.ket("eg") + model.ket("ge")) / np.sqrt(2.0)
        return np.outer(v, v.conj())
    raise ValueError(f"unknown excitation {kind!r}")


def decay_curve(model: EmitterModel, times, excitation: str = "excited", pump_off: bool = True) -> DecayCurve:
    """Radiative flux sum_k <A_k^+ A_k>(t) after an instantaneous pulse.

    A_k are the detected e -> g jump operators (rate r_ge, summed over
    emitters and frequency components).  By default the pump channels are
    switched off after the pulse.
    """
    times = np.asarray(times, dtype=float)
    m = model.with_rates(model.rates.without_pump()) if pump_off else model
    rho0 = initial_state(m, excitation)
    d = m.dim
    vecs = propagate(m.lindbladian, rho0.ravel(), times).reshape(times.size, d, d)
    N = sum(A.conj().T @ A for A in m.emission_operators())
    flux = np.einsum("ij,tji->t", N, vecs).real
    return DecayCurve(time=times, intensity=np.maximum(flux, 0.0), label=f"decay-{excitation}")
