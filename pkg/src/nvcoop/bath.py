"""Radiative rates from bath correlation functions.

Two baths are modelled: the broadband thermal radiation field, giving the
position-dependent collective rates gamma_ij, and a single coherent pump
mode.  Both use

    int_0^inf ds e^{-ixs} = pi delta(x) - i P(1/x)
    int_0^inf ds e^{+ixs} = k pi delta(x) - i P(1/x)

with ``delta_coefficient`` k.  The default k = 3 reproduces the prefactors
4 w^3 d^2 / 3c^3 and (1 - 2|alpha|^2) that the rest of the toolkit is
calibrated against; k = 1 is the textbook value.  Note that with k = 1 and
N(-w) = -(1 + N(w)) the thermal real part vanishes identically.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ConfigurationError, DomainError, ValidationError
from .numerics import pv_integral, special_f


@dataclass(frozen=True)
class EmitterGeometry:
    r1: tuple = (0.0, 0.0, 0.0)
    r2: tuple = (1.0, 0.0, 0.0)
    dipole: tuple = (0.0, 0.0, 1.0)
    literal_angle: bool = False  # use |d.r|^2 / (d^2 r^2) for cos(theta)

    def __post_init__(self):
        for name in ("r1", "r2", "dipole"):
            v = np.asarray(getattr(self, name))
            if v.shape != (3,):
                raise ValidationError(f"{name} must be a 3-vector")
        if np.linalg.norm(np.asarray(self.dipole, dtype=complex)) == 0:
            raise ValidationError("dipole must be nonzero")

    def position(self, i: int) -> np.ndarray:
        if i not in (1, 2):
            raise ValidationError(f"emitter index must be 1 or 2, got {i}")
        return np.asarray(self.r1 if i == 1 else self.r2, dtype=float)

    @property
    def d_sq(self) -> float:
        d = np.asarray(self.dipole, dtype=complex)
        return float(np.vdot(d, d).real)

    def separation(self, i: int, j: int) -> float:
        return float(np.linalg.norm(self.position(i) - self.position(j)))

    def x(self, omega: float, i: int, j: int, c: float = 1.0) -> float:
        return omega / c * self.separation(i, j)

    def cos_theta(self, i: int, j: int) -> float:
        r = self.position(i) - self.position(j)
        rn = np.linalg.norm(r)
        if rn == 0:
            return 1.0  # angle is irrelevant at zero separation: j2(0) = 0
        d = np.asarray(self.dipole, dtype=complex)
        proj = abs(np.dot(d, r))
        u = proj / (np.sqrt(self.d_sq) * rn)
        if self.literal_angle:
            u = u**2
        return float(min(u, 1.0))


@dataclass(frozen=True)
class BathSpec:
    beta: float = 1.0  # inverse temperature, in inverse frequency units (hbar = 1)
    alpha_sq: float = 0.0
    omega_alpha: float = 1.0
    d_alpha_sq: float = 1.0
    L: float = 1.0
    c: float = 1.0
    delta_coefficient: float = 3.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValidationError("beta must be > 0")
        if self.alpha_sq < 0 or self.d_alpha_sq < 0:
            raise ValidationError("|alpha|^2 and |d_alpha|^2 must be >= 0")
        if not (self.L > 0 and self.c > 0):
            raise ValidationError("L and c must be > 0")

    def occupation(self, omega):
        """Bose occupation 1 / (exp(beta w) - 1)."""
        w = np.asarray(omega, dtype=float)
        if np.any(w <= 0):
            raise DomainError("occupation needs omega > 0")
        return 1.0 / np.expm1(self.beta * w)


def _f(geom: EmitterGeometry, omega_k, i: int, j: int, c: float, literal_bessel: bool):
    x = np.asarray(omega_k, dtype=float) / c * geom.separation(i, j)
    return special_f(x, np.arccos(geom.cos_theta(i, j)), literal=literal_bessel)


def gamma_thermal(
    omega: float,
    geom: EmitterGeometry,
    bath: BathSpec,
    i: int,
    j: int,
    imaginary: bool = False,
    cutoff: float | None = None,
    literal_bessel: bool = False,
) -> complex:
    """gamma_ij(w) of the thermal field.

    Real part (2/3c^3)(k - 1) w^3 d^2 f(w|r_i - r_j|/c, theta_ij)(1 + N(w)),
    i.e. 4 w^3 d^2 f (1 + N) / 3c^3 for k = 3.  The imaginary part is the
    principal-value frequency integral truncated at ``cutoff``.
    """
    if not omega > 0:
        raise DomainError("gamma_thermal needs omega > 0")
    c = bath.c
    d2 = geom.d_sq
    f = _f(geom, omega, i, j, c, literal_bessel)
    re = 2.0 / (3.0 * c**3) * (bath.delta_coefficient - 1.0) * omega**3 * d2 * f * (1.0 + bath.occupation(omega))
    if not imaginary:
        return complex(float(re), 0.0)
    if cutoff is None:
        raise ConfigurationError("the imaginary part needs an explicit frequency cutoff")
    if not cutoff > omega:
        raise DomainError("cutoff must exceed omega")

    def w3f(wk):
        wk = np.asarray(wk, dtype=float)
        return wk**3 * _f(geom, wk, i, j, c, literal_bessel)

    def g_pole(wk):
        # (1 + N)/(w - wk) = -(1 + N)/(wk - w)
        return -w3f(wk) * (1.0 + bath.occupation(wk))

    pv = pv_integral(g_pole, omega, cutoff)
    reg, _ = integrate.quad(lambda wk: float(w3f(wk) * bath.occupation(wk) / (omega + wk)), 0.0, cutoff, limit=200)
    return complex(float(re), d2 * (pv + reg))


def gamma_coherent(omega: float, bath: BathSpec, imaginary: bool = False) -> complex:
    """Rate induced by the coherent pump mode.

    Real part (2 pi^2 w |d_alpha|^2 / L^3)(1 + |alpha|^2 - k |alpha|^2), which
    is (1 - 2|alpha|^2) for k = 3.
    """
    if not omega > 0:
        raise DomainError("gamma_coherent needs omega > 0")
    a2 = bath.alpha_sq
    pref = 2.0 * np.pi * bath.d_alpha_sq / bath.L**3
    re = np.pi * pref * omega * (1.0 + a2 - bath.delta_coefficient * a2)
    if not imaginary:
        return complex(float(re), 0.0)
    wa = bath.omega_alpha
    if abs(wa - omega) <= 1e-12 * max(wa, omega):
        raise DomainError("omega coincides with the pump frequency: principal value pole on the node")
    im = -pref * wa * (a2 / (wa + omega) + (1.0 + a2) / (wa - omega))
    return complex(float(re), float(im))


def gamma_total(omega: float, geom: EmitterGeometry, bath: BathSpec, i: int, j: int, **kw) -> dict:
    """Thermal and coherent contributions reported separately plus their sum.

    The two terms carry different normalisations (continuum vs cavity
    length L), so the sum is only meaningful in consistent units.
    """
    imaginary = kw.pop("imaginary", False)
    th = gamma_thermal(omega, geom, bath, i, j, imaginary=imaginary, **kw)
    co = gamma_coherent(omega, bath, imaginary=imaginary)
    return {"thermal": th, "coherent": co, "total": th + co}


def gamma_matrix(omega: float, geom: EmitterGeometry, bath: BathSpec) -> np.ndarray:
    """2x2 matrix of real thermal rates gamma_ij(w)."""
    G = np.empty((2, 2))
    for i in (1, 2):
        for j in (1, 2):
            G[i - 1, j - 1] = gamma_thermal(omega, geom, bath, i, j).real
    return G
