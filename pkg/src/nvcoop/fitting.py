"""Damped least squares and the exponential model family.

The Levenberg-Marquardt core works on an internal parameter vector in
which strictly positive quantities (time constants, rates) are carried as
logarithms.  Jacobians come from the complex-step derivative, which is
exact to rounding for the analytic models used here.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .curves import G2Curve
from .errors import InsufficientDataError, RankError, ValidationError


class MergedExponentWarning(UserWarning):
    pass


class ModelMismatchWarning(UserWarning):
    pass


# --- model functions ---------------------------------------------------------

def monoexp(t, y0, a1, t1):
    return y0 + a1 * np.exp(-np.asarray(t) / t1)


def biexp(t, y0, a1, t1, a2, t2):
    t = np.asarray(t)
    return y0 + a1 * np.exp(-t / t1) + a2 * np.exp(-t / t2)


def g2_3level(tau, a, tau1, tau2):
    s = np.abs(np.asarray(tau))
    return 1 - (1 + a) * np.exp(-s / tau1) + a * np.exp(-s / tau2)


def g2_4level(tau, a1, a2, tau1, tau2, tau3):
    s = np.abs(np.asarray(tau))
    return 1 - (1 + a1 + a2) * np.exp(-s / tau1) + a1 * np.exp(-s / tau2) + a2 * np.exp(-s / tau3)


@dataclass(frozen=True)
class FitModel:
    func: Callable
    names: tuple
    positive: tuple  # names carried in log space


MODELS = {
    "exp": FitModel(monoexp, ("y0", "a1", "t1"), ("t1",)),
    "biexp": FitModel(biexp, ("y0", "a1", "t1", "a2", "t2"), ("t1", "t2")),
    "g2_3level": FitModel(g2_3level, ("a", "tau1", "tau2"), ("tau1", "tau2")),
    "g2_4level": FitModel(g2_4level, ("a1", "a2", "tau1", "tau2", "tau3"), ("tau1", "tau2", "tau3")),
}


# --- Levenberg-Marquardt core -------------------------------------------------

@dataclass
class LMResult:
    p: np.ndarray
    cost: float
    converged: bool
    iterations: int
    jac: np.ndarray
    reason: str


def complex_step_jacobian(fun: Callable, q: np.ndarray, h: float = 1e-30) -> np.ndarray:
    cols = []
    for k in range(q.size):
        dq = q.astype(complex)
        dq[k] += 1j * h
        cols.append(np.imag(fun(dq)) / h)
    return np.column_stack(cols)


def levenberg_marquardt(
    fun: Callable,
    q0,
    max_iter: int = 500,
    xtol: float = 1e-10,
    gtol: float = 1e-12,
    jac: Callable | None = None,
) -> LMResult:
    """Minimise 0.5 |fun(q)|^2.

    ``fun`` must accept complex arguments (complex-step Jacobian) unless
    ``jac`` is supplied.  Converged when an accepted step is below ``xtol``
    relative to |q| or the scaled gradient is below ``gtol``.
    """
    # runaway trial steps may overflow; non-finite costs are rejected below
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        return _lm_loop(fun, q0, max_iter, xtol, gtol, jac)


def _lm_loop(fun, q0, max_iter, xtol, gtol, jac):
    jac = jac or (lambda q: complex_step_jacobian(fun, q))
    q = np.asarray(q0, dtype=float).copy()
    r = np.real(fun(q))
    cost = 0.5 * float(r @ r)
    J = jac(q)
    lam = 1e-3
    nu = 2.0
    for it in range(1, max_iter + 1):
        g = J.T @ r
        if np.max(np.abs(g)) <= gtol * max(1.0, cost):
            return LMResult(q, cost, True, it, J, "gradient")
        A = J.T @ J
        d = np.diag(A).copy()
        d[d == 0] = 1.0
        try:
            step = np.linalg.solve(A + lam * np.diag(d), -g)
        except np.linalg.LinAlgError:
            lam *= nu
            nu *= 2
            continue
        q_new = q + step
        r_new = np.real(fun(q_new))
        cost_new = 0.5 * float(r_new @ r_new)
        if np.isfinite(cost_new) and cost_new <= cost:
            rho = (cost - cost_new) / max(0.5 * float(step @ (lam * d * step - g)), 1e-300)
            small = np.linalg.norm(step) <= xtol * (np.linalg.norm(q) + xtol)
            q, r, cost = q_new, r_new, cost_new
            J = jac(q)
            lam *= max(1 / 3, 1 - (2 * rho - 1) ** 3)
            nu = 2.0
            if small:
                return LMResult(q, cost, True, it, J, "step")
        else:
            lam *= nu
            nu *= 2
            if lam > 1e20:
                return LMResult(q, cost, False, it, J, "damping overflow")
    return LMResult(q, cost, False, max_iter, J, "max iterations")


# --- curve fitting ------------------------------------------------------------

@dataclass
class FitResult:
    model: str
    params: dict
    errors: dict
    residual_norm: float
    chi2_red: float
    condition: float
    converged: bool
    iterations: int
    covariance: np.ndarray | None = None
    n_points: int = 0

    def __getitem__(self, name):
        return self.params[name]

    def to_text(self) -> str:
        lines = [f"model = {self.model}", f"converged = {str(self.converged).lower()}",
                 f"iterations = {self.iterations}", f"points = {self.n_points}",
                 f"residual_norm = {self.residual_norm:.10e}", f"chi2_red = {self.chi2_red:.10e}",
                 f"condition = {self.condition:.6e}"]
        for k, v in self.params.items():
            lines.append(f"{k} = {v:.10e} +/- {self.errors.get(k, float('nan')):.3e}")
        return "\n".join(lines) + "\n"


def _to_internal(p: np.ndarray, logmask: np.ndarray) -> np.ndarray:
    q = p.astype(float).copy()
    if np.any(p[logmask] <= 0):
        raise ValidationError("positive parameters need positive seeds")
    q[logmask] = np.log(p[logmask])
    return q


def _to_physical(q, logmask):
    p = q.astype(complex) if np.iscomplexobj(q) else q.astype(float)
    p = p.copy()
    p[logmask] = np.exp(q[logmask])
    return p


def _fit_vector(f, x, y, w, seeds, logmask, max_iter=500):
    sw = np.sqrt(w)

    def resid(q):
        return sw * (f(x, *_to_physical(q, logmask)) - y)

    res = None
    for p0 in seeds:
        trial = levenberg_marquardt(resid, _to_internal(np.asarray(p0, dtype=float), logmask), max_iter=max_iter)
        if res is None or (trial.converged, -trial.cost) > (res.converged, -res.cost):
            res = trial
    p = _to_physical(res.p, logmask)
    # covariance in physical parameters
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        Jp = complex_step_jacobian(lambda pp: sw * (f(x, *pp) - y), p)
    s = np.linalg.svd(Jp, compute_uv=False)
    cond = float(s[0] / s[-1]) if s[-1] > 0 else np.inf
    n, k = y.size, p.size
    if not np.isfinite(cond) or cond > 1e14:
        raise RankError(f"Jacobian is numerically singular (condition {cond:.3e})")
    chi2 = 2 * res.cost
    dof = max(n - k, 1)
    cov = np.linalg.inv(Jp.T @ Jp) * (chi2 / dof)
    return p, res, cov, cond, chi2 / dof


def _check_data(x, y, w, nparam):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("x and y must be 1-d arrays of equal length")
    if x.size < 3 * nparam:
        raise InsufficientDataError(f"need at least {3 * nparam} points for {nparam} parameters, got {x.size}")
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    if w.shape != y.shape or np.any(~(w > 0)):
        raise ValidationError("weights must be positive and match the data")
    return x, y, w


def _loglinear_tau(x, y, base):
    """Time constant from a straight-line fit of log|y - base| against x."""
    z = np.abs(y - base)
    ok = z > 1e-12 * max(np.max(z), 1e-300)
    if np.count_nonzero(ok) < 2:
        return None
    slope = np.polyfit(x[ok], np.log(z[ok]), 1)[0]
    return -1.0 / slope if slope < 0 else None


def seed_parameters(model: str, x, y) -> dict:
    """Heuristic starting point: log-linear slopes on early and late segments."""
    x = np.abs(np.asarray(x, dtype=float))
    order = np.argsort(x)
    x, y = x[order], np.asarray(y, dtype=float)[order]
    span = x[-1] - x[0] if x.size > 1 else 1.0
    n = x.size
    early, late = slice(0, max(3, n // 10)), slice(n // 3, n)
    if model == "exp":
        y0 = float(np.median(y[-max(3, n // 20):]))
        t1 = _loglinear_tau(x[late], y[late], y0) or _loglinear_tau(x, y, y0) or span / 3
        return {"y0": y0, "a1": float(y[0] - y0), "t1": t1}
    if model == "biexp":
        y0 = float(np.median(y[-max(3, n // 20):]))
        t1 = _loglinear_tau(x[late], y[late], y0) or span / 3
        a1 = max(float(y[0] - y0), 1e-12) * 0.8
        t2 = min(_loglinear_tau(x[early], y[early], y0) or t1 / 10, t1 / 3)
        return {"y0": y0, "a1": a1, "t1": t1, "a2": 0.2 * a1, "t2": t2}
    # g2 forms: tau1 from the first crossing of 1 - 1/e, tau2 from the
    # bunching tail after the maximum
    k1 = np.flatnonzero(y >= 1 - np.exp(-1))
    tau1 = float(x[k1[0]]) if k1.size and x[k1[0]] > 0 else span / 50
    imax = int(np.argmax(y))
    tail = slice(imax, n)
    tau_tail = _loglinear_tau(x[tail], y[tail], 1.0) if y[imax] > 1 else None
    tau_tail = max(tau_tail or 10 * tau1, 3 * tau1)
    a = max(float(y[imax] - 1), 1e-3)
    if model == "g2_3level":
        return {"a": a, "tau1": tau1, "tau2": tau_tail}
    if model == "g2_4level":
        return {"a1": a / 2, "a2": a / 2, "tau1": tau1, "tau2": np.sqrt(tau1 * tau_tail), "tau3": tau_tail}
    raise ValidationError(f"unknown model {model!r}")


def fit_curve(model: str, x, y, weight=None, init: dict | None = None, max_iter: int = 500) -> FitResult:
    """Weighted nonlinear least squares for one of ``MODELS``."""
    if model not in MODELS:
        raise ValidationError(f"unknown model {model!r}; choose from {sorted(MODELS)}")
    spec = MODELS[model]
    x, y, w = _check_data(x, y, weight, len(spec.names))
    seed = seed_parameters(model, x, y)
    if init:
        unknown = set(init) - set(spec.names)
        if unknown:
            raise ValidationError(f"unknown parameters {sorted(unknown)}")
        seed.update(init)
    p0 = np.array([seed[k] for k in spec.names], dtype=float)
    logmask = np.array([k in spec.positive for k in spec.names])
    seeds = [p0]
    if not init:
        # rescaled time constants guard against a poor heuristic seed
        for factor in (0.3, 3.0):
            alt = p0.copy()
            alt[logmask] *= factor
            seeds.append(alt)
    p, res, cov, cond, chi2_red = _fit_vector(spec.func, x, y, w, seeds, logmask, max_iter)
    p = np.real(p)
    errs = np.sqrt(np.clip(np.diag(cov), 0, None)) if res.converged else np.full(p.size, np.nan)
    return FitResult(
        model=model,
        params=dict(zip(spec.names, map(float, p))),
        errors=dict(zip(spec.names, map(float, errs))),
        residual_norm=float(np.sqrt(2 * res.cost)),
        chi2_red=float(chi2_red),
        condition=cond,
        converged=res.converged,
        iterations=res.iterations,
        covariance=cov if res.converged else None,
        n_points=int(x.size),
    )


def poisson_weights(counts) -> np.ndarray:
    return 1.0 / np.maximum(np.asarray(counts, dtype=float), 1.0)


# --- power dependence ---------------------------------------------------------

@dataclass
class PowerSweep:
    powers: np.ndarray
    fits: list = field(default_factory=list)

    def __post_init__(self):
        self.powers = np.asarray(self.powers, dtype=float)
        if self.powers.ndim != 1 or self.powers.size != len(self.fits):
            raise ValidationError("one FitResult per power is required")
        if np.any(self.powers <= 0) or np.any(np.diff(self.powers) <= 0):
            raise ValidationError("powers must be positive and strictly ascending")

    def series(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        v = np.array([f.params[name] for f in self.fits])
        e = np.array([f.errors.get(name, np.nan) for f in self.fits])
        return v, e


@dataclass
class PowerFit:
    r_ge: float
    kappa: float
    r_ei: float
    r_ig: float
    errors: dict
    tau_excited: float
    tau_metastable: float
    degenerate: bool = False
    converged: bool = True

    def to_text(self) -> str:
        out = [f"tau_excited_ns = {self.tau_excited:.10e}", f"tau_metastable_ns = {self.tau_metastable:.10e}"]
        for k in ("r_ge", "kappa", "r_ei", "r_ig"):
            out.append(f"{k} = {getattr(self, k):.10e} +/- {self.errors.get(k, float('nan')):.3e}")
        out.append(f"degenerate = {str(self.degenerate).lower()}")
        return "\n".join(out) + "\n"


def tau1_of_power(P, r_ge, kappa):
    return 1.0 / (r_ge + kappa * np.asarray(P))


def tau2_of_power(P, r_ge, kappa, r_ei, r_ig, form: str = "pump"):
    """Metastable time constant against pump power, with r_eg = kappa P.

    form='pump':  1 / (r_ei + r_ig kappa P / (kappa P + r_ge))
    form='decay': 1 / (r_ei + r_ig r_ge / (kappa P + r_ge))
    """
    kp = kappa * np.asarray(P)
    frac = kp / (kp + r_ge) if form == "pump" else r_ge / (kp + r_ge)
    return 1.0 / (r_ei + r_ig * frac)


def fit_power_dependence(
    sweep: PowerSweep | None = None,
    powers=None,
    tau1=None,
    tau2=None,
    sigma1=None,
    sigma2=None,
    form: str = "pump",
    flat_tol: float = 1e-3,
) -> PowerFit:
    """Zero-power lifetimes from tau1(P), tau2(P).

    Either pass a sweep of ``g2_3level`` fits or the series directly.  The
    seed comes from a linear fit of 1/tau1 against P (giving r_ge and kappa)
    followed by a linear fit of 1/tau2 against the pump fraction.
    """
    if sweep is not None:
        powers = sweep.powers
        tau1, sigma1 = sweep.series("tau1")
        tau2, sigma2 = sweep.series("tau2")
    P = np.asarray(powers, dtype=float)
    t1 = np.asarray(tau1, dtype=float)
    t2 = np.asarray(tau2, dtype=float)
    if P.size < 4:
        raise InsufficientDataError("need at least 4 powers")
    if form not in ("pump", "decay"):
        raise ValidationError("form must be 'pump' or 'decay'")
    s1 = np.ones_like(t1) * 1e-2 * np.mean(t1) if sigma1 is None else np.asarray(sigma1, dtype=float)
    s2 = np.ones_like(t2) * 1e-2 * np.mean(t2) if sigma2 is None else np.asarray(sigma2, dtype=float)
    s1 = np.where(np.isfinite(s1) & (s1 > 0), s1, 1e-2 * np.mean(t1))
    s2 = np.where(np.isfinite(s2) & (s2 > 0), s2, 1e-2 * np.mean(t2))

    kappa0, r_ge0 = np.polyfit(P, 1.0 / t1, 1)
    if kappa0 * P.max() < -flat_tol * abs(r_ge0):
        warnings.warn("tau1 increases with power; data are not hyperbolic in P", ModelMismatchWarning, stacklevel=2)
    if kappa0 * P.max() <= flat_tol * abs(r_ge0):
        # no measurable power dependence: the extrapolation is the sample mean
        m1, m2 = float(np.mean(t1)), float(np.mean(t2))
        e1 = float(np.std(t1, ddof=1) / np.sqrt(t1.size))
        e2 = float(np.std(t2, ddof=1) / np.sqrt(t2.size))
        return PowerFit(1 / m1, 0.0, 1 / m2, 0.0, {"tau_excited": e1, "tau_metastable": e2}, m1, m2, degenerate=True)
    r_ge0 = max(r_ge0, 1e-6 / t1.max())
    kappa0 = max(kappa0, 1e-12)
    kp = kappa0 * P
    u = kp / (kp + r_ge0) if form == "pump" else r_ge0 / (kp + r_ge0)
    r_ig0, r_ei0 = np.polyfit(u, 1.0 / t2, 1)
    r_ei0 = max(r_ei0, 1e-3 / t2.max())
    r_ig0 = max(r_ig0, 1e-3 / t2.max())

    def resid(q):
        r_ge, kappa, r_ei, r_ig = np.exp(q)
        a = (tau1_of_power(P, r_ge, kappa) - t1) / s1
        b = (tau2_of_power(P, r_ge, kappa, r_ei, r_ig, form) - t2) / s2
        return np.concatenate([a, b])

    q0 = np.log([r_ge0, kappa0, r_ei0, r_ig0])
    res = levenberg_marquardt(resid, q0)
    p = np.exp(res.p)
    Jp = res.jac / p[None, :]
    dof = max(2 * P.size - 4, 1)
    try:
        cov = np.linalg.inv(Jp.T @ Jp) * (2 * res.cost / dof if dof > 0 else 1.0)
        errs = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        errs = np.full(4, np.nan)
    names = ("r_ge", "kappa", "r_ei", "r_ig")
    errors = dict(zip(names, map(float, errs)))
    errors["tau_excited"] = float(errs[0] / p[0] ** 2)
    errors["tau_metastable"] = float(errs[2] / p[2] ** 2)
    return PowerFit(*map(float, p), errors=errors, tau_excited=float(1 / p[0]), tau_metastable=float(1 / p[2]),
                    converged=res.converged)


# --- exponent extraction ------------------------------------------------------

@dataclass
class ExponentFit:
    k: int
    taus: np.ndarray  # ascending
    amplitudes: np.ndarray
    offset: float
    rss: float
    aic: float
    converged: bool

    @property
    def value_at_zero(self) -> float:
        return float(self.offset + np.sum(self.amplitudes))

    def evaluate(self, tau) -> np.ndarray:
        s = np.abs(np.asarray(tau, dtype=float))
        return self.offset + np.exp(-s[:, None] / self.taus[None, :]) @ self.amplitudes


@dataclass
class ExponentReport:
    preferred: int
    fits: dict  # k -> ExponentFit

    @property
    def best(self) -> ExponentFit:
        return self.fits[self.preferred]


def _exp_design(x, taus):
    return np.column_stack([np.ones_like(x)] + [np.exp(-x / t) for t in taus])


def _fit_k_exponentials(x, y, w, k, seeds, max_iter=2000):
    sw = np.sqrt(w)
    best = None
    for seed in seeds:
        # linear amplitudes for the seed taus
        M = _exp_design(x, seed) * sw[:, None]
        lin, *_ = np.linalg.lstsq(M, sw * y, rcond=None)
        p0 = np.concatenate([lin, np.log(seed)])

        def resid(q):
            c, A, lt = q[0], q[1:k + 1], q[k + 1:]
            t = np.exp(lt)
            return sw * (c + np.exp(-x[:, None] / t[None, :]) @ A - y)

        res = levenberg_marquardt(resid, p0, max_iter=max_iter)
        if best is None or res.cost < best.cost:
            best = res
    q = best.p
    taus = np.exp(q[k + 1:])
    amps = q[1:k + 1]
    order = np.argsort(taus)
    return q[0], amps[order], taus[order], 2 * best.cost, best.converged


def extract_exponents(
    curve: G2Curve,
    k: int | None = None,
    candidates: Sequence[int] = (2, 3, 4, 6),
    weight=None,
    noise_floor: float = 1e-9,
    merge_tol: float = 0.05,
) -> ExponentReport:
    """Fit c + sum_j A_j exp(-tau / t_j) for several k and rank by AIC.

    AIC = n log(RSS_eff / n) + 2 (2k + 1) with RSS_eff = RSS + n (floor *
    max|y|)^2; the floor keeps noiseless curves from rewarding spurious
    terms.  With ``k`` given, only that k is fitted and reported.
    """
    x = np.abs(np.asarray(curve.tau, dtype=float))
    y = np.asarray(curve.values, dtype=float)
    ks = (k,) if k is not None else tuple(candidates)
    for kk in ks:
        if kk not in (2, 3, 4, 6):
            raise ValidationError(f"k must be one of 2, 3, 4, 6; got {kk}")
    if np.ptp(y) <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        raise RankError("curve is constant: no decay to extract")
    w = np.ones_like(y) if weight is None else np.asarray(weight, dtype=float)
    n = y.size
    if n < 3 * (2 * max(ks) + 1):
        raise InsufficientDataError("too few points for the requested exponent count")
    xpos = x[x > 0]
    lo = max(float(np.min(xpos)) if xpos.size else 1e-3, 1e-6 * x.max())
    hi = x.max() / 2
    floor = (noise_floor * np.max(np.abs(y))) ** 2
    fits = {}
    for kk in ks:
        grid = np.geomspace(lo, hi, kk)
        seeds = [grid, np.geomspace(lo * 3, hi / 3, kk), np.geomspace(lo, hi / 10, kk)]
        c, A, T, rss, conv = _fit_k_exponentials(x, y, w, kk, seeds)
        aic = n * np.log((rss + n * floor) / n) + 2 * (2 * kk + 1)
        fits[kk] = ExponentFit(kk, T, A, float(c), float(rss), float(aic), conv)
        close = np.diff(np.log(T)) < np.log1p(merge_tol)
        if np.any(close):
            warnings.warn(f"k={kk}: exponents within {merge_tol:.0%} of each other are not separable",
                          MergedExponentWarning, stacklevel=2)
    preferred = min(fits, key=lambda kk: fits[kk].aic)
    return ExponentReport(preferred=preferred, fits=fits)
