"""Monte Carlo emission, beam splitting and detection.

Single emitters and emitters with separate baths are simulated as
classical rate-jump processes on the level populations; collective and
dipole-coupled pairs use a quantum-jump (Monte Carlo wavefunction)
unravelling of the full Lindbladian.  A photon is emitted on every
radiative e -> g jump.  Pulses are instantaneous: an emitter found in
|g> is promoted to |e> with probability ``p_exc``, and the pump channels
are off between pulses.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .curves import G2Curve
from .errors import InsufficientDataError, PropagationError, ValidationError
from .numerics import rng_stream
from .nvmodel import LEVELS, TRANSITIONS, EmitterModel, RateSet

A, B = 0, 1
_ARM = {"A": A, "B": B}


@dataclass(frozen=True)
class CW:
    """Continuous pumping; ``rate`` overrides r_eg when given."""

    rate: float | None = None


@dataclass(frozen=True)
class Pulsed:
    period: float
    p_exc: float = 1.0

    def __post_init__(self):
        if not self.period > 0:
            raise ValidationError("pulse period must be > 0")
        if not 0 <= self.p_exc <= 1:
            raise ValidationError("p_exc must lie in [0, 1]")


@dataclass(frozen=True)
class SplitterSpec:
    R: float = 0.5
    T: float = 0.5
    transmitted_arm: str = "A"  # detector behind the transmitted port

    def __post_init__(self):
        if not (0 < self.R < 1 and 0 < self.T < 1) or abs(self.R + self.T - 1) > 1e-12:
            raise ValidationError("splitter needs R, T in (0, 1) with R + T = 1")
        if self.transmitted_arm not in _ARM:
            raise ValidationError("transmitted_arm must be 'A' or 'B'")


@dataclass(frozen=True)
class DetectorSpec:
    eta_A: float = 1.0
    eta_B: float = 1.0
    dead_A: float = 0.0  # ns
    dead_B: float = 0.0
    dark_A: float = 0.0  # counts per second
    dark_B: float = 0.0

    def __post_init__(self):
        if not (0 <= self.eta_A <= 1 and 0 <= self.eta_B <= 1):
            raise ValidationError("efficiencies must lie in [0, 1]")
        if min(self.dead_A, self.dead_B, self.dark_A, self.dark_B) < 0:
            raise ValidationError("dead times and dark rates must be >= 0")

    def eta(self, arm: int) -> float:
        return self.eta_A if arm == A else self.eta_B

    def dead(self, arm: int) -> float:
        return self.dead_A if arm == A else self.dead_B

    def dark(self, arm: int) -> float:
        return self.dark_A if arm == A else self.dark_B


@dataclass
class ClickStream:
    times: np.ndarray  # ns, ascending
    detectors: np.ndarray  # 0 = A, 1 = B
    duration: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.detectors = np.asarray(self.detectors, dtype=np.uint8)
        if self.times.shape != self.detectors.shape:
            raise ValidationError("times and detectors differ in length")

    def __len__(self):
        return self.times.size

    def arm(self, arm: int) -> np.ndarray:
        return self.times[self.detectors == arm]

    def check_dead_time(self, det: DetectorSpec) -> None:
        for arm in (A, B):
            t = self.arm(arm)
            gaps = np.diff(t)
            if gaps.size and (np.any(gaps <= 0) or np.any(gaps < det.dead(arm) * (1 - 1e-12))):
                raise PropagationError(f"dead-time invariant violated on detector {'AB'[arm]}", invariant="dead-time")


@dataclass
class BitSequence:
    bits: np.ndarray
    origin: str = "raw"

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.size and self.bits.max() > 1:
            raise ValidationError("bits must be 0 or 1")
        if self.origin not in ("raw", "debiased"):
            raise ValidationError("origin must be 'raw' or 'debiased'")

    def __len__(self):
        return self.bits.size

    def __str__(self):
        return "".join("01"[b] for b in self.bits)


# --- population rate-jump emitters -----------------------------------------------

def _rate_table(rates: RateSet) -> np.ndarray:
    """K[m, l] = rate of m -> l over level indices (g, i, e)."""
    K = np.zeros((3, 3))
    for name, (to, frm) in TRANSITIONS.items():
        K[LEVELS.index(frm), LEVELS.index(to)] += getattr(rates, name)
    return K


_G, _I, _E = 0, 1, 2


def _renewal_waits(rates: RateSet, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. intervals between e -> g emissions, each path starting in g.

    Under cw pumping every emission resets the emitter to |g>, so the
    emission record is a renewal process; paths are advanced in lockstep.
    """
    K = _rate_table(rates)
    out = K.sum(axis=1)
    if out[_G] == 0:
        raise ValidationError("no pump out of |g>: the emitter never emits")
    state = np.zeros(n, dtype=np.int64)
    clock = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    cum = np.cumsum(K / np.where(out > 0, out, 1.0)[:, None], axis=1)
    steps = 0
    while np.any(alive):
        idx = np.flatnonzero(alive)
        s = state[idx]
        tot = out[s]
        if np.any(tot == 0):
            raise ValidationError("trapping level with no exit: emission stops")
        clock[idx] += rng.exponential(1.0 / tot)
        u = rng.random(idx.size)
        nxt = (u[:, None] > cum[s]).sum(axis=1)
        nxt = np.minimum(nxt, 2)
        emitted = (s == _E) & (nxt == _G)
        alive[idx[emitted]] = False
        state[idx] = nxt
        steps += 1
        if steps > 10_000_000:
            raise PropagationError("renewal paths failed to terminate", invariant="termination")
    return clock


def _cw_population_emitter(rates: RateSet, duration: float, rng) -> np.ndarray:
    # the first path starts in |g> at t = 0; the histogram normalisation uses
    # measured click rates, so this start-up transient is harmless
    chunks = []
    t = 0.0
    batch = 4096
    first = True
    while t < duration:
        w = _renewal_waits(rates, batch, rng)
        if first:
            batch = int(min(max(2 * duration / float(np.mean(w)), 1024), 5_000_000))
            first = False
        c = t + np.cumsum(w)
        chunks.append(c[c < duration])
        t = c[-1]
    return np.concatenate(chunks) if chunks else np.zeros(0)


def _pulsed_population_emitter(rates: RateSet, exc: Pulsed, duration: float, rng) -> np.ndarray:
    dark = rates.without_pump()
    K = _rate_table(dark)
    out = K.sum(axis=1)
    emissions = []
    state = _G
    n_pulses = int(np.ceil(duration / exc.period))
    for n in range(n_pulses):
        t = n * exc.period
        t_next = min(t + exc.period, duration)
        if state == _G and rng.random() < exc.p_exc:
            state = _E
        while out[state] > 0:
            t += rng.exponential(1.0 / out[state])
            if t >= t_next:
                break  # memoryless: resume from the same level next period
            nxt = int(np.searchsorted(np.cumsum(K[state]) / out[state], rng.random(), side="right"))
            nxt = min(nxt, 2)
            if state == _E and nxt == _G:
                emissions.append(t)
            state = nxt
    return np.asarray(emissions)


# --- quantum-jump unravelling ------------------------------------------------------

class _QuantumJump:
    def __init__(self, model: EmitterModel):
        self.model = model
        chans = [c for c in model.channels if c.rate > 0]
        self.ops = [np.sqrt(c.rate) * c.operator for c in chans]
        self.stack = np.array(self.ops)
        self.emits = np.array([c.radiative and c.label.startswith("r_ge") for c in chans])
        G = sum(A.conj().T @ A for A in self.ops)
        Heff = model.H - 0.5j * G
        lam, V = np.linalg.eig(Heff)
        self.lam = lam
        self.V = V
        self.Vinv = np.linalg.inv(V)
        self.gram = V.conj().T @ V

    def propagate(self, psi, t):
        c = self.Vinv @ psi
        return self.V @ (np.exp(-1j * self.lam * t) * c)

    def norm_fn(self, psi):
        c = self.Vinv @ psi
        M = self.gram * np.outer(c.conj(), c)
        rate = -1j * (self.lam[None, :] - self.lam.conj()[:, None])

        def f(t):
            return float(np.real(np.sum(M * np.exp(rate * t))))

        return f

    def waiting_time(self, psi, u, horizon):
        """Time at which |psi(t)|^2 drops to u, or None beyond ``horizon``."""
        c = self.Vinv @ psi
        support = np.flatnonzero(np.abs(c) > 1e-12 * np.max(np.abs(c)))
        if support.size == 1:
            # psi is an eigenvector of H_eff: the norm decays exponentially
            k = support[0]
            gamma = -2.0 * self.lam[k].imag
            if gamma <= 0:
                return None
            t = -np.log(u / np.linalg.norm(self.V[:, k] * c[k]) ** 2) / gamma
            return t if t <= horizon else None
        f = self.norm_fn(psi)
        if f(horizon) > u:
            return None
        lo, hi = 0.0, min(horizon, 1.0)
        while f(hi) > u:
            lo, hi = hi, min(2 * hi, horizon)
        return brentq(lambda t: f(t) - u, lo, hi, xtol=1e-12, rtol=1e-12)

    def jump(self, psi, rng):
        cand = self.stack @ psi
        w = np.einsum("kd,kd->k", cand.conj(), cand).real
        k = int(np.searchsorted(np.cumsum(w) / w.sum(), rng.random(), side="right"))
        k = min(k, len(cand) - 1)
        v = cand[k]
        return v / np.linalg.norm(v), bool(self.emits[k])


def _pulse_kraus(p: float) -> list[np.ndarray]:
    """Local pulse: |g> -> |e> with probability p, other levels untouched."""
    k1 = np.zeros((3, 3), dtype=complex)
    k1[_E, _G] = np.sqrt(p)
    k0 = np.diag([np.sqrt(1 - p), 1.0, 1.0]).astype(complex)
    return [k0, k1]


def _apply_pulse(psi, p, rng):
    ks = _pulse_kraus(p)
    ops = [np.kron(a, b) for a in ks for b in ks]
    cand = [K @ psi for K in ops]
    w = np.array([np.vdot(v, v).real for v in cand])
    k = min(int(np.searchsorted(np.cumsum(w) / w.sum(), rng.random(), side="right")), len(cand) - 1)
    return cand[k] / np.linalg.norm(cand[k])


def _quantum_jump_emitter(model: EmitterModel, excitation, duration: float, rng) -> np.ndarray:
    psi = np.zeros(model.dim, dtype=complex)
    psi[0] = 1.0
    emissions = []
    if isinstance(excitation, Pulsed):
        qj = _QuantumJump(model.with_rates(model.rates.without_pump()))
        n_pulses = int(np.ceil(duration / excitation.period))
        for n in range(n_pulses):
            t = n * excitation.period
            t_end = min(t + excitation.period, duration)
            psi = _apply_pulse(psi, excitation.p_exc, rng)
            while True:
                dt = qj.waiting_time(psi, rng.random(), t_end - t)
                if dt is None:
                    # no jump before the next pulse: carry the conditioned state
                    psi = qj.propagate(psi, t_end - t)
                    psi /= np.linalg.norm(psi)
                    break
                t += dt
                psi = qj.propagate(psi, dt)
                psi, emitted = qj.jump(psi, rng)
                if emitted:
                    emissions.append(t)
    else:
        qj = _QuantumJump(model)
        t = 0.0
        while True:
            dt = qj.waiting_time(psi, rng.random(), duration - t)
            if dt is None:
                break
            t += dt
            psi = qj.propagate(psi, dt)
            psi, emitted = qj.jump(psi, rng)
            if emitted:
                emissions.append(t)
    return np.asarray(emissions)


def simulate_emission(model: EmitterModel, excitation, duration: float, seed: int) -> np.ndarray:
    """Ascending photon emission times (ns) over [0, duration)."""
    if not duration > 0:
        raise ValidationError("duration must be > 0")
    if not isinstance(excitation, (CW, Pulsed)):
        raise ValidationError("excitation must be CW or Pulsed")
    override = isinstance(excitation, CW) and excitation.rate is not None
    if model.kind == "two-collective":
        if override:
            model = model.with_rates(replace(model.rates, r_eg=float(excitation.rate)))
        return _quantum_jump_emitter(model, excitation, duration, rng_stream(seed, 0))
    rate_sets = [model.rates] if model.n_emitters == 1 else [model.rates, model.meta.get("rates2", model.rates)]
    if override:
        rate_sets = [replace(rs, r_eg=float(excitation.rate)) for rs in rate_sets]
    parts = []
    for n, rs in enumerate(rate_sets):
        rng = rng_stream(seed, n)
        if isinstance(excitation, CW):
            parts.append(_cw_population_emitter(rs, duration, rng))
        else:
            parts.append(_pulsed_population_emitter(rs, excitation, duration, rng))
    return np.sort(np.concatenate(parts), kind="stable")


# --- detection -------------------------------------------------------------------

def _dead_time_filter(t: np.ndarray, dead: float) -> np.ndarray:
    if dead <= 0 or t.size == 0:
        return t
    keep = np.zeros(t.size, dtype=bool)
    last = -np.inf
    # non-paralyzable: only registered clicks start a dead interval
    for k, x in enumerate(t.tolist()):
        if x - last >= dead:
            keep[k] = True
            last = x
    return t[keep]


def detect(emissions, splitter: SplitterSpec, det: DetectorSpec, seed: int, duration: float | None = None) -> ClickStream:
    """Route, attenuate, add dark counts, then apply dead time per detector."""
    t = np.asarray(emissions, dtype=float)
    if t.size and np.any(np.diff(t) < 0):
        raise ValidationError("emissions must be ascending")
    if duration is None:
        duration = float(t[-1]) if t.size else 0.0
    rng = rng_stream(seed, 1 << 20)
    to_T = rng.random(t.size) < splitter.T
    t_arm = _ARM[splitter.transmitted_arm]
    arm = np.where(to_T, t_arm, 1 - t_arm).astype(np.uint8)
    keep = rng.random(t.size) < np.where(arm == A, det.eta_A, det.eta_B)
    t, arm = t[keep], arm[keep]
    per_arm = []
    for a in (A, B):
        ta = t[arm == a]
        dark = det.dark(a) * 1e-9 * duration
        if dark > 0:
            nd = rng.poisson(dark)
            ta = np.sort(np.concatenate([ta, rng.uniform(0.0, duration, nd)]))
        ta = _dead_time_filter(ta, det.dead(a))
        per_arm.append(ta)
    times = np.concatenate(per_arm)
    dets = np.concatenate([np.full(per_arm[0].size, A, np.uint8), np.full(per_arm[1].size, B, np.uint8)])
    order = np.lexsort((dets, times))
    cs = ClickStream(times[order], dets[order], duration)
    cs.check_dead_time(det)
    return cs


def coincidence_histogram(clicks: ClickStream, bin_width: float, max_delay: float, chunk: int = 200_000) -> G2Curve:
    """All-pairs histogram of t_B - t_A for |t_B - t_A| <= max_delay.

    Normalised by N_A N_B bin_width (T - |tau|) / T^2, which is r_A r_B
    bin_width T corrected for the finite overlap at delay tau, so that an
    uncorrelated pair of streams gives 1.
    """
    if len(clicks) < 2:
        raise InsufficientDataError("need at least two clicks")
    if not (bin_width > 0 and max_delay > 0):
        raise ValidationError("bin width and max delay must be > 0")
    ta, tb = clicks.arm(A), clicks.arm(B)
    if ta.size == 0 or tb.size == 0:
        raise InsufficientDataError("both detectors need clicks")
    nb = int(round(max_delay / bin_width))
    centers = np.arange(-nb, nb + 1) * bin_width
    edges = np.append(centers - 0.5 * bin_width, centers[-1] + 0.5 * bin_width)
    counts = np.zeros(centers.size, dtype=np.int64)
    lo = np.searchsorted(tb, ta - edges[-1], side="left")
    hi = np.searchsorted(tb, ta - edges[0], side="right")
    for s in range(0, ta.size, chunk):
        l, h, a = lo[s:s + chunk], hi[s:s + chunk], ta[s:s + chunk]
        n = h - l
        if n.sum() == 0:
            continue
        owner = np.repeat(np.arange(a.size), n)
        offs = np.arange(n.sum()) - np.repeat(np.cumsum(n) - n, n)
        d = tb[l[owner] + offs] - a[owner]
        counts += np.histogram(d, bins=edges)[0]
    T = clicks.duration
    norm = ta.size * tb.size * bin_width * (T - np.abs(centers)) / T**2
    g2 = counts / norm
    return G2Curve(tau=centers, values=g2, label="coincidences",
                   meta={"counts": counts, "total": int(counts.sum()), "n_A": int(ta.size), "n_B": int(tb.size)})


# --- bits ----------------------------------------------------------------------------

def clicks_to_bits(clicks: ClickStream, a_bit: int = 0) -> BitSequence:
    """Chronological bits: detector A -> ``a_bit``, detector B -> 1 - a_bit."""
    d = np.asarray(clicks.detectors, dtype=np.uint8)
    bits = d if a_bit == 0 else 1 - d
    return BitSequence(bits.astype(np.uint8), "raw")


def von_neumann(bits: BitSequence) -> BitSequence:
    """Non-overlapping pairs: 01 -> 0, 10 -> 1, 00 and 11 dropped."""
    b = np.asarray(bits.bits, dtype=np.uint8)
    n = b.size // 2
    first, second = b[0:2 * n:2], b[1:2 * n:2]
    keep = first != second
    return BitSequence(first[keep].copy(), "debiased")


# --- files -----------------------------------------------------------------------------

CLICK_HEADER = "# hbt-clicks v1"


def write_clicks(path, clicks: ClickStream) -> None:
    lines = [CLICK_HEADER, f"# duration_ns {clicks.duration:.6f}"]
    lines += [f"{t:.6f}\t{'AB'[d]}" for t, d in zip(clicks.times.tolist(), clicks.detectors.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_clicks(path) -> ClickStream:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != CLICK_HEADER:
        raise ValidationError(f"{path}: missing '{CLICK_HEADER}' header")
    duration = None
    times, dets = [], []
    for line in text[1:]:
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "duration_ns":
                duration = float(parts[1])
            continue
        if not line.strip():
            continue
        t, d = line.split("\t")
        if d not in _ARM:
            raise ValidationError(f"bad detector label {d!r}")
        times.append(float(t))
        dets.append(_ARM[d])
    times = np.asarray(times)
    if duration is None:
        duration = float(times[-1]) if times.size else 0.0
    return ClickStream(times, np.asarray(dets, dtype=np.uint8), duration)


def write_bits(path, bits: BitSequence) -> None:
    """Raw bytes, MSB first, plus a '<path>.len' sidecar holding the bit count."""
    path = Path(path)
    path.write_bytes(np.packbits(bits.bits, bitorder="big").tobytes())
    Path(str(path) + ".len").write_text(f"{len(bits)}\n")


def read_bits(path, origin: str = "raw") -> BitSequence:
    path = Path(path)
    n = int(Path(str(path) + ".len").read_text().strip())
    raw = np.frombuffer(path.read_bytes(), dtype=np.uint8)
    bits = np.unpackbits(raw, bitorder="big")[:n]
    return BitSequence(bits, origin)
