"""Scenario files: sectioned ``key = value`` text read with configparser.

Sections and keys (all optional unless noted)::

    [model]      type = single | two-independent | two-coupled   (required)
                 bath = collective | separate    (two-independent only)
                 r_eg r_ge r_ei r_ig r_gi r_ie   rates in 1/ns
                 E_g E_i E_e                     level energies
                 V_eg V_ig V_ei                  dipole couplings (two-coupled)
    [excitation] mode = cw | pulsed, rate, period, p_exc
    [detection]  R T transmitted_arm eta_A eta_B dead_A dead_B dark_A dark_B
    [analysis]   tau_max tau_points decay_tmax decay_points decay_state
                 decay_model bin_width max_delay duration tests
                 photon_rate I_in
    [run]        seed output

Times are in ns, dark rates in counts per second.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ValidationError
from .hbt import CW, DetectorSpec, Pulsed, SplitterSpec
from .nvmodel import DipoleCoupling, EmitterModel, LevelSystem, RateSet, build_single_nv, build_two_nv

MODEL_TYPES = ("single", "two-independent", "two-coupled")
_RATE_KEYS = ("r_eg", "r_ge", "r_ei", "r_ig", "r_gi", "r_ie")


@dataclass(frozen=True)
class ModelSection:
    type: str
    rates: RateSet
    levels: LevelSystem = field(default_factory=LevelSystem)
    coupling: DipoleCoupling | None = None
    bath: str = "collective"

    def __post_init__(self):
        if self.type not in MODEL_TYPES:
            raise ConfigurationError(f"model type must be one of {MODEL_TYPES}, got {self.type!r}")
        if self.bath not in ("collective", "separate"):
            raise ConfigurationError("bath must be 'collective' or 'separate'")
        if self.type == "two-coupled" and (self.coupling is None or self.coupling.is_zero()):
            raise ConfigurationError("two-coupled needs a nonzero coupling V_eg, V_ig, V_ei")

    def build(self) -> EmitterModel:
        if self.type == "single":
            return build_single_nv(self.rates, self.levels)
        if self.type == "two-independent":
            return build_two_nv(self.rates, None, collective=self.bath == "collective", levels=self.levels)
        return build_two_nv(self.rates, self.coupling, collective=self.bath == "collective", levels=self.levels)


@dataclass(frozen=True)
class AnalysisSection:
    tau_max: float | None = None  # default: 20 / slowest g2 rate
    tau_points: int = 400
    decay_tmax: float = 100.0
    decay_points: int = 400
    decay_state: str = "excited"
    decay_model: str = "exp"
    bin_width: float = 0.5
    max_delay: float = 100.0
    duration: float = 1e7
    tests: tuple | None = None
    photon_rate: float | None = None  # default: simulated flux
    I_in: float | None = None

    def __post_init__(self):
        if self.tau_max is not None and not self.tau_max > 0:
            raise ValidationError("tau_max must be > 0")
        if self.tau_points < 10 or self.decay_points < 10:
            raise ValidationError("need at least 10 grid points")
        if not (self.bin_width > 0 and self.max_delay > self.bin_width and self.duration > 0):
            raise ValidationError("need bin_width > 0, max_delay > bin_width and duration > 0")


@dataclass(frozen=True)
class Scenario:
    model: ModelSection
    excitation: CW | Pulsed = field(default_factory=CW)
    splitter: SplitterSpec = field(default_factory=SplitterSpec)
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)
    seed: int | None = None
    output: str | None = None
    name: str = ""

    def require_seed(self, override: int | None = None) -> int:
        seed = override if override is not None else self.seed
        if seed is None:
            raise ConfigurationError("simulation needs a seed (scenario [run] seed or --seed)")
        return int(seed)

    def tau_grid(self, slowest_rate: float) -> np.ndarray:
        tmax = self.analysis.tau_max or 20.0 / slowest_rate
        return np.linspace(0.0, tmax, self.analysis.tau_points)


def _floats(sec, keys):
    kw = {}
    for k in keys:
        if k in sec:
            try:
                kw[k] = float(sec[k])
            except ValueError:
                raise ConfigurationError(f"[{sec.name}] {k} = {sec[k]!r} is not a number") from None
    return kw


def _check_keys(sec, allowed):
    extra = set(sec.keys()) - set(allowed)
    if extra:
        raise ConfigurationError(f"[{sec.name}] unknown keys {sorted(extra)}")


def parse_scenario(text: str, name: str = "") -> Scenario:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive (E_g, V_eg)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse scenario: {exc}") from None
    unknown = set(cp.sections()) - {"model", "excitation", "detection", "analysis", "run"}
    if unknown:
        raise ConfigurationError(f"unknown sections {sorted(unknown)}")
    if "model" not in cp or "type" not in cp["model"]:
        raise ConfigurationError("scenario needs [model] type")

    m = cp["model"]
    _check_keys(m, ("type", "bath") + _RATE_KEYS + ("E_g", "E_i", "E_e", "V_eg", "V_ig", "V_ei"))
    rate_kw = _floats(m, _RATE_KEYS)
    missing = [k for k in ("r_eg", "r_ge", "r_ei", "r_ig") if k not in rate_kw]
    if missing:
        raise ConfigurationError(f"[model] missing rates {missing}")
    levels = LevelSystem(**_floats(m, ("E_g", "E_i", "E_e")))
    ckw = _floats(m, ("V_eg", "V_ig", "V_ei"))
    coupling = DipoleCoupling(**ckw) if ckw else None
    mtype = m["type"].strip()
    if mtype != "two-coupled" and coupling is not None and not coupling.is_zero():
        raise ConfigurationError(f"model type {mtype!r} takes no dipole coupling")
    if mtype == "single" and "bath" in m:
        raise ConfigurationError("bath applies to two-emitter models only")
    model = ModelSection(mtype, RateSet(**rate_kw), levels, coupling, m.get("bath", "collective").strip())

    excitation = CW()
    if "excitation" in cp:
        e = cp["excitation"]
        _check_keys(e, ("mode", "rate", "period", "p_exc"))
        mode = e.get("mode", "cw").strip()
        ekw = _floats(e, ("rate", "period", "p_exc"))
        if mode == "cw":
            excitation = CW(ekw.get("rate"))
        elif mode == "pulsed":
            if "period" not in ekw:
                raise ConfigurationError("pulsed excitation needs a period")
            excitation = Pulsed(ekw["period"], ekw.get("p_exc", 1.0))
        else:
            raise ConfigurationError(f"excitation mode must be cw or pulsed, got {mode!r}")

    splitter, detector = SplitterSpec(), DetectorSpec()
    if "detection" in cp:
        d = cp["detection"]
        dkeys = ("eta_A", "eta_B", "dead_A", "dead_B", "dark_A", "dark_B")
        _check_keys(d, ("R", "T", "transmitted_arm") + dkeys)
        skw = _floats(d, ("R", "T"))
        if "R" in skw and "T" not in skw:
            skw["T"] = 1 - skw["R"]
        if "T" in skw and "R" not in skw:
            skw["R"] = 1 - skw["T"]
        splitter = SplitterSpec(**skw, transmitted_arm=d.get("transmitted_arm", "A").strip())
        detector = DetectorSpec(**_floats(d, dkeys))

    analysis = AnalysisSection()
    if "analysis" in cp:
        a = cp["analysis"]
        names = {f.name for f in fields(AnalysisSection)}
        _check_keys(a, names)
        akw = _floats(a, ("tau_max", "decay_tmax", "bin_width", "max_delay", "duration", "photon_rate", "I_in"))
        for k in ("tau_points", "decay_points"):
            if k in a:
                akw[k] = int(a[k])
        for k in ("decay_state", "decay_model"):
            if k in a:
                akw[k] = a[k].strip()
        if "tests" in a:
            akw["tests"] = tuple(t.strip() for t in a["tests"].split(",") if t.strip())
        analysis = AnalysisSection(**akw)

    seed = output = None
    if "run" in cp:
        r = cp["run"]
        _check_keys(r, ("seed", "output"))
        if "seed" in r:
            try:
                seed = int(r["seed"])
            except ValueError:
                raise ConfigurationError(f"seed must be an integer, got {r['seed']!r}") from None
        output = r.get("output")
    return Scenario(model, excitation, splitter, detector, analysis, seed, output, name)


def shipped_scenarios() -> list[str]:
    root = resources.files("nvcoop") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def load_scenario(ref: str) -> Scenario:
    """Load a scenario from a path, or by name from the shipped set."""
    p = Path(ref)
    if p.is_file():
        return parse_scenario(p.read_text(), name=p.stem)
    res = resources.files("nvcoop") / "scenarios" / f"{ref}.ini"
    if res.is_file():
        return parse_scenario(res.read_text(), name=ref)
    raise ConfigurationError(f"no scenario file or shipped scenario named {ref!r}; shipped: {shipped_scenarios()}")
