"""Sampled correlation and intensity curves."""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np


@dataclass
class G2Curve:
    tau: np.ndarray
    values: np.ndarray
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.tau.shape != self.values.shape:
            raise ValueError("tau and values must have the same shape")

    def to_csv(self) -> str:
        return curve_csv(("tau_ns", "g2"), self.tau, self.values)


@dataclass
class DecayCurve:
    time: np.ndarray
    intensity: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        self.intensity = np.asarray(self.intensity, dtype=float)

    def to_csv(self) -> str:
        return curve_csv(("t_ns", "intensity"), self.time, self.intensity)


def curve_csv(header, *columns) -> str:
    # fixed formatting keeps reruns byte-identical
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in zip(*columns):
        buf.write(",".join(f"{v:.12e}" for v in row) + "\n")
    return buf.getvalue()
