"""Density interpolation laws mapping design variables to element properties.

Two laws are supported: the smooth exponential projection (default), where
the projected volume drives both the mass scaling and a power-law stiffness,
and the plain power law ("simp") operating on raw densities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LAWS = ("projected", "simp")


@dataclass(frozen=True)
class MaterialInterp:
    """Penalization state for one optimization step."""

    p: float
    p0: float
    e0: float
    e_min: float
    law: str = "projected"

    def __post_init__(self):
        if self.p < 1.0:
            raise ValueError(f"stiffness penalization must be >= 1, got {self.p}")
        if self.p0 <= 0.0:
            raise ValueError(f"projection sharpness must be > 0, got {self.p0}")
        if not self.e0 > self.e_min > 0.0:
            raise ValueError("need e0 > e_min > 0")
        if self.law not in LAWS:
            raise ValueError(f"unknown interpolation law {self.law!r}")


def heaviside_volume(b, p0):
    """Projected volume fraction of an element: 1 - e^(-b*p0) + b*e^(-p0)."""
    b = np.asarray(b, dtype=float)
    return 1.0 - np.exp(-b * p0) + b * np.exp(-p0)


def heaviside_volume_grad(b, p0):
    b = np.asarray(b, dtype=float)
    return p0 * np.exp(-b * p0) + np.exp(-p0)


def volume_measure(b, p0, law="projected"):
    """Element volume scaling used for mass assembly and the volume constraint."""
    if law == "simp":
        return np.asarray(b, dtype=float)
    return heaviside_volume(b, p0)


def volume_measure_grad(b, p0, law="projected"):
    if law == "simp":
        return np.ones_like(np.asarray(b, dtype=float))
    return heaviside_volume_grad(b, p0)


def interpolate_stiffness(b, p, p0, e0, e_min, law="projected"):
    """Element Young's modulus for design variable(s) b."""
    b = np.asarray(b, dtype=float)
    if law == "simp":
        return e_min + b**p * (e0 - e_min)
    return e_min + heaviside_volume(b, p0) ** p * (e0 - e_min)


def interpolate_stiffness_grad(b, p, p0, e0, e_min, law="projected"):
    b = np.asarray(b, dtype=float)
    if law == "simp":
        return p * b ** (p - 1.0) * (e0 - e_min)
    v = heaviside_volume(b, p0)
    return p * v ** (p - 1.0) * heaviside_volume_grad(b, p0) * (e0 - e_min)
