"""Radial potential profiles used for U, V and the inter-channel coupling W."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline

SHAPES = ("zero", "square-well", "gaussian", "exponential", "tabulated")


class PotentialError(ValueError):
    pass


@dataclass(frozen=True)
class PotentialSpec:
    """A spherically symmetric potential Z(r).

    ``amplitude`` is the signed value of the potential at the origin (inside the
    well for ``square-well``), so attractive potentials carry a negative
    amplitude.  ``range`` is the well radius, the gaussian width
    (Z = A exp(-(r/range)^2)) or the exponential decay length
    (Z = A exp(-r/range)).
    """

    shape: str = "zero"
    amplitude: float = 0.0
    range: float = 1.0
    table_r: tuple = ()
    table_v: tuple = ()

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise PotentialError(f"unknown potential shape {self.shape!r}")
        if not self.range > 0:
            raise PotentialError("range/width must be positive")
        if self.shape == "tabulated":
            r = np.asarray(self.table_r, dtype=float)
            v = np.asarray(self.table_v, dtype=float)
            if r.size < 4 or r.size != v.size:
                raise PotentialError("tabulated potential needs >= 4 matching (r, v) pairs")
            if not np.all(np.isfinite(v)) or not np.all(np.isfinite(r)):
                raise PotentialError("tabulated values must be finite")
            if np.any(np.diff(r) <= 0):
                raise PotentialError("tabulated radii must be strictly increasing")

    @property
    def sign(self) -> str:
        if self.shape == "tabulated":
            return "attractive" if np.mean(self.table_v) < 0 else "repulsive"
        return "attractive" if self.amplitude < 0 else "repulsive"

    @property
    def is_zero(self) -> bool:
        if self.shape == "tabulated":
            return not np.any(self.table_v)
        return self.shape == "zero" or self.amplitude == 0.0

    @property
    def extent(self) -> float:
        """Characteristic length used to size the default grid."""
        if self.shape == "tabulated":
            return float(self.table_r[-1])
        return float(self.range)

    @property
    def breakpoints(self) -> tuple:
        """Radii where the profile is not smooth; grids put panel edges there."""
        if self.shape == "square-well" and not self.is_zero:
            return (float(self.range),)
        return ()

    def scaled(self, factor: float) -> "PotentialSpec":
        if self.shape == "tabulated":
            return replace(self, table_v=tuple(factor * v for v in self.table_v))
        return replace(self, amplitude=factor * self.amplitude)

    def __call__(self, r):
        return eval_potential(self, r)


def eval_potential(spec: PotentialSpec, r):
    """Value of the potential at radius ``r`` (scalar or array, r >= 0)."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise PotentialError("radius must be non-negative")
    if spec.shape == "zero":
        out = np.zeros_like(r_arr)
    elif spec.shape == "square-well":
        out = np.where(r_arr < spec.range, spec.amplitude, 0.0)
    elif spec.shape == "gaussian":
        out = spec.amplitude * np.exp(-((r_arr / spec.range) ** 2))
    elif spec.shape == "exponential":
        out = spec.amplitude * np.exp(-r_arr / spec.range)
    else:
        tr = np.asarray(spec.table_r)
        if np.any(r_arr < tr[0]) or np.any(r_arr > tr[-1]):
            raise PotentialError(
                f"radius outside tabulated range [{tr[0]}, {tr[-1]}]"
            )
        out = CubicSpline(tr, np.asarray(spec.table_v))(r_arr)
    if np.ndim(r) == 0:
        return float(out)
    return out


def square_well(amplitude: float, radius: float) -> PotentialSpec:
    return PotentialSpec("square-well", amplitude, radius)


def gaussian(amplitude: float, width: float) -> PotentialSpec:
    return PotentialSpec("gaussian", amplitude, width)


def exponential(amplitude: float, length: float) -> PotentialSpec:
    return PotentialSpec("exponential", amplitude, length)


def tail_ok(spec: PotentialSpec, r_max: float, order: int, tol: float, delta: float = 0.5) -> bool:
    """Numeric stand-in for the decay class: |Z(R)| R^(order + delta) < tol."""
    if spec.is_zero:
        return True
    if spec.shape == "tabulated" and r_max > spec.table_r[-1]:
        return False
    return abs(eval_potential(spec, r_max)) * r_max ** (order + delta) < tol
