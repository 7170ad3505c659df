"""Closed-form engine for a rank-one coupling W = |w><w|.

Everything reduces to two scalar functions: beta_V = <w, R_V(0) w> and
F(lam) = <w, R_U(-lam) w>.  Both come from direct resolvent solves on the grid,
never from truncated spectral sums, so the continuum part of H_U is included.

Scattering lengths follow the physical convention u ~ r - a (a repulsive
barrier has a > 0).  Complex amplitudes follow the outgoing-wave convention
u ~ sin(kr)/k + A e^{ikr}, so that a = -lim_{k->0} A.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import radial
from .grid import FOUR_PI, RadialFn
from .model import Model, PoleError

log = logging.getLogger(__name__)

# relative offsets tried when shrinking root brackets towards the poles of F
_BRACKET_OFFSETS = (1e-6, 1e-9, 1e-12)


@dataclass(frozen=True, eq=False)
class SeparableContext:
    model: Model
    w: RadialFn
    beta_V: float
    bound_states_U: tuple
    overlaps: np.ndarray
    phi_V0: RadialFn
    a_V: float

    @property
    def grid(self):
        return self.w.grid

    @property
    def poles(self) -> np.ndarray:
        return np.array([-s.energy for s in self.bound_states_U])

    @property
    def p0(self) -> float:
        """<w, phi_V0>, the zero-energy resonant pairing."""
        return float(self.grid.inner(self.w.values, self.phi_V0.values).real)


def beta_V(model: Model, w) -> float:
    """<w, R_V(0) w> for a reduced profile w."""
    wv = w.values if isinstance(w, RadialFn) else np.asarray(w)
    f = model.MV0 @ wv
    return float(model.grid.inner(wv, f).real)


def separable_context(model: Model) -> SeparableContext:
    if not model.separable:
        raise ValueError("separable engine needs a separable coupling")
    g = model.grid
    w = RadialFn(model.w_reduced, g)
    states = tuple(model.bound_states_U)
    overlaps = np.array([g.inner(s.wavefunction.values, w.values).real for s in states])
    return SeparableContext(model, w, beta_V(model, w), states, overlaps,
                            model.phi_V0, model.a_V)


def _check_pole(ctx: SeparableContext, lam: float, rel: float = 1e-9):
    for j, p in enumerate(ctx.poles):
        if abs(lam - p) <= rel * p:
            raise PoleError(f"pole of F: lambda={lam:.15g} is within {rel:g} of |E_{j}|={p:.15g}")


def _norm2_with_tail(ctx, M, f, lam):
    """||R_U(-lam) w||^2 on the half line: grid part plus the exponential tail past R_max."""
    m = ctx.model
    s = radial.resolvent_edge(m.grid, m.u_vals, -lam, M)
    t = np.sum(m.grid.weights * s * ctx.w.values)
    return float(ctx.grid.inner(f, f).real) + FOUR_PI * t * t / (2.0 * np.sqrt(lam))


def F_lambda(ctx: SeparableContext, lam: float, check: bool = True):
    """F(lam) and F'(lam) = -||R_U(-lam) w||^2 from a single resolvent solve."""
    if check:
        _check_pole(ctx, lam)
    m = ctx.model
    M = radial.resolvent_matrix(m.grid, m.u_vals, -lam, np.inf, "H_U")
    f = M @ ctx.w.values
    return float(ctx.grid.inner(ctx.w.values, f).real), -_norm2_with_tail(ctx, M, f, lam)


def _F(ctx, lam):
    # brackets may sit closer to a pole than the public guard allows, and start at 0
    m = ctx.model
    f = radial.resolvent_matrix(m.grid, m.u_vals, -lam, np.inf, "H_U") @ ctx.w.values
    return float(ctx.grid.inner(ctx.w.values, f).real)


def _bracket(ctx, target, lo_pole, hi_pole):
    """Root bracket inside (lo_pole, hi_pole) for F - target (None means open end)."""
    for off in _BRACKET_OFFSETS:
        a = lo_pole * (1.0 + off) if lo_pole is not None else 0.0
        if hi_pole is None:
            b = max(2.0 * a, 1.0)
            while _F(ctx, b) - target > 0.0:
                b *= 2.0
                if b > 1e12:
                    return None
        else:
            b = hi_pole * (1.0 - off)
        fa = _F(ctx, a) - target
        fb = _F(ctx, b) - target
        if fa > 0.0 > fb:
            if off != _BRACKET_OFFSETS[0]:
                log.warning("root bracket in (%s, %s) widened to offset %g", lo_pole, hi_pole, off)
            return a, b
        if lo_pole is None:
            return None
    log.warning("no sign change of F - 1/beta in (%s, %s)", lo_pole, hi_pole)
    return None


def separable_resonances(ctx: SeparableContext, xtol: float | None = None) -> list:
    """Roots of F(lam) = 1/beta_V, ordered lam_0 > lam_1 > ... .

    One root per interval (|E_0|, inf), (|E_1|, |E_0|), ...; an extra root in
    (0, |E_{N-1}|) when F(0+) > 1/beta_V.
    """
    if not ctx.beta_V > 0:
        raise ValueError("beta_V must be positive")
    xtol = ctx.model.tol.root_xtol if xtol is None else xtol
    target = 1.0 / ctx.beta_V
    poles = list(ctx.poles)
    intervals = [(poles[0] if poles else None, None)]
    intervals += [(poles[j], poles[j - 1]) for j in range(1, len(poles))]
    if poles:
        intervals.append((None, poles[-1]))
    roots = []
    for lo, hi in intervals:
        br = _bracket(ctx, target, lo, hi)
        if br is None:
            continue
        a, b = br
        # solve for the distance to the lower pole so weak-coupling shifts keep
        # full relative precision
        base = lo or 0.0
        t = brentq(lambda t: _F(ctx, base + t) - target, a - base, b - base,
                   xtol=1e-300, rtol=max(xtol, 4 * np.finfo(float).eps), maxiter=200)
        roots.append(float(base + t))
    return roots


def a_eff_separable(ctx: SeparableContext, lam: float) -> float:
    """Effective scattering length a_V - (1/4pi) <w,phi_V0>^2 F / (1 - beta F)."""
    F, _ = F_lambda(ctx, lam)
    den = 1.0 - ctx.beta_V * F
    if abs(den) < 1e-14:
        raise PoleError(f"lambda={lam:.15g} is a root of F = 1/beta_V")
    return ctx.a_V - ctx.p0 ** 2 * F / (FOUR_PI * den)


def A_eff_separable(ctx: SeparableContext, k: float, lam: float) -> complex:
    """Outgoing-wave amplitude of the open channel at momentum k (k^2 < lam)."""
    if not 0.0 < k * k < lam:
        raise ValueError("need 0 < k^2 < lambda")
    m = ctx.model
    g = ctx.grid
    wv = ctx.w.values
    scat = radial.scattering_solution(m.config.potential_V, k, g)
    P = g.bilinear(wv, scat.wavefunction.values)
    beta_k = g.bilinear(wv, m.MV(k * k) @ wv)
    Fk = g.bilinear(wv, m.MU(k * k - lam) @ wv)
    return complex(scat.amplitude + P * P * Fk / (FOUR_PI * (1.0 - beta_k * Fk)))


def residue_separable(ctx: SeparableContext, lam_j: float) -> float:
    """Residue of a_eff at the root lam_j (physical sign convention)."""
    M = ctx.model.MU(-lam_j)
    f = M @ ctx.w.values
    F = float(ctx.grid.inner(ctx.w.values, f).real)
    nrm2 = _norm2_with_tail(ctx, M, f, lam_j)
    return -ctx.p0 ** 2 * F / (FOUR_PI * ctx.beta_V * nrm2)
