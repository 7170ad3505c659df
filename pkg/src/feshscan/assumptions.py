"""Numerical checks of the standing hypotheses on U, V and W."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import radial
from .config import ModelConfig
from .model import Model
from .potentials import tail_ok

# decay orders required of U, V and W at R_max
TAIL_ORDERS = {"U": 2, "V": 4, "W": 3}
# |a_V| above this is treated as a zero-energy resonance of H_V
A_V_LIMIT = 1e6


@dataclass(frozen=True)
class AssumptionReport:
    n_bound_states_U: int
    bound_energies_U: tuple
    hv_nonneg: bool
    hv_min_eigenvalue: float
    a_V_finite: bool
    a_V_abs: float
    beta_positive: bool | None
    beta_V: float | None
    tails_ok: dict
    w_form_sigma_min: float
    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations

    def lines(self) -> list:
        out = [
            f"N (bound states of H_U): {self.n_bound_states_U}",
            "E_j: " + ", ".join(f"{e:.10g}" for e in self.bound_energies_U),
            f"H_V >= 0: {self.hv_nonneg} (smallest Dirichlet eigenvalue {self.hv_min_eigenvalue:.6g})",
            f"a_V finite: {self.a_V_finite} (|a_V| = {self.a_V_abs:.10g})",
        ]
        if self.beta_positive is not None:
            out.append(f"beta_V > 0: {self.beta_positive} (beta_V = {self.beta_V:.10g})")
        out.append("tails: " + ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in self.tails_ok.items()))
        out.append(f"sigma_min(W R_V(0) W): {self.w_form_sigma_min:.3e} (diagnostic)")
        out.append("violations: " + ("; ".join(self.violations) if self.violations else "none"))
        return out


def validate_assumptions(config: ModelConfig, model: Model | None = None) -> AssumptionReport:
    """Check the hypotheses numerically; failures are collected, never raised."""
    model = Model(config) if model is None else model
    violations = []

    states = model.bound_states_U
    energies = tuple(s.energy for s in states)
    if not states:
        violations.append("H_U has no bound states")

    hv_min = radial.fd_lowest_level(config.potential_V, config.r_max)
    hv_nonneg = bool(hv_min >= 0.0)
    if not hv_nonneg:
        violations.append("H_V has negative eigenvalue")

    try:
        a_V = model.a_V
        a_finite = bool(np.isfinite(a_V) and abs(a_V) < A_V_LIMIT)
    except radial.ResolventError:
        a_V, a_finite = float("inf"), False
    if not a_finite:
        violations.append("a_V diverges")

    tails = {
        "U": tail_ok(config.potential_U, config.r_max, TAIL_ORDERS["U"], config.tolerances.tail_tol),
        "V": tail_ok(config.potential_V, config.r_max, TAIL_ORDERS["V"], config.tolerances.tail_tol),
        "W": tail_ok(config.coupling.profile, config.r_max, TAIL_ORDERS["W"], config.tolerances.tail_tol),
    }
    for name, good in tails.items():
        if not good:
            violations.append(f"{name} does not decay below tail_tol at R_max")

    beta_ok = beta = None
    sigma = float("nan")
    if a_finite:
        C = model.coupling_matrix
        form = C.T @ (np.diag(model.grid.weights) @ (model.MV0 @ C))
        sigma = float(sla.svdvals(form)[-1])
        if model.separable:
            from .separable import beta_V

            beta = beta_V(model, model.w_reduced)
            beta_ok = bool(beta > 0)
            if not beta_ok:
                violations.append("beta_V is not positive")

    return AssumptionReport(len(states), energies, hv_nonneg, float(hv_min), a_finite,
                            float(abs(a_V)), beta_ok, beta, tails, sigma, tuple(violations))
