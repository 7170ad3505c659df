"""Discretized two-channel model shared by the separable and general engines."""

from __future__ import annotations

from functools import cached_property

import numpy as np

from . import radial
from .config import ModelConfig
from .grid import FOUR_PI, RadialFn, build_grid
from .potentials import eval_potential


class PoleError(ArithmeticError):
    """Evaluation requested at (or inside the window of) a pole."""


class Model:
    """Grid, potentials and cached one-body data for a ModelConfig.

    The cached quantities (bound states of H_U, zero-energy data of H_V and the
    zero-energy resolvent of H_V) are computed once and only read afterwards.
    ``coupling_values`` replaces the sampled coupling profile by explicit node
    values, for couplings that have no closed-form shape.
    """

    def __init__(self, config: ModelConfig, grid=None, coupling_values=None):
        self.config = config
        self.tol = config.tolerances
        self.grid = grid if grid is not None else build_grid(
            config.r_max, config.panels, config.nodes_per_panel, config.breakpoints)
        g = self.grid
        self.u_vals = radial.potential_values(config.potential_U, g)
        self.v_vals = radial.potential_values(config.potential_V, g)
        if coupling_values is None:
            prof = np.asarray(eval_potential(config.coupling.profile, g.nodes), dtype=float)
        else:
            # node values of W(r) (local) or of the unreduced profile w(r) (separable)
            prof = np.asarray(coupling_values, dtype=float)
            if prof.shape != (g.size,):
                raise ValueError("coupling_values must have one entry per grid node")
        if config.coupling.kind == "local":
            self.w_local = prof
            self.w_reduced = None
        else:
            self.w_local = None
            self.w_reduced = g.nodes * prof

    # -- coupling -------------------------------------------------------------

    @property
    def separable(self) -> bool:
        return self.w_reduced is not None

    @cached_property
    def coupling_matrix(self) -> np.ndarray:
        """Matrix C with C u ~ W u on the grid."""
        g = self.grid
        if self.separable:
            w = self.w_reduced
            return FOUR_PI * np.outer(w, w * g.weights)
        return np.diag(self.w_local)

    @cached_property
    def coupling_lowrank(self):
        """Factors (X, Y) with C = X Y^T when C has rank below N/2, else None."""
        u, s, vt = np.linalg.svd(self.coupling_matrix)
        rank = int(np.sum(s > 1e-14 * s[0])) if s[0] > 0 else 0
        if rank == 0 or rank > self.grid.size // 2:
            return None
        return u[:, :rank] * s[:rank], vt[:rank].T

    @cached_property
    def YtMV0X(self):
        X, Y = self.coupling_lowrank
        return Y.T @ (self.MV0 @ X)

    def apply_W(self, u):
        if self.separable:
            return self.w_reduced * self.grid.bilinear(self.w_reduced, u)
        return self.w_local * u

    # -- one-body data ----------------------------------------------------------

    @cached_property
    def bound_states_U(self):
        return radial.bound_states(self.config.potential_U, self.grid)

    @property
    def poles(self) -> np.ndarray:
        """|E_j| in decreasing order (pole positions of R_U(-lambda))."""
        return np.array([-s.energy for s in self.bound_states_U])

    @cached_property
    def zero_energy_V(self):
        return radial.zero_energy(self.config.potential_V, self.grid, self.tol.cond_max)

    @property
    def phi_V0(self) -> RadialFn:
        return self.zero_energy_V[0]

    @property
    def a_V(self) -> float:
        return self.zero_energy_V[1]

    @cached_property
    def MV0(self) -> np.ndarray:
        return self.MV(0.0)

    def MV(self, E: float) -> np.ndarray:
        if E == 0.0 and "MV0" in self.__dict__:
            return self.__dict__["MV0"]
        return radial.resolvent_matrix(self.grid, self.v_vals, E, self.tol.cond_max, "H_V")

    def MU(self, E: float) -> np.ndarray:
        return radial.resolvent_matrix(self.grid, self.u_vals, E, self.tol.cond_max, "H_U")

    def check_pole_window(self, lam: float, window: float | None = None):
        window = self.tol.pole_window if window is None else window
        for j, p in enumerate(self.poles):
            if abs(lam - p) <= window * p:
                raise PoleError(
                    f"lambda={lam:.12g} lies inside the window of the pole |E_{j}|={p:.12g}")
