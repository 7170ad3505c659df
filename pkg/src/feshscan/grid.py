"""Composite Gauss-Legendre grids on (0, R_max] and the reduced-function algebra.

Every radial function is stored as its reduced form u(r) = r * psi(r) sampled at
the grid nodes.  The grid also carries the spectral panel-wise matrices used by
the integral-equation solvers: cumulative integration (for the semi-separable
free Green kernels) and differentiation (for ODE residuals).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as L

FOUR_PI = 4.0 * np.pi


@lru_cache(maxsize=None)
def _reference_panel(n: int):
    """Nodes, weights, cumulative-integration and differentiation matrices on [-1, 1]."""
    x, w = L.leggauss(n)
    inv_vander = np.linalg.inv(L.legvander(x, n - 1))
    eye = np.eye(n)
    integ = np.empty((n, n))
    deriv = np.empty((n, n))
    dends = np.empty((2, n))
    for m in range(n):
        integ[:, m] = L.legval(x, L.legint(eye[m], lbnd=-1.0))
        deriv[:, m] = L.legval(x, L.legder(eye[m]))
        dends[:, m] = L.legval([-1.0, 1.0], L.legder(eye[m]))
    return x, w, integ @ inv_vander, deriv @ inv_vander, dends @ inv_vander


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Composite Gauss-Legendre quadrature grid.

    ``nodes`` never contain r = 0, so the reduced boundary condition u(0) = 0 is
    implicit in every representation.
    """

    nodes: np.ndarray
    weights: np.ndarray
    edges: np.ndarray
    nodes_per_panel: int
    panel_of: np.ndarray = field(repr=False)
    cumint: np.ndarray = field(repr=False)
    diff: np.ndarray = field(repr=False)

    @property
    def r_max(self) -> float:
        return float(self.edges[-1])

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def panels(self) -> int:
        return self.edges.size - 1

    def inner(self, u, v) -> complex:
        """3D L2 pairing of two radial functions, antilinear in ``u``."""
        return FOUR_PI * np.sum(self.weights * np.conj(u) * v)

    def bilinear(self, u, v):
        """Same pairing without complex conjugation."""
        return FOUR_PI * np.sum(self.weights * u * v)

    def norm(self, u) -> float:
        return float(np.sqrt(np.real(self.inner(u, u))))

    def integrate(self, f):
        return np.sum(self.weights * f)

    def second_derivative(self, u):
        """Panel-wise spectral u''; each panel is differentiated independently."""
        return self.diff @ (self.diff @ u)

    def edge_slopes(self, u):
        """One-sided u' at the left and right end of every panel, shape (panels, 2)."""
        n = self.nodes_per_panel
        dends = _reference_panel(n)[4]
        seg = np.asarray(u).reshape(self.panels, n)
        half = 0.5 * np.diff(self.edges)
        return (seg @ dends.T) / half[:, None]


def build_grid(r_max: float, panels: int, nodes_per_panel: int, breakpoints=()) -> RadialGrid:
    """Composite Gauss-Legendre grid on (0, r_max].

    ``panels`` uniform panels are laid out first; every breakpoint strictly inside
    (0, r_max) is then inserted as an extra panel edge so discontinuities of the
    potentials never fall inside a panel.
    """
    if r_max <= 0:
        raise ValueError("r_max must be positive")
    if panels < 1 or nodes_per_panel < 2:
        raise ValueError("need panels >= 1 and nodes_per_panel >= 2")
    edges = np.linspace(0.0, r_max, panels + 1)
    extra = np.array([b for b in breakpoints if 0.0 < b < r_max], dtype=float)
    if extra.size:
        near = np.abs(edges[1:-1, None] - extra[None, :]).min(axis=1) < 1e-9 * r_max
        edges = np.unique(np.concatenate([[0.0], edges[1:-1][~near], extra, [r_max]]))

    x, w, integ, deriv, _ = _reference_panel(nodes_per_panel)
    npan = edges.size - 1
    n = nodes_per_panel
    size = npan * n
    nodes = np.empty(size)
    weights = np.empty(size)
    cumint = np.zeros((size, size))
    diff = np.zeros((size, size))
    panel_of = np.repeat(np.arange(npan), n)
    for p in range(npan):
        a, b = edges[p], edges[p + 1]
        half = 0.5 * (b - a)
        sl = slice(p * n, (p + 1) * n)
        nodes[sl] = a + half * (x + 1.0)
        weights[sl] = half * w
        cumint[sl, : p * n] = np.tile(weights[: p * n], (n, 1))
        cumint[sl, sl] = half * integ
        diff[sl, sl] = deriv / half
    return RadialGrid(nodes, weights, edges, n, panel_of, cumint, diff)


@dataclass(frozen=True, eq=False)
class RadialFn:
    """Reduced radial function u = r * psi sampled on a grid."""

    values: np.ndarray
    grid: RadialGrid = field(repr=False)
    reduced: bool = True

    def __post_init__(self):
        if np.shape(self.values) != (self.grid.size,):
            raise ValueError("values do not match the grid size")

    def inner(self, other: "RadialFn") -> complex:
        return self.grid.inner(self.values, other.values)

    def norm(self) -> float:
        return self.grid.norm(self.values)

    def psi(self):
        """Unreduced values psi(r) = u(r) / r."""
        return self.values / self.grid.nodes
