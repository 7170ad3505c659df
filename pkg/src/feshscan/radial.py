"""One-body s-wave numerics: free Green kernels, resolvents, bound and scattering states.

All operators act on reduced functions u = r * psi.  The free resolvent of
-d^2/dr^2 on the half line has the semi-separable kernel

    g_E(r, r') = a(r_<) b(r_>)

with (a, b) = (sinh(kr)/k, e^{-kr}) below threshold, (r, 1) at zero energy and
(sin(kr)/k, e^{ikr}) for the outgoing kernel above threshold.  Integral
equations are discretized with a Nystrom rule that splits every integral at
the kink r' = r.  At and above threshold each smooth half is integrated with
the grid's spectral cumulative-integration matrix.  Below threshold only the
density is interpolated on each panel and the exponentials e^{-kappa|r - r'|}
are integrated exactly, so the rule stays accurate when kappa * h >> 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from numpy.polynomial import legendre as L
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .grid import RadialFn, RadialGrid, _reference_panel, build_grid
from .potentials import PotentialSpec, eval_potential

log = logging.getLogger(__name__)

COND_MAX = 1e12
_EXP_CAP = 700.0


class ResolventError(ArithmeticError):
    """Raised when a resolvent or Lippmann-Schwinger solve is numerically singular."""


def _pair(E: float, x, y):
    """a(x) * b(y) for the free kernel at energy E, evaluated in combined-exponent form."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if E < 0:
        kappa = np.sqrt(-E)
        grow = np.exp(np.minimum(kappa * (x - y), _EXP_CAP))
        return (grow - np.exp(-kappa * (x + y))) / (2.0 * kappa)
    if E == 0:
        return x + 0.0 * y
    k = np.sqrt(E)
    return np.sin(k * x) * np.exp(1j * k * y) / k


def free_kernel(E: float, r, rp):
    """Reduced s-wave free Green kernel g_E(r, r') (outgoing for E > 0)."""
    r = np.asarray(r, dtype=float)
    rp = np.asarray(rp, dtype=float)
    if np.any(r <= 0) or np.any(rp <= 0):
        raise ValueError("kernel arguments must be positive")
    out = _pair(E, np.minimum(r, rp), np.maximum(r, rp))
    return out[()] if np.ndim(out) == 0 else out


def green_matrix(grid: RadialGrid, E: float) -> np.ndarray:
    """Nystrom matrix G with (G f)_i ~ int_0^R g_E(r_i, r') f(r') dr'."""
    if E < 0:
        return _green_below(grid, np.sqrt(-E))
    r = grid.nodes
    lower = _pair(E, r[None, :], r[:, None])  # a(r_j) b(r_i), used for r' < r
    upper = lower.T  # a(r_i) b(r_j), used for r' > r
    left = grid.cumint
    right = grid.weights[None, :] - left
    return left * lower + right * upper


# Gauss rule for int_0^X e^{-c s} p(s) ds; the range is cut at _EXP_SPAN / c
_EXP_RULE = L.leggauss(32)
_EXP_SPAN = 40.0


def _exp_moments(n: int, c: float, start, X, sign: float):
    """int_0^X e^{-c s} l_m(start + sign * s) ds for the panel Lagrange basis l_m on [0, 1].

    ``start`` and ``X`` are arrays of equal length; returns shape (len(X), n).
    """
    y, wy = _EXP_RULE
    inv_vander = np.linalg.inv(L.legvander(_reference_panel(n)[0], n - 1))
    Xe = np.minimum(np.asarray(X, dtype=float), _EXP_SPAN / c)
    s = Xe[:, None] * 0.5 * (y + 1.0)
    ws = Xe[:, None] * 0.5 * wy * np.exp(-c * s)
    t = np.asarray(start, dtype=float)[:, None] + sign * s
    basis = L.legvander(2.0 * t - 1.0, n - 1) @ inv_vander
    return np.einsum("kq,kqm->km", ws, basis)


def _panel_exp_weights(n: int, c: float):
    """Product-integration weights of one panel of scaled width c = kappa * h."""
    t = 0.5 * (_reference_panel(n)[0] + 1.0)
    one = np.ones(1)
    down = _exp_moments(n, c, one, one, -1.0)[0]  # source panel below the target
    up = _exp_moments(n, c, 0 * one, one, 1.0)[0]  # source panel above the target
    inside = _exp_moments(n, c, t, t, -1.0) + _exp_moments(n, c, t, 1.0 - t, 1.0)
    return down, up, inside


def _green_below(grid: RadialGrid, kappa: float) -> np.ndarray:
    """G_E for E = -kappa^2 < 0: g = (e^{-kappa|r-r'|} - e^{-kappa(r+r')}) / (2 kappa)."""
    n = grid.nodes_per_panel
    r = grid.nodes
    edges = grid.edges
    K = np.empty((grid.size, grid.size))
    v = np.empty(grid.size)
    cache = {}
    for p in range(grid.panels):
        a, b = edges[p], edges[p + 1]
        h = b - a
        if h not in cache:
            cache[h] = _panel_exp_weights(n, kappa * h)
        down, up, inside = cache[h]
        sl = slice(p * n, (p + 1) * n)
        below, above = slice(0, p * n), slice((p + 1) * n, grid.size)
        K[above, sl] = h * np.exp(-kappa * (r[above] - b))[:, None] * down[None, :]
        K[below, sl] = h * np.exp(-kappa * (a - r[below]))[:, None] * up[None, :]
        K[sl, sl] = h * inside
        v[sl] = h * np.exp(-kappa * a) * up
    return (K - np.exp(-kappa * r)[:, None] * v[None, :]) / (2.0 * kappa)


def potential_values(pot: PotentialSpec, grid: RadialGrid) -> np.ndarray:
    return np.asarray(eval_potential(pot, grid.nodes), dtype=float)


def _cond_estimate(lu_piv, anorm: float) -> float:
    """Hager-Higham estimate of the 1-norm condition number from an LU factorization.

    Written with lu_solve rather than LAPACK gecon: gecon's last digits vary
    with memory alignment, which would break bit-identical sweeps.
    """
    lu = lu_piv[0]
    n = lu.shape[0]
    if not np.all(np.isfinite(lu)) or np.any(np.diag(lu) == 0):
        return np.inf
    cplx = np.iscomplexobj(lu)
    x = np.full(n, 1.0 / n, dtype=lu.dtype)
    est = 0.0
    for it in range(5):
        y = sla.lu_solve(lu_piv, x, check_finite=False)
        new = float(np.sum(np.abs(y)))
        if it > 0 and new <= est:
            break
        est = new
        ay = np.abs(y)
        xi = np.where(ay > 0, y / np.where(ay > 0, ay, 1.0), 1.0) if cplx else np.where(y >= 0, 1.0, -1.0)
        z = sla.lu_solve(lu_piv, xi, trans=2 if cplx else 1, check_finite=False)
        j = int(np.argmax(np.abs(z)))
        if it > 0 and abs(z[j]) <= np.real(np.vdot(z, x)):
            break
        x = np.zeros(n, dtype=lu.dtype)
        x[j] = 1.0
    return anorm * est


def checked_solve(A, B, cond_max: float = COND_MAX, what: str = "linear system"):
    """LU solve of A X = B with a 1-norm condition-number guard.

    Returns the solution and the condition estimate.
    """
    anorm = np.linalg.norm(A, 1)
    lu, piv = sla.lu_factor(A, check_finite=False)
    cond = _cond_estimate((lu, piv), anorm)
    if not np.isfinite(cond) or cond > cond_max:
        raise ResolventError(f"{what} is near-singular (condition ~ {cond:.3g})")
    return sla.lu_solve((lu, piv), B, check_finite=False), cond


def resolvent_matrix(grid: RadialGrid, zvals, E: float, cond_max: float = COND_MAX,
                     label: str = "H") -> np.ndarray:
    """Matrix M with M f ~ (H_Z - E)^{-1} f, realized as (I + G_E Z)^{-1} G_E."""
    G = green_matrix(grid, E)
    A = np.eye(grid.size) + G * np.asarray(zvals)[None, :]
    try:
        M, _ = checked_solve(A, G, cond_max, f"resolvent of {label} at E={E:.12g}")
    except ResolventError as exc:
        raise ResolventError(f"{exc}; E is numerically an eigenvalue of {label}") from None
    return M


def resolvent_edge(grid: RadialGrid, zvals, E: float, M: np.ndarray) -> np.ndarray:
    """Edge vector s of the resolvent M = R_Z(E), E < 0, with Z supported in [0, R_max].

    Beyond R_max every R_Z(E) x continues as t(x) e^{-kappa (r - R_max)} with
    t(x) = sum_i w_i s_i x_i.  The tail makes the derivative a rank-one update of
    the grid product: dM/dE = M M + s s^T diag(w) / (2 kappa).
    """
    if not E < 0:
        raise ValueError("edge vector needs E < 0")
    kappa = np.sqrt(-E)
    r = grid.nodes
    R = grid.r_max
    # e^{-kappa R} sinh(kappa r) / kappa without overflow
    a = (np.exp(-kappa * (R - r)) - np.exp(-kappa * (R + r))) / (2.0 * kappa)
    return a - M @ (np.asarray(zvals) * a)


def resolvent_square(grid: RadialGrid, zvals, E: float, M: np.ndarray, x) -> np.ndarray:
    """R_Z(E)^2 x on the grid, including the part of R_Z(E) x beyond R_max."""
    s = resolvent_edge(grid, zvals, E, M)
    x = np.asarray(x)
    return M @ (M @ x) + s * (np.sum(grid.weights * s * x) / (2.0 * np.sqrt(-E)))


def _as_values(f, grid: RadialGrid):
    return f.values if isinstance(f, RadialFn) else np.asarray(f)


def apply_resolvent(pot: PotentialSpec, E: float, f, grid: RadialGrid,
                    cond_max: float = COND_MAX) -> RadialFn:
    """u = (-d^2/dr^2 + pot - E)^{-1} f (boundary value from above for E > 0)."""
    G = green_matrix(grid, E)
    A = np.eye(grid.size) + G * potential_values(pot, grid)[None, :]
    u, _ = checked_solve(A, G @ _as_values(f, grid), cond_max,
                         f"resolvent at E={E:.12g} (E is numerically an eigenvalue)")
    return RadialFn(u, grid)


# ---------------------------------------------------------------------------
# bound states


@dataclass(frozen=True)
class BoundState:
    energy: float
    wavefunction: RadialFn
    node_count: int
    fd_energy: float = float("nan")


def _fd_mesh(pot: PotentialSpec, r_max: float, mesh: int):
    """Spacing and interior node count; the first breakpoint is put on a node."""
    h = r_max / (mesh + 1)
    if pot.breakpoints:
        b = min(pot.breakpoints)
        h = b / max(1, round(b / h))
    return h, int(round(r_max / h)) - 1


def _fd_levels(pot: PotentialSpec, h: float, n: int, lowest_only: bool = False) -> np.ndarray:
    r = h * np.arange(1, n + 1)
    v = np.asarray(eval_potential(pot, r), dtype=float)
    for b in pot.breakpoints:
        hit = np.isclose(r, b, rtol=0, atol=1e-9 * h)
        if np.any(hit):
            # jump midpoint keeps the scheme second order at the discontinuity
            v[hit] = 0.5 * (eval_potential(pot, b * (1 - 1e-12)) + eval_potential(pot, b * (1 + 1e-12)))
    diag = 2.0 / h**2 + v
    off = -np.ones(n - 1) / h**2
    if lowest_only:
        return eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(0, 0))
    vals = eigh_tridiagonal(diag, off, eigvals_only=True, select="v",
                            select_range=(-np.inf, 0.0))
    return np.sort(vals)


def _richardson_pair(pot, r_max, mesh, lowest_only=False):
    h, n = _fd_mesh(pot, r_max, mesh)
    coarse = _fd_levels(pot, h, n, lowest_only)
    fine = _fd_levels(pot, h / 2, 2 * n + 1, lowest_only)
    return coarse, fine


def fd_bound_energies(pot: PotentialSpec, r_max: float, mesh: int = 2000) -> np.ndarray:
    """Negative eigenvalues from a uniform finite-difference mesh, Richardson-refined.

    Meshes with spacing h and h/2 are combined as (4 E_{h/2} - E_h) / 3.
    """
    coarse, fine = _richardson_pair(pot, r_max, mesh)
    m = min(coarse.size, fine.size)
    est = (4.0 * fine[:m] - coarse[:m]) / 3.0
    return est[est < 0]


def fd_lowest_level(pot: PotentialSpec, r_max: float, mesh: int = 2000) -> float:
    """Smallest Dirichlet eigenvalue on [0, r_max], Richardson-refined (any sign)."""
    coarse, fine = _richardson_pair(pot, r_max, mesh, lowest_only=True)
    return float((4.0 * fine[0] - coarse[0]) / 3.0)


def jost_value(pot: PotentialSpec, E: float, grid: RadialGrid, zvals=None):
    """Scaled Jost function J(E) for E < 0 and the scaled regular solution.

    With phi the regular solution (phi(0) = 0, phi'(0) = 1),
    phi(r) ~ e^{kappa r} J / (2 kappa) at large r, so bound states are the zeros
    of J.  Returns (J, e^{-kappa r} phi).
    """
    kappa = np.sqrt(-E)
    r = grid.nodes
    z = potential_values(pot, grid) if zvals is None else zvals
    dr = r[:, None] - r[None, :]
    kern = (1.0 - np.exp(np.minimum(-2.0 * kappa * dr, _EXP_CAP))) / (2.0 * kappa)
    volterra = grid.cumint * kern * z[None, :]
    rhs = (1.0 - np.exp(-2.0 * kappa * r)) / (2.0 * kappa)
    phi_s = np.linalg.solve(np.eye(grid.size) - volterra, rhs)
    return 1.0 + np.sum(grid.weights * z * phi_s), phi_s


def _count_nodes(u: np.ndarray) -> int:
    big = np.abs(u) > 1e-8 * np.max(np.abs(u))
    s = np.sign(u[big])
    return int(np.sum(s[1:] != s[:-1]))


def default_grid(pot: PotentialSpec, r_max: float | None = None, panels: int = 40,
                 nodes_per_panel: int = 10) -> RadialGrid:
    r_max = 5.0 * pot.extent if r_max is None else r_max
    return build_grid(r_max, panels, nodes_per_panel, pot.breakpoints)


def bound_states(pot: PotentialSpec, grid: RadialGrid | None = None,
                 mesh: int = 2000) -> list[BoundState]:
    """All negative eigenvalues of -d^2/dr^2 + pot with u(0) = 0, sorted ascending.

    Levels are located on a uniform finite-difference mesh (Dirichlet at R_max)
    with Richardson refinement, then polished on the quadrature grid by Brent's
    method on the Jost function so that they coincide with the poles of the
    discrete resolvent.  Wavefunctions are unit-normalized in the 3D pairing.
    """
    if grid is None:
        grid = default_grid(pot)
    if pot.is_zero:
        return []
    zvals = potential_values(pot, grid)
    estimates = fd_bound_energies(pot, grid.r_max, mesh)
    states = []
    for idx, e0 in enumerate(estimates):
        jost = lambda E: jost_value(pot, E, grid, zvals)[0]
        delta = 1e-3 * abs(e0) + 1e-9
        lo, hi = e0 - delta, min(e0 + delta, -1e-14)
        flo, fhi = jost(lo), jost(hi)
        tries = 0
        while flo * fhi > 0 and tries < 12:
            delta *= 2.0
            lo, hi = e0 - delta, min(e0 + delta, -1e-14)
            flo, fhi = jost(lo), jost(hi)
            tries += 1
        if flo * fhi > 0:
            log.warning("could not bracket level near E=%.6g on the quadrature grid", e0)
            energy = float(e0)
        else:
            energy = brentq(jost, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        _, phi_s = jost_value(pot, energy, grid, zvals)
        kappa = np.sqrt(-energy)
        phi = phi_s * np.exp(kappa * grid.nodes)
        # project onto the decaying solution: u = -G_E U phi
        u = -green_matrix(grid, energy) @ (zvals * phi)
        u = u / grid.norm(u)
        if u[np.argmax(np.abs(u[: max(1, grid.size // 4)]))] < 0:
            u = -u
        states.append(BoundState(float(energy), RadialFn(u, grid), _count_nodes(u), float(e0)))
    states.sort(key=lambda s: s.energy)
    return states


# ---------------------------------------------------------------------------
# scattering


@dataclass(frozen=True)
class ScatteringSolution:
    """Outgoing s-wave solution; the reduced wave behaves as sin(kr)/k + A e^{ikr}."""

    k: float
    wavefunction: RadialFn
    phase_shift: float
    amplitude: complex


def scattering_solution(potV: PotentialSpec, k: float, grid: RadialGrid,
                        cond_max: float = COND_MAX) -> ScatteringSolution:
    if k <= 0:
        raise ValueError("k must be positive")
    E = k * k
    zvals = potential_values(potV, grid)
    G = green_matrix(grid, E)
    free = np.sin(k * grid.nodes) / k
    u, _ = checked_solve(np.eye(grid.size) + G * zvals[None, :], free.astype(complex),
                         cond_max, f"Lippmann-Schwinger equation at k={k:.6g}")
    amp = -np.sum(grid.weights * free * zvals * u)
    delta = 0.5 * np.angle(1.0 + 2j * k * amp)
    return ScatteringSolution(float(k), RadialFn(u, grid), float(delta), complex(amp))


def phase_shifts(potV: PotentialSpec, ks, grid: RadialGrid) -> np.ndarray:
    """Phase shifts on an increasing momentum grid, unwrapped modulo pi."""
    raw = np.array([scattering_solution(potV, k, grid).phase_shift for k in ks])
    return np.unwrap(2.0 * raw) / 2.0


def zero_energy(potV: PotentialSpec, grid: RadialGrid, cond_max: float = COND_MAX):
    """Zero-energy solution phi_{V,0} (psi -> 1 at infinity) and the scattering length.

    The reduced solution behaves as u(r) = r - a outside the potential, and ``a``
    is returned with the convention that a repulsive barrier gives a > 0.
    """
    zvals = potential_values(potV, grid)
    G = green_matrix(grid, 0.0)
    try:
        u, _ = checked_solve(np.eye(grid.size) + G * zvals[None, :], grid.nodes.copy(),
                             cond_max, "zero-energy equation")
    except ResolventError:
        raise ResolventError("a_V diverges: zero-energy resonance or eigenvalue of H_V") from None
    a = float(np.sum(grid.weights * grid.nodes * zvals * u))
    return RadialFn(u, grid), a


def im_resolvent_pairing(potV: PotentialSpec, k: float, f, grid: RadialGrid) -> float:
    """Im <f, R_V(k^2 + i0) f> from the regular continuum solution.

    The regular solution normalized as sin(kr + delta) at large r gives
    Im R_V(k^2 + i0)(r, r') = u(r) u(r') / k, so the pairing is
    4 pi |int u f dr|^2 / k and is never negative.
    """
    sol = scattering_solution(potV, k, grid)
    u_reg = np.real(k * np.exp(-1j * sol.phase_shift) * sol.wavefunction.values)
    fv = _as_values(f, grid)
    return float(4.0 * np.pi * abs(np.sum(grid.weights * u_reg * fv)) ** 2 / k)
