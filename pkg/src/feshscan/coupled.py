"""General two-channel solver built on the Nystrom resolvents of H_U and H_V.

The central object is the effective operator D_k = R_V(k^2) W R_U(k^2 - lam) W.
At k = 0 its eigenvalue crossings mu(lam) = 1 locate the critical values lam_j.
D_0 is not symmetric, but its nonzero spectrum coincides with that of the
self-adjoint R_V^{1/2} W R_U W R_V^{1/2}.  Residues therefore use its left and
right eigenvectors.

Sign conventions follow :mod:`feshscan.separable`.  ``a_eff`` is the physical
scattering length and ``A_eff`` is the outgoing amplitude, so a_eff = -lim A_eff.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq
from scipy.sparse.linalg import ArpackError, LinearOperator, eigs

from . import radial
from .grid import FOUR_PI, RadialFn
from .model import Model, PoleError

log = logging.getLogger(__name__)


class DegeneracyError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class EffectiveOperator:
    matrix: np.ndarray
    lam: float
    k2: float
    MU: np.ndarray = field(repr=False)
    MV: np.ndarray = field(repr=False)

    def eigvals(self) -> np.ndarray:
        return sla.eigvals(self.matrix, check_finite=False)


def assemble_D(model: Model, k2: float, lam: float) -> EffectiveOperator:
    """D = M_V(k2) C M_U(k2 - lam) C on the grid."""
    if not 0.0 <= k2 < lam:
        raise ValueError("need 0 <= k^2 < lambda")
    C = model.coupling_matrix
    MV = model.MV(k2)
    MU = model.MU(k2 - lam)
    D = MV @ (C @ (MU @ C))
    return EffectiveOperator(D, float(lam), float(k2), MU, MV)


def _D0_operator(model: Model, lam: float) -> LinearOperator:
    """Matrix-free D_0(lam); one LU of the H_U system per lambda."""
    g = model.grid
    G = radial.green_matrix(g, -lam)
    lu = sla.lu_factor(np.eye(g.size) + G * model.u_vals[None, :], check_finite=False)
    C = model.coupling_matrix
    MV0C = model.MV0 @ C

    def matvec(x):
        x = np.ravel(x)
        return MV0C @ sla.lu_solve(lu, G @ (C @ x), check_finite=False)

    return LinearOperator((g.size, g.size), matvec=matvec, dtype=float)


def leading_mu(model: Model, lam: float, count: int | None = None) -> np.ndarray:
    """Real parts of the ``count`` eigenvalues of D_0(lam) with largest real part, descending.

    Uses implicitly restarted Arnoldi with a fixed start vector, so repeated
    calls give identical results.  Falls back to a dense eigensolve for small
    grids or when Arnoldi does not converge.
    """
    n = model.grid.size
    count = len(model.poles) + 3 if count is None else count
    if model.coupling_lowrank is not None:
        # nonzero spectrum of D_0 = M_V X Y^T M_U X Y^T equals that of Y^T M_U X Y^T M_V X
        X, Y = model.coupling_lowrank
        G = radial.green_matrix(model.grid, -lam)
        lu = sla.lu_factor(np.eye(n) + G * model.u_vals[None, :], check_finite=False)
        small = (Y.T @ sla.lu_solve(lu, G @ X, check_finite=False)) @ model.YtMV0X
        mu = np.concatenate([sla.eigvals(small).real, np.zeros(max(count - len(small), 0))])
        return np.sort(mu)[::-1][:count]
    if count < n - 2:
        try:
            mu = eigs(_D0_operator(model, lam), k=count, which="LR", v0=np.ones(n),
                      ncv=min(n - 1, max(2 * count + 1, 20)), return_eigenvectors=False)
            return np.sort(mu.real)[::-1]
        except ArpackError:
            pass
    mu = assemble_D(model, 0.0, lam).eigvals()
    return np.sort(mu.real)[::-1][:count]


def _sorted_mu(model: Model, lam: float, count: int | None = None) -> np.ndarray:
    return leading_mu(model, lam, count)


def mu_max(model: Model, lam: float) -> float:
    return float(leading_mu(model, lam)[0])


# ---------------------------------------------------------------------------
# eigenvalue branches


@dataclass
class MuBranch:
    branch_id: int
    lam: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    imag_ratio: list = field(default_factory=list)
    vectors: list = field(default_factory=list, repr=False)

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.mu)


def _top_pairs(model, lam, n):
    vals, vecs = sla.eig(assemble_D(model, 0.0, lam).matrix, check_finite=False)
    order = np.argsort(-vals.real)[:n]
    vals = vals[order]
    vecs = vecs[:, order]
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    return vals, vecs


def _overlaps(V1, V2):
    return np.abs(V1.conj().T @ V2)


def mu_branches(model: Model, lam_grid, n_branches: int = 3, max_bisect: int = 6) -> list:
    """Leading eigenvalues of D_0(lam) followed continuously across ``lam_grid``.

    Branches are matched between neighbouring samples by the largest eigenvector
    overlap.  When the best overlap falls below 0.5, a midpoint sample is
    inserted (up to ``max_bisect`` times per gap).
    """
    lam_grid = np.sort(np.asarray(lam_grid, dtype=float))
    extra = n_branches + 2
    cache = {}

    def pairs(lam):
        if lam not in cache:
            cache[lam] = _top_pairs(model, lam, extra)
        return cache[lam]

    branches = [MuBranch(b) for b in range(n_branches)]
    vals, vecs = pairs(lam_grid[0])
    current = list(range(n_branches))

    def record(lam, vals, vecs, idx):
        for b, j in zip(branches, idx):
            v = vals[j]
            b.lam.append(lam)
            b.mu.append(float(v.real))
            b.imag_ratio.append(abs(v.imag) / max(abs(v), 1e-300))
            b.vectors.append(vecs[:, j])

    record(lam_grid[0], vals, vecs, current)

    def match(prev_vecs, lam):
        vals, vecs = pairs(lam)
        ov = _overlaps(prev_vecs, vecs)
        idx, worst = [], 1.0
        taken = set()
        for row in ov:
            row = row.copy()
            row[list(taken)] = -1.0
            j = int(np.argmax(row))
            taken.add(j)
            idx.append(j)
            worst = min(worst, row[j])
        return vals, vecs, idx, worst

    for lam_next in lam_grid[1:]:
        stack = [lam_next]
        lam_prev = branches[0].lam[-1]
        depth = 0
        while stack:
            target = stack[-1]
            prev_vecs = np.column_stack([b.vectors[-1] for b in branches])
            vals, vecs, idx, worst = match(prev_vecs, target)
            if worst < 0.5 and depth < max_bisect:
                stack.append(0.5 * (lam_prev + target))
                depth += 1
                continue
            if worst < 0.5:
                log.warning("ambiguous branch matching near lambda=%.6g (overlap %.3f)", target, worst)
            record(target, vals, vecs, idx)
            lam_prev = target
            stack.pop()
    return branches


# ---------------------------------------------------------------------------
# critical values


@dataclass
class BreitWigner:
    E_b: float
    E_res: float
    Gamma: float
    Gamma_nystrom: float = float("nan")


@dataclass
class ResonanceReport:
    lambda_j: float
    index: int
    eta: RadialFn = field(repr=False)
    sigma_min: float
    p_j: float
    kernel_dim: int
    c_j: float = float("nan")
    c_j_fit: float = float("nan")
    interval: tuple = ()
    interlaced: bool = True
    coupling_proxy: float = float("nan")
    breit_wigner: BreitWigner | None = None
    sign_convention: str = "a_phys (u ~ r - a); amplitude residue = -c_j"

    def as_dict(self) -> dict:
        bw = self.breit_wigner
        return {
            "lambda_j": self.lambda_j,
            "index": self.index,
            "c_j": self.c_j,
            "c_j_amplitude": -self.c_j,
            "c_j_fit": self.c_j_fit,
            "p_j": self.p_j,
            "sigma_min": self.sigma_min,
            "kernel_dim": self.kernel_dim,
            "interval": list(self.interval),
            "interlaced": self.interlaced,
            "coupling_proxy": self.coupling_proxy,
            "E_res": bw.E_res if bw else None,
            "Gamma": bw.Gamma if bw else None,
            "E_b": bw.E_b if bw else None,
            "sign_convention": self.sign_convention,
        }


def _segment_samples(a, b, a_pole, b_pole, n):
    """Sample points of (a, b), clustered geometrically towards pole ends."""
    t = list(np.linspace(0.0, 1.0, n))
    span = b - a
    if a_pole:
        t = [x for x in t if x > 0] + list(np.geomspace(1e-9 * a / span, 0.05, n // 2))
    if b_pole:
        t = [x for x in t if x < 1] + list(1.0 - np.geomspace(1e-9 * b / span, 0.05, n // 2))
    t = np.unique(np.clip(t, 0.0, 1.0))
    return a + span * t


def _crossings(model, lo, hi, samples):
    """Brackets (x0, x1, m) with exactly one crossing of the m-th eigenvalue."""
    poles = model.poles
    inner = sorted(p for p in poles if lo < p < hi)
    cuts = [lo] + inner + [hi]
    is_pole = [False] + [True] * len(inner) + [False]
    count = {}

    def n_above(x):
        if x not in count:
            mu = _sorted_mu(model, x)
            if mu[-1] > 1.0:
                mu = _sorted_mu(model, x, model.grid.size)
            count[x] = int(np.sum(mu > 1.0))
        return count[x]

    out = []
    for s in range(len(cuts) - 1):
        xs = _segment_samples(cuts[s], cuts[s + 1], is_pole[s], is_pole[s + 1], samples)
        work = list(zip(xs[:-1], xs[1:]))
        while work:
            x0, x1 = work.pop(0)
            d = n_above(x0) - n_above(x1)
            if d <= 0:
                continue
            if d == 1 or x1 - x0 < 1e-12 * x1:
                out.append((x0, x1, n_above(x0), d))
            else:
                xm = 0.5 * (x0 + x1)
                work[:0] = [(x0, xm), (xm, x1)]
    return out


def _kernel(D, lam):
    """Right and left eigenvectors of D at the eigenvalue closest to 1."""
    vals, vl, vr = sla.eig(D, left=True, right=True, check_finite=False)
    j = int(np.argmin(np.abs(vals - 1.0)))
    dim = int(np.sum(np.abs(vals - 1.0) < 1e-6))
    return vals[j], vr[:, j], vl[:, j], dim


def _real_unit(v, grid):
    """Rotate an eigenvector to be real, normalize, and fix its sign."""
    v = v * np.exp(-1j * np.angle(v[np.argmax(np.abs(v))]))
    v = v.real
    v = v / grid.norm(v)
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return v


def resonant_pairing(model: Model, lam: float, eta, MU=None) -> float:
    """p_j = <phi_V0, W R_U(-lam) W eta>."""
    ev = eta.values if isinstance(eta, RadialFn) else np.asarray(eta)
    MU = model.MU(-lam) if MU is None else MU
    C = model.coupling_matrix
    return float(model.grid.inner(model.phi_V0.values, C @ (MU @ (C @ ev))).real)


def residue_general(model: Model, lam_j: float, eta=None) -> float:
    """Residue of a_eff at lam_j from left/right eigenvectors of D_0(lam_j)."""
    op = assemble_D(model, 0.0, lam_j)
    _, vr, vl, dim = _kernel(op.matrix, lam_j)
    if dim > 1:
        raise DegeneracyError(f"accidental degeneracy: kernel of I - D_0 has dimension {dim}")
    g = model.grid
    ev = _real_unit(vr, g) if eta is None else (eta.values if isinstance(eta, RadialFn) else eta)
    ell = _real_unit(vl, g)
    C = model.coupling_matrix
    phi = model.phi_V0.values
    CMUCeta = C @ (op.MU @ (C @ ev))
    p = g.inner(phi, CMUCeta).real
    num = p * (ell @ phi) / FOUR_PI
    MU2 = radial.resolvent_square(g, model.u_vals, -lam_j, op.MU, C @ ev)
    den = ell @ (op.MV @ (C @ MU2))
    return float(-(num / den))


def pole_fit_residue(func, lam_j: float, delta: float) -> float:
    """Residue from symmetric samples of (lam - lam_j) a(lam) at offsets delta, delta/2.

    The symmetric average cancels the O(1) term; Richardson removes the O(delta^2)
    remainder.
    """
    def sym(d):
        return 0.5 * d * (func(lam_j + d) - func(lam_j - d))

    d1, d2 = delta, 0.5 * delta
    g1, g2 = sym(d1), sym(d2)
    return float((4.0 * g2 - g1) / 3.0)


def fit_offset(model: Model, lam_j: float, rel: float = 1e-2) -> float:
    """Stencil offset for pole fits: 1% of lam_j, but well away from the |E_j|."""
    dist = min([abs(lam_j - p) for p in model.poles] + [lam_j])
    return min(rel * lam_j, 0.1 * dist)


def find_resonances_general(model: Model, lam_range=None, samples: int = 24,
                            with_fit: bool = True, with_bw: bool = True) -> list:
    """Critical values lam_j in ``lam_range`` with kernel vectors and residues.

    Reports are ordered by decreasing lam_j.  Between consecutive poles |E_j|
    the number of eigenvalues of D_0 above 1 can only drop; every drop is
    located by Brent's method on the corresponding ordered eigenvalue.
    """
    lo, hi = model.config.lambda_range if lam_range is None else lam_range
    xtol = model.tol.root_xtol
    reports = []
    for x0, x1, m, d in _crossings(model, lo, hi, samples):
        if d == 1:
            cnt = max(m + 2, len(model.poles) + 3)
            lam = brentq(lambda x: _sorted_mu(model, x, cnt)[m - 1] - 1.0, x0, x1,
                         xtol=xtol * x1, rtol=4 * np.finfo(float).eps, maxiter=200)
        else:
            lam = 0.5 * (x0 + x1)
        reports.append(_report(model, lam, d, with_fit, with_bw))
    reports.sort(key=lambda r: -r.lambda_j)
    poles = model.poles
    for i, r in enumerate(reports):
        r.index = i
        upper = poles[i - 1] if 0 < i <= len(poles) else np.inf
        lower = poles[i] if i < len(poles) else 0.0
        r.interval = (float(lower), float(upper))
        r.interlaced = bool(lower < r.lambda_j < upper)
    return reports


def coupling_proxy(model: Model) -> float:
    """Frobenius norm of the discretized W (weights folded in)."""
    g = model.grid
    sw = np.sqrt(g.weights)
    return float(np.linalg.norm(sw[:, None] * model.coupling_matrix / sw[None, :]))


def _report(model, lam, dim, with_fit, with_bw):
    op = assemble_D(model, 0.0, lam)
    g = model.grid
    _, vr, _, kdim = _kernel(op.matrix, lam)
    eta = RadialFn(_real_unit(vr, g), g)
    sigma = float(sla.svdvals(np.eye(g.size) - op.matrix, check_finite=False)[-1])
    p = resonant_pairing(model, lam, eta, op.MU)
    rep = ResonanceReport(float(lam), -1, eta, sigma, p, max(dim, kdim),
                          coupling_proxy=coupling_proxy(model))
    if rep.kernel_dim > 1:
        log.warning("accidental degeneracy at lambda=%.10g (dim %d)", lam, rep.kernel_dim)
        return rep
    rep.c_j = residue_general(model, lam)
    if with_fit:
        try:
            rep.c_j_fit = pole_fit_residue(lambda x: a_eff_general(model, x, guard=False),
                                           lam, fit_offset(model, lam))
        except (radial.ResolventError, PoleError) as exc:
            log.warning("pole fit failed at lambda=%.10g: %s", lam, exc)
    if with_bw:
        states = model.bound_states_U
        j = int(np.sum(model.poles > lam))  # lam_j lies just above |E_j|
        if j < len(states) and states[j].energy + lam > 0:
            rep.breit_wigner = breit_wigner(model, lam, j)
    return rep


# ---------------------------------------------------------------------------
# effective Lippmann-Schwinger equation


def solve_effective_ls(model: Model, k: float, lam: float):
    """Open-channel solution phi_k and amplitude A_eff(k) for 0 < k^2 < lam."""
    if k <= 0:
        raise ValueError("k must be positive")
    op = assemble_D(model, k * k, lam)
    g = model.grid
    scat = radial.scattering_solution(model.config.potential_V, k, g)
    rhs = scat.wavefunction.values
    try:
        phi, _ = radial.checked_solve(np.eye(g.size) - op.matrix, rhs, model.tol.cond_max,
                                      "effective LS equation")
    except radial.ResolventError as exc:
        raise radial.ResolventError(f"near a resonance or embedded eigenvalue: {exc}") from None
    C = model.coupling_matrix
    A = scat.amplitude + g.bilinear(rhs, C @ (op.MU @ (C @ phi))) / FOUR_PI
    return RadialFn(phi, g), complex(A)


def a_eff_general(model: Model, lam: float, guard: bool = True) -> float:
    """Effective scattering length a_V - (1/4pi) <phi_V0, W R_U(-lam) W phi_0>."""
    if guard:
        model.check_pole_window(lam)
    op = assemble_D(model, 0.0, lam)
    return _a_eff_from(model, op)[0]


def _a_eff_from(model, op):
    g = model.grid
    phi_v = model.phi_V0.values
    try:
        phi, cond = radial.checked_solve(np.eye(g.size) - op.matrix, phi_v,
                                         model.tol.cond_max, "zero-energy effective equation")
    except radial.ResolventError as exc:
        raise PoleError(f"lambda={op.lam:.12g} is numerically a critical value: {exc}") from None
    C = model.coupling_matrix
    corr = g.inner(phi_v, C @ (op.MU @ (C @ phi))).real
    return float(model.a_V - corr / FOUR_PI), cond


def a_eff_sample(model: Model, lam: float):
    """(a_eff, mu_max, cond) from one assembly of D_0; used by the sweep."""
    op = assemble_D(model, 0.0, lam)
    a, cond = _a_eff_from(model, op)
    n = model.grid.size
    if model.coupling_lowrank is not None:
        top = leading_mu(model, lam, 1)[0]
    else:
        try:
            mu = eigs(op.matrix, k=2, which="LR", v0=np.ones(n), ncv=min(n - 1, 20),
                      return_eigenvectors=False)
        except ArpackError:
            mu = op.eigvals()
        top = np.max(mu.real)
    return a, float(top), float(cond)


# ---------------------------------------------------------------------------
# Breit-Wigner parameters


def breit_wigner(model: Model, lam: float, j: int, iterate: bool = False) -> BreitWigner:
    """Shifted position and width of the closed-channel level j at control value lam.

    E_res = E_b - Re <W psi_j, R_V(E + i0) W psi_j> and Gamma = 2 Im of the
    same pairing, evaluated at E = E_b (or once more at E = E_res when
    ``iterate`` is set).
    """
    E_b = model.bound_states_U[j].energy + lam
    if E_b <= 0:
        raise ValueError(f"resonance not embedded: E_b = {E_b:.6g} <= 0")
    chi = model.apply_W(model.bound_states_U[j].wavefunction.values)

    def self_energy(E):
        return model.grid.bilinear(chi, model.MV(E) @ chi)

    sig = self_energy(E_b)
    E = E_b
    if iterate and E_b - sig.real > 0:
        E = E_b - sig.real
        sig = self_energy(E)
    gamma = 2.0 * radial.im_resolvent_pairing(model.config.potential_V, np.sqrt(E), chi, model.grid)
    return BreitWigner(float(E_b), float(E_b - sig.real), float(gamma), float(2.0 * sig.imag))


# ---------------------------------------------------------------------------
# closed-channel partner and residual of the coupled equations


def closed_channel_pair(model: Model, phi, k: float, lam: float):
    """xi = -R_U(k^2 - lam) W phi and the relative residual of the coupled system.

    The residual applies the panel-wise spectral second derivative to both
    components.  It adds the mismatch of values and slopes across panel edges
    and the value at r = 0, and divides by the norm of the pair.
    """
    g = model.grid
    pv = phi.values if isinstance(phi, RadialFn) else np.asarray(phi)
    k2 = k * k
    C = model.coupling_matrix
    xi = -(model.MU(k2 - lam) @ (C @ pv))
    r1 = -g.second_derivative(pv) + model.v_vals * pv + C @ xi - k2 * pv
    r2 = -g.second_derivative(xi) + (model.u_vals + lam) * xi + C @ pv - k2 * xi
    bulk = g.integrate(np.abs(r1) ** 2 + np.abs(r2) ** 2)
    jumps = sum(_edge_defect(g, u) for u in (pv, xi))
    scale = np.sqrt(g.integrate(np.abs(pv) ** 2 + np.abs(xi) ** 2))
    return RadialFn(xi, g), float(np.sqrt(bulk + jumps) / scale)


def _edge_defect(g, u):
    """Squared value and slope mismatches at interior panel edges, plus u(0)^2."""
    from .grid import _reference_panel

    n = g.nodes_per_panel
    x = _reference_panel(n)[0]
    seg = np.asarray(u).reshape(g.panels, n)
    # Lagrange values at the panel ends from the nodal values
    V = np.polynomial.legendre.legvander(x, n - 1)
    ends = np.polynomial.legendre.legvander(np.array([-1.0, 1.0]), n - 1) @ np.linalg.inv(V)
    vals = seg @ ends.T
    slopes = g.edge_slopes(u)
    dv = vals[1:, 0] - vals[:-1, 1]
    ds = slopes[1:, 0] - slopes[:-1, 1]
    return float(np.sum(np.abs(dv) ** 2) + np.sum(np.abs(ds) ** 2) + abs(vals[0, 0]) ** 2)
