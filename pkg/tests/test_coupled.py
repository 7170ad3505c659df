import numpy as np
import pytest

from feshscan import coupled as cp
from feshscan import radial
from feshscan import separable as sep
from feshscan.model import Model

from conftest import make_config


@pytest.fixture(scope="module")
def coarse_local():
    return Model(make_config("local", 1.0, panels=20))


def zero_coupling(model):
    return Model(model.config, coupling_values=np.zeros(model.grid.size))


def scaled(model, eps):
    cfg = model.config
    return Model(cfg.with_coupling(cfg.coupling.scaled(eps)))


def second_order_shift(model, j=0):
    """<psi_j | W R_V(0) W | psi_j>."""
    chi = model.apply_W(model.bound_states_U[j].wavefunction.values)
    return float(model.grid.bilinear(chi, model.MV0 @ chi))


def test_zero_coupling_gives_zero_operator(local_model):
    op = cp.assemble_D(zero_coupling(local_model), 0.0, 10.0)
    assert not np.any(op.matrix)


def test_separable_operator_is_rank_one(sep_model, sep_ctx):
    for lam in (2.0, 10.0, 40.0):
        D = cp.assemble_D(sep_model, 0.0, lam).matrix
        s = np.linalg.svd(D, compute_uv=False)
        assert s[1] < 1e-10 * s[0]
        mu = cp.leading_mu(sep_model, lam, 1)[0]
        beta_F = sep_ctx.beta_V * sep.F_lambda(sep_ctx, lam)[0]
        assert mu == pytest.approx(beta_F, rel=1e-10)
        dense = cp.assemble_D(sep_model, 0.0, lam).eigvals()
        assert dense[np.argmax(np.abs(dense))].real == pytest.approx(beta_F, rel=1e-8)


def test_leading_mu_matches_dense(local_model):
    for lam in (3.0, 12.0, 30.0):
        fast = cp.leading_mu(local_model, lam, 3)
        dense = np.sort(cp.assemble_D(local_model, 0.0, lam).eigvals().real)[::-1][:3]
        assert fast == pytest.approx(dense, rel=1e-9, abs=1e-14)


def test_operator_converges_under_refinement():
    vals = [cp.mu_max(Model(make_config("local", 1.0, panels=p)), 30.0) for p in (10, 20, 40)]
    assert abs(vals[1] - vals[2]) < 1e-3 * abs(vals[0] - vals[1]) + 1e-13


def test_mu_small_far_above_poles(local_model):
    mu = cp.leading_mu(local_model, 100 * local_model.poles[0], 5)
    assert np.all(np.abs(mu) < 0.05)


def test_mu_blows_up_at_top_pole(local_model):
    E0 = local_model.poles[0]
    m1, m2 = (cp.mu_max(local_model, E0 * (1 + d)) for d in (1e-3, 1e-4))
    assert m2 >= 10.0 * m1 * (1 - 1e-4)
    assert m2 > 10.0


def test_branches_real_and_decreasing(coarse_local):
    m = coarse_local
    edges = [0.5] + sorted(m.poles) + [80.0]
    for a, b in zip(edges, edges[1:]):
        lo = a * (1 + 1e-3) if a in m.poles else a
        hi = b * (1 - 1e-3) if b in m.poles else b
        for br in cp.mu_branches(m, np.linspace(lo, hi, 50), n_branches=2):
            assert len(br.lam) >= 50
            assert np.all(np.diff(br.values) < 0)
            assert max(br.imag_ratio) < 1e-8


def test_imaginary_parts_on_wide_grid(coarse_local):
    m = coarse_local
    lam = np.linspace(0.5, 60.0, 100)
    lam = lam[np.min(np.abs(lam[:, None] / m.poles[None, :] - 1.0), axis=1) > 1e-4]
    for br in cp.mu_branches(m, lam, n_branches=3):
        assert max(br.imag_ratio) < 1e-8


def test_crossings_are_simple(local_reports, local_model):
    for r in local_reports:
        h = 1e-6 * r.lambda_j
        D = lambda x: cp.leading_mu(local_model, x, 4)
        up, dn = D(r.lambda_j + h), D(r.lambda_j - h)
        k = int(np.argmin(np.abs(up - 1.0)))
        slope = (up[k] - dn[k]) / (2 * h)
        assert slope < 0 and abs(slope) > 1e-6


def test_two_interlaced_roots(local_reports, local_model):
    E0, E1 = local_model.poles
    lams = [r.lambda_j for r in local_reports]
    assert len(lams) == 2
    assert lams[0] > E0 > lams[1] > E1
    assert all(r.interlaced and r.kernel_dim == 1 for r in local_reports)
    for r in local_reports:
        assert r.sigma_min < 1e-6
        assert r.coupling_proxy > 0


def test_no_roots_outside_poles(local_model):
    E0 = local_model.poles[0]
    reps = cp.find_resonances_general(local_model, (E0 * 1.01, 200.0), with_fit=False, with_bw=False)
    assert reps == []


def test_local_weak_coupling_shift(local_model):
    E0 = local_model.poles[0]
    errs = []
    for eps in (0.2, 0.1, 0.05):
        m = scaled(local_model, eps)
        shift = eps**2 * second_order_shift(local_model)
        lam0 = cp.find_resonances_general(m, (E0 * (1 + 1e-9), E0 + 10 * shift),
                                          with_fit=False, with_bw=False)[0].lambda_j
        errs.append(abs(lam0 - E0 - shift))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(16 / 3 <= q <= 16 * 3 for q in ratios)


def test_effective_ls_decouples(local_model):
    m = zero_coupling(local_model)
    k = 0.4
    phi, A = cp.solve_effective_ls(m, k, 10.0)
    scat = radial.scattering_solution(m.config.potential_V, k, m.grid)
    assert np.allclose(phi.values, scat.wavefunction.values, rtol=0, atol=1e-14)
    assert A == scat.amplitude


@pytest.mark.parametrize("lam", [3.0, 15.0, 40.0])
def test_effective_ls_matches_separable(sep_model, sep_ctx, lam):
    for k in (0.1, 0.5, 1.2):
        _, A = cp.solve_effective_ls(sep_model, k, lam)
        assert A == pytest.approx(sep.A_eff_separable(sep_ctx, k, lam), rel=1e-8)


def test_amplitude_limit_is_minus_scattering_length(local_model):
    lam = 15.0
    a = cp.a_eff_general(local_model, lam)
    A = [cp.solve_effective_ls(local_model, k, lam)[1].real for k in (1e-2, 5e-3, 2.5e-3)]
    errs = [abs(x + a) for x in A]
    assert errs[0] > errs[1] > errs[2]
    assert (4 * A[2] - A[1]) / 3 == pytest.approx(-a, rel=1e-6)


def test_a_eff_decoupling_limit(local_model):
    aV = local_model.a_V
    d = [abs(cp.a_eff_general(scaled(local_model, eps), 10.0) - aV) for eps in (1e-2, 1e-3)]
    assert d[0] / d[1] == pytest.approx(100.0, rel=1e-3)
    assert cp.a_eff_general(zero_coupling(local_model), 10.0) == aV


def test_a_eff_far_above(local_model, local_reports):
    a = cp.a_eff_general(local_model, 10 * local_reports[0].lambda_j)
    assert np.isfinite(a) and abs(a) < 10 * (abs(local_model.a_V) + 1)


def test_a_eff_regular_at_closed_channel_levels(local_model):
    ambient = abs(local_model.a_V) + 1
    for E in local_model.poles:
        for d in (1e-2, 1e-3, 2e-4):
            for s in (-1, 1):
                assert abs(cp.a_eff_general(local_model, E * (1 + s * d))) < 10 * ambient


def test_a_eff_pole_guard(local_model, local_reports):
    from feshscan.model import PoleError

    with pytest.raises(PoleError, match="window"):
        cp.a_eff_general(local_model, local_model.poles[0] * (1 + 1e-5))
    with pytest.raises(PoleError, match="critical value"):
        cp.a_eff_general(local_model, local_reports[0].lambda_j)
    near = cp.a_eff_general(local_model, local_reports[0].lambda_j * (1 + 1e-8))
    assert abs(near) > 1e4


def test_residue_general_matches_closed_form(sep_reports, sep_ctx):
    roots = sep.separable_resonances(sep_ctx)
    assert [r.lambda_j for r in sep_reports] == pytest.approx(roots, rel=1e-9)
    for r in sep_reports:
        assert r.c_j == pytest.approx(sep.residue_separable(sep_ctx, r.lambda_j), rel=1e-6)
        assert r.c_j_fit == pytest.approx(r.c_j, rel=1e-2)


def test_residue_matches_fit_local(local_reports):
    for r in local_reports:
        assert r.c_j != 0 and abs(r.p_j) > 1e-8
        assert r.c_j_fit == pytest.approx(r.c_j, rel=1e-2)


def test_sign_flip_across_roots(local_model, local_reports):
    for r in local_reports:
        d = cp.fit_offset(local_model, r.lambda_j)
        lo = cp.a_eff_general(local_model, r.lambda_j - d)
        hi = cp.a_eff_general(local_model, r.lambda_j + d)
        assert lo * hi < 0


def test_general_solver_orthogonal_profile(sep_model):
    g = sep_model.grid
    r = g.nodes
    phi = sep_model.phi_V0.values
    w1, w2 = 0.3 * np.exp(-r**2), 0.3 * np.exp(-((r - 2.0) ** 2))
    alpha = g.inner(r * w1, phi).real / g.inner(r * w2, phi).real
    m = Model(sep_model.config, coupling_values=w1 - alpha * w2)
    reps = cp.find_resonances_general(m, with_fit=False, with_bw=False)
    assert reps
    for rep in reps:
        assert abs(rep.p_j) < 1e-10 and abs(rep.c_j) < 1e-10
        d = 1e-4 * rep.lambda_j
        vals = [cp.a_eff_general(m, rep.lambda_j + s, guard=False) for s in (-d, d)]
        assert np.allclose(vals, m.a_V, atol=1e-8)


def test_breit_wigner_widths(local_reports, local_model):
    bws = [r.breit_wigner for r in local_reports if r.breit_wigner is not None]
    assert bws
    for bw in bws:
        assert bw.Gamma >= 0
        assert bw.Gamma == pytest.approx(bw.Gamma_nystrom, rel=1e-8, abs=1e-15)


def test_breit_wigner_weak_coupling(local_model):
    lam, j = 30.0, 0
    base = cp.breit_wigner(local_model, lam, j)
    small = cp.breit_wigner(scaled(local_model, 0.1), lam, j)
    assert small.Gamma / base.Gamma == pytest.approx(0.01, rel=0.05)
    tiny = cp.breit_wigner(scaled(local_model, 1e-4), lam, j)
    assert abs(tiny.E_res - tiny.E_b) < 1e-6 and tiny.Gamma < 1e-8
    assert cp.breit_wigner(zero_coupling(local_model), lam, j).Gamma == 0.0


def test_breit_wigner_not_embedded(local_model):
    with pytest.raises(ValueError, match="resonance not embedded"):
        cp.breit_wigner(local_model, 10.0, 0)


def test_pair_decoupled(local_model):
    m = zero_coupling(local_model)
    phi, _ = cp.solve_effective_ls(m, 0.5, 10.0)
    xi, res = cp.closed_channel_pair(m, phi, 0.5, 10.0)
    assert not np.any(xi.values)
    assert res < 1e-6


def test_zero_energy_pair_residual(local_model, local_reports, coarse_local):
    coarse = cp.find_resonances_general(coarse_local, with_fit=False, with_bw=False)
    for fine_rep, coarse_rep in zip(local_reports, coarse):
        _, fine_res = cp.closed_channel_pair(local_model, fine_rep.eta, 0.0, fine_rep.lambda_j)
        _, coarse_res = cp.closed_channel_pair(coarse_local, coarse_rep.eta, 0.0, coarse_rep.lambda_j)
        assert fine_res < 1e-4
        assert fine_res < coarse_res
