import numpy as np
import pytest

from gkdv_blowup.errors import DomainError
from gkdv_blowup.grid import GridFunction, differentiate, inner, line_grid, norm_l2
from gkdv_blowup.ground_state import ground_state, ground_state_values, mass, scaling_generator
from gkdv_blowup.linearized import LinearizedOperator
from gkdv_blowup.profiles import (
    build_profiles,
    core_residual_norm,
    cutoff,
    cutoff_derivative,
    localization_grid,
    localized_profile,
    profile_residual,
)


def loglog_slope(x, y):
    return np.polyfit(np.log(np.abs(x)), np.log(np.abs(y)), 1)[0]


class TestCutoff:
    def test_plateaus(self):
        s = np.array([-5.0, -2.0, -0.5, 0.0, 3.0])
        np.testing.assert_allclose(cutoff(s), [0.0, 0.0, 1.0, 1.0, 1.0])

    def test_monotone_smooth(self):
        s = np.linspace(-2.5, -0.5, 4001)
        c = cutoff(s)
        assert np.all(np.diff(c) >= 0.0)
        assert np.all((c >= 0.0) & (c <= 1.0))

    def test_derivative_consistency(self):
        s = np.linspace(-1.95, -1.05, 301)
        d = 1e-6
        fd = (cutoff(s + d) - cutoff(s - d)) / (2 * d)
        assert np.abs(fd - cutoff_derivative(s)).max() < 1e-6


class TestFirstProfile:
    def test_flux_equation(self, profile_set_k3):
        # (L P_1)' = Lam Q pointwise on the interior
        ps = profile_set_k3
        op = LinearizedOperator(ps.grid)
        lhs = differentiate(op.apply(ps.profile(1)), 1)
        lam_q = scaling_generator(op.soliton)
        interior = np.abs(ps.grid.nodes) <= 30.0
        assert np.abs(lhs.values - lam_q.values)[interior].max() < 1e-6

    def test_left_plateau(self, profile_set_k3, consts):
        assert profile_set_k3.left_coeffs[1][0] == pytest.approx(
            consts.l1_norm / 2.0, abs=1e-3)

    def test_right_limit(self, profile_set_k3):
        right = profile_set_k3.profile(1).values[-1]
        assert abs(right) < 1e-8

    def test_soliton_pairing(self, profile_set_k3, consts):
        assert profile_set_k3.pq_pairing == pytest.approx(consts.pq_pairing, rel=1e-4)
        assert profile_set_k3.pq_pairing == pytest.approx(0.7443, abs=2e-4)

    def test_kernel_orthogonality_all_levels(self, profile_set_k4):
        ps = profile_set_k4
        qp = GridFunction(ps.grid, ground_state_values(ps.grid.nodes)
                          * -np.tanh(2.0 * ps.grid.nodes))
        for k in range(1, 5):
            pk = ps.profile(k)
            assert abs(inner(pk, qp)) < 1e-8 * max(norm_l2(pk), 1.0)


class TestRecursion:
    def test_beta2(self, profile_set_k3):
        assert profile_set_k3.betas[2] == pytest.approx(2.0, abs=1e-6)

    def test_d24(self, profile_set_k4):
        assert profile_set_k4.d_coeffs[4][2] == pytest.approx(-8.75, rel=1e-3)

    def test_left_coefficient_recursion(self, profile_set_k4):
        c = profile_set_k4.left_coeffs
        for k in (2, 3, 4):
            ratio = c[k][0] / c[k - 1][0]
            assert ratio == pytest.approx(-(k - 0.5) / (k - 1.0), rel=1e-4)

    def test_left_coefficient_signs(self, profile_set_k4):
        for k in range(1, 5):
            assert np.sign(profile_set_k4.left_coeffs[k][0]) == (-1.0) ** (k - 1)

    def test_left_polynomial_fit_quality(self, profile_set_k4):
        for k, res in profile_set_k4.left_fit_residuals.items():
            assert res < 1e-3

    def test_solvability_residuals(self, profile_set_k4):
        for k, res in profile_set_k4.solvability_residuals.items():
            assert res < 1e-6

    def test_beta_grid_independence(self, profile_set_k3):
        coarse = build_profiles(3, line_grid(-100.0, 40.0, 1.0 / 32.0))
        assert coarse.betas[3] == pytest.approx(profile_set_k3.betas[3], rel=1e-6)

    def test_order_bounds(self):
        with pytest.raises(DomainError):
            build_profiles(0)
        with pytest.raises(DomainError):
            build_profiles(7)


class TestDriftPolynomial:
    def test_zero_at_origin(self, profile_set_k3):
        assert profile_set_k3.drift_polynomial(0.0) == 0.0

    def test_leading_term(self, profile_set_k3):
        b = -0.01
        ps2 = build_profiles(2)
        assert ps2.drift_polynomial(b) == pytest.approx(2e-4, rel=1e-5)

    def test_cubic_term(self, profile_set_k3):
        b = -0.01
        beta3 = profile_set_k3.betas[3]
        expected = 2.0 * b * b + beta3 * b ** 3
        assert profile_set_k3.drift_polynomial(b) == pytest.approx(expected, rel=1e-12)

    def test_range_check(self, profile_set_k3):
        with pytest.raises(DomainError):
            profile_set_k3.drift_polynomial(0.5)


class TestLocalizedProfile:
    def test_cutoff_plateau_regions(self, profile_set_k3):
        ps = profile_set_k3
        b, gamma = -0.05, 0.9
        g = localization_grid(b, gamma, spacing=1.0 / 64.0)
        lp = localized_profile(ps, b, gamma, g)
        q = ground_state_values(g.nodes)
        far_left = g.nodes <= -2.0 * abs(b) ** (-gamma)
        assert np.abs(lp.values.values - q)[far_left].max() == 0.0
        plateau = g.nodes >= -abs(b) ** (-gamma)
        expansion = ps.eval_expansion(b, g.nodes[plateau])
        assert np.abs(lp.values.values[plateau] - q[plateau] - expansion).max() < 1e-12

    def test_uniform_closeness_to_soliton(self, profile_set_k3):
        sups = []
        for b in (-0.1, -0.05, -0.02, -0.01):
            g = localization_grid(b, 0.9, spacing=1.0 / 32.0)
            lp = localized_profile(profile_set_k3, b, 0.9, g)
            sups.append(np.abs(lp.values.values - ground_state_values(g.nodes)).max())
        ratios = np.array(sups) / np.array([0.1, 0.05, 0.02, 0.01])
        assert ratios.max() / ratios.min() < 3.0

    def test_domain_guard(self, profile_set_k3):
        with pytest.raises(DomainError):
            localized_profile(profile_set_k3, -1e-3)

    def test_parameter_guards(self, profile_set_k3):
        with pytest.raises(DomainError):
            localized_profile(profile_set_k3, 0.0)
        with pytest.raises(DomainError):
            localized_profile(profile_set_k3, -0.01, gamma=0.5)

    def test_b_derivative_finite_difference(self, profile_set_k3):
        # Centered differences converge at second order everywhere; inside
        # the cut-off transition the b-derivatives of the cut-off grow like
        # (|y|/|b|)^order, so only the core is compared at tight tolerance.
        b, gamma = -0.02, 0.9
        g = localization_grid(b, gamma, spacing=1.0 / 32.0)
        lp = localized_profile(profile_set_k3, b, gamma, g)
        core = g.nodes >= -abs(b) ** (-gamma)
        errs, core_errs = [], []
        for delta in (1e-4, 5e-5):
            plus = localized_profile(profile_set_k3, b + delta, gamma, g)
            minus = localized_profile(profile_set_k3, b - delta, gamma, g)
            fd = (plus.values.values - minus.values.values) / (2 * delta)
            diff = np.abs(fd - lp.b_derivative.values)
            core_errs.append(diff[core].max())
            errs.append(diff.max())
        assert core_errs[0] < 1e-4
        assert core_errs[1] < core_errs[0] / 2.5  # second-order shrink
        assert errs[1] < errs[0] / 2.5

    def test_mass_expansion_exponent(self, profile_set_k3, consts):
        gamma = 0.9
        bs = np.geomspace(1e-3, 1e-1, 7)
        gaps = []
        for mag in bs:
            b = -mag
            g = localization_grid(b, gamma, spacing=1.0 / 32.0)
            lp = localized_profile(profile_set_k3, b, gamma, g)
            q = GridFunction(g, ground_state_values(g.nodes))
            gaps.append(abs(mass(lp.values) - mass(q) - 2.0 * b * consts.pq_pairing))
        assert loglog_slope(bs, gaps) == pytest.approx(2.0 - gamma, abs=0.15)


class TestProfileResidual:
    def test_soliton_limit(self, profile_set_k3):
        # at b = 0 the flux derivative of the soliton itself must vanish
        g = profile_set_k3.grid
        q = ground_state(g)
        flux = differentiate(q, 2).values - q.values + q.values ** 5
        res = differentiate(GridFunction(g, flux), 1)
        assert np.abs(res.values).max() < 1e-6

    @pytest.mark.parametrize("K,expected", [(2, 3.0), (3, 4.0)])
    def test_core_norm_scaling(self, K, expected):
        ps = build_profiles(K)
        bs = [-0.1, -0.05, -0.02, -0.01]
        norms = [core_residual_norm(ps, b, 0.9, localization_grid(b, 0.9, 1.0 / 64.0))
                 for b in bs]
        assert loglog_slope(bs, norms) == pytest.approx(expected, abs=0.3)

    def test_first_derivative_core_scaling(self, profile_set_k3):
        # the residual's first derivative obeys the same core power law
        gamma = 0.9
        bs = [-0.1, -0.05, -0.02, -0.01]
        norms = []
        for b in bs:
            g = localization_grid(b, gamma, spacing=1.0 / 64.0)
            psi1 = differentiate(profile_residual(profile_set_k3, b, gamma, g), 1)
            core = np.abs(g.nodes) <= 0.5 * abs(b) ** (-gamma)
            w = np.exp(-0.5 * np.abs(g.nodes)) * core
            norms.append(np.sqrt(g.quadrature_weights @ (psi1.values ** 2 * w)))
        assert loglog_slope(bs, norms) == pytest.approx(4.0, abs=0.4)

    def test_cutoff_zone_scaling(self, profile_set_k3):
        gamma = 0.9
        bs = [-0.1, -0.05, -0.02, -0.01]
        sups = []
        for b in bs:
            g = localization_grid(b, gamma, spacing=1.0 / 64.0)
            psi = profile_residual(profile_set_k3, b, gamma, g)
            scale = abs(b) ** (-gamma)
            zone = (g.nodes >= -1.7 * scale) & (g.nodes <= -1.3 * scale)
            sups.append(np.abs(psi.values[zone]).max())
        assert loglog_slope(bs, sups) == pytest.approx(1.0 + gamma, abs=0.3)


class TestEvalProfile:
    def test_matches_samples_inside(self, profile_set_k3):
        ps = profile_set_k3
        y = np.linspace(-100.0, 30.0, 500)
        direct = ps.eval_profile(2, y)
        from gkdv_blowup.grid import sample_at
        assert np.abs(direct - sample_at(ps.profile(2), y)).max() < 1e-12

    def test_left_extension_continuity(self, profile_set_k4):
        ps = profile_set_k4
        edge = ps.grid.left_endpoint
        for k in range(1, 5):
            inside = ps.eval_profile(k, np.array([edge + 1e-6]))[0]
            outside = ps.eval_profile(k, np.array([edge - 1e-6]))[0]
            scale = max(abs(inside), 1.0)
            assert abs(inside - outside) / scale < 1e-3

    def test_right_extension_zero(self, profile_set_k3):
        assert profile_set_k3.eval_profile(1, np.array([100.0]))[0] == 0.0
