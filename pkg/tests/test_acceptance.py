"""Acceptance gate: every quantitative criterion at its stated tolerance.

Criteria 1-5 are recomputed directly (seconds); criteria 6-8 consume the
session-scoped production run. Each criterion prints one pass/fail line.
"""

import numpy as np
import pytest

from gkdv_blowup.asymptotics import fit_parameters, time_profile_residual
from gkdv_blowup.grid import GridFunction, differentiate, inner, line_grid, sample_at
from gkdv_blowup.ground_state import (
    ground_state,
    ground_state_derivative_values,
    ground_state_values,
    scaling_generator,
)
from gkdv_blowup.linearized import LinearizedOperator, spectrum_grid
from gkdv_blowup.modulation import decompose
from gkdv_blowup.profiles import (
    build_profiles,
    core_residual_norm,
    localization_grid,
    localized_expansion_values,
    localized_profile,
)


def _verdict(name, conditions):
    ok = all(bool(v) for _, v in conditions)
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}")
    for label, v in conditions:
        if not v:
            print(f"  failed: {label}")
    assert ok, f"{name}: " + ", ".join(l for l, v in conditions if not v)


def _loglog_slope(x, y):
    return np.polyfit(np.log(np.abs(x)), np.log(np.abs(y)), 1)[0]


def test_criterion_1_soliton_identities():
    g = line_grid(-40.0, 40.0, 1.0 / 128.0)
    q = ground_state(g)
    residual = differentiate(q, 2).values + q.values ** 5 - q.values
    conditions = [
        ("Q(0) = 3^{1/4}",
         ground_state_values(0.0) == pytest.approx(3.0 ** 0.25, rel=1e-14)),
        ("Euler-Lagrange residual < 1e-6 at spacing 1/128",
         np.abs(residual).max() < 1e-6),
        ("||Q||_L2^2 = sqrt(3) pi/2 within 1e-8",
         abs(inner(q, q) - np.sqrt(3.0) * np.pi / 2.0) < 1e-8),
    ]
    _verdict("1 soliton identities", conditions)


def test_criterion_2_operator_identities():
    op = LinearizedOperator(line_grid(-40.0, 40.0, 1.0 / 128.0))
    lam_q = scaling_generator(op.soliton)
    summary = LinearizedOperator(spectrum_grid()).spectrum_summary()
    conditions = [
        ("kernel direction annihilated within 1e-5",
         np.abs(op.apply(op.kernel_direction).values).max() < 1e-5),
        ("scaling image equals -2Q within 1e-5",
         np.abs(op.apply(lam_q).values + 2.0 * op.soliton.values).max() < 1e-5),
        ("exactly one negative eigenvalue", summary["n_negative"] == 1),
        ("one kernel direction", summary["kernel_dim"] == 1),
        ("constrained quadratic form positive",
         summary["min_constrained_quadratic_form"] > 0.0),
    ]
    _verdict("2 operator identities", conditions)


def test_criterion_3_profile_recursion(profile_set_k4, consts):
    ps = profile_set_k4
    ratios_ok = all(
        abs(ps.left_coeffs[k][0] / ps.left_coeffs[k - 1][0]
            + (k - 0.5) / (k - 1.0)) <= 1e-3 * (k - 0.5) / (k - 1.0)
        for k in (2, 3))
    conditions = [
        ("beta_2 = 2 within 1e-6", abs(ps.betas[2] - 2.0) < 1e-6),
        ("(P,Q) = ||Q||_L1^2/16 within 1e-4 relative",
         abs(ps.pq_pairing - consts.l1_norm ** 2 / 16.0)
         < 1e-4 * consts.l1_norm ** 2 / 16.0),
        ("left plateau = ||Q||_L1/2 within 1e-3",
         abs(ps.left_coeffs[1][0] - consts.l1_norm / 2.0) < 1e-3),
        ("left-coefficient recursion within 1e-3 for k = 2, 3", ratios_ok),
        ("d_{2,4} = -8.75 within 1e-3 relative",
         abs(ps.d_coeffs[4][2] + 8.75) < 1e-3 * 8.75),
    ]
    _verdict("3 profile recursion", conditions)


def test_criterion_4_residual_scaling(profile_set_k3, consts):
    gamma = 0.9
    bs = [-0.1, -0.05, -0.02, -0.01]
    slopes = {}
    for K in (2, 3):
        ps = build_profiles(K) if K != 3 else profile_set_k3
        norms = [core_residual_norm(ps, b, gamma, localization_grid(b, gamma, 1 / 64))
                 for b in bs]
        slopes[K] = _loglog_slope(bs, norms)
    gaps = []
    mags = np.geomspace(1e-3, 1e-1, 7)
    for mag in mags:
        b = -mag
        g = localization_grid(b, gamma, spacing=1.0 / 32.0)
        lp = localized_profile(profile_set_k3, b, gamma, g)
        qm = GridFunction(g, ground_state_values(g.nodes))
        gaps.append(abs(inner(lp.values, lp.values) - inner(qm, qm)
                        - 2.0 * b * consts.pq_pairing))
    mass_exp = _loglog_slope(mags, gaps)
    conditions = [
        ("core residual slope within 0.3 of 3 at order 2",
         abs(slopes[2] - 3.0) < 0.3),
        ("core residual slope within 0.3 of 4 at order 3",
         abs(slopes[3] - 4.0) < 0.3),
        ("mass-gap exponent within 0.15 of 2 - gamma",
         abs(mass_exp - (2.0 - gamma)) < 0.15),
    ]
    _verdict("4 residual scaling", conditions)


def test_criterion_5_modulation(profile_set_k3, consts):
    g = line_grid(-60.0, 60.0, 1.0 / 64.0)
    lam0, x0, bstar = 0.7, 3.2, -0.01
    y = (g.nodes - x0) / lam0
    qb, _ = localized_expansion_values(profile_set_k3, bstar, 0.9, y)
    st = decompose(GridFunction(g, qb / np.sqrt(lam0)), profile_set_k3)

    u = GridFunction(g, ground_state_values(g.nodes))
    yq = ground_state_values(g.nodes)
    lam_q = 0.5 * yq + g.nodes * ground_state_derivative_values(g.nodes)
    weights = np.stack([g.nodes * lam_q, lam_q, yq], axis=0) \
        * g.quadrature_weights[None, :]

    def pairings(lam, xc, b):
        v = np.sqrt(lam) * sample_at(u, lam * g.nodes + xc)
        qbv, _ = localized_expansion_values(profile_set_k3, b, 0.9, g.nodes)
        return weights @ (v - qbv)

    d = 1e-6
    jac = np.zeros((3, 3))
    for j in range(3):
        dp = np.zeros(3)
        dp[j] = d
        jac[:, j] = (pairings(1 + dp[0], dp[1], dp[2])
                     - pairings(1 - dp[0], -dp[1], -dp[2])) / (2 * d)
    lam_qf = GridFunction(g, lam_q)
    yqf = GridFunction(g, g.nodes * yq)
    target = consts.l1_norm ** 2 * inner(lam_qf, lam_qf) * inner(yqf, yqf) / 32.0

    conditions = [
        ("planted scale recovered to 1e-8", abs(st.lam - lam0) < 1e-8),
        ("planted center recovered to 1e-8", abs(st.center - x0) < 1e-8),
        ("planted drift parameter recovered to 1e-8", abs(st.b - bstar) < 1e-8),
        ("Jacobian determinant matches the closed product within 1e-3",
         abs(abs(np.linalg.det(jac)) - target) < 1e-3 * target),
    ]
    _verdict("5 modulation", conditions)


def test_criterion_6_dynamics(acceptance_run):
    checks = acceptance_run.checks
    names = ["mass_drift", "energy_drift", "drift_law_intercept",
             "b_over_lambda_sq_limit", "ell0_kinematic_vs_energy"]
    conditions = [(n, checks[n]["passed"]) for n in names]
    _verdict("6 dynamics", conditions)


def test_criterion_7_time_asymptotics(acceptance_run, consts):
    checks = acceptance_run.checks
    fit = fit_parameters(acceptance_run.traj, consts)
    bad = sorted(time_profile_residual(acceptance_run.traj, acceptance_run.ps,
                                       fit, 0, c0_offset=0.5))
    control_ratio = bad[0][1] / bad[-1][1]
    conditions = [
        ("m=0 residual decreases toward small t",
         checks["profile_residual_m0_monotone"]["passed"]),
        ("m=0 final/initial ratio < 0.3",
         checks["profile_residual_m0_ratio"]["passed"]),
        ("m=1 residual decreases toward small t",
         checks["profile_residual_m1_monotone"]["passed"]),
        ("m=1 final/initial ratio < 0.3",
         checks["profile_residual_m1_ratio"]["passed"]),
        ("shifted-argument control stops decreasing", control_ratio > 0.3),
    ]
    _verdict("7 time asymptotics", conditions)


def test_criterion_8_space_asymptotics(acceptance_run):
    checks = acceptance_run.checks
    conditions = [
        ("compensated tail plateau within 10 percent",
         checks["tail_plateau"]["passed"]),
        ("windowed signed integral within 15 percent",
         checks["windowed_signed_integral"]["passed"]),
        ("windowed L1 law within 15 percent", checks["l1_law"]["passed"]),
    ]
    _verdict("8 space asymptotics", conditions)


def test_supporting_exponent_checks(acceptance_run):
    checks = acceptance_run.checks
    conditions = [
        ("scaling exponent within 0.1 of 1", checks["exponent_lambda"]["passed"]),
        ("drift exponent consistent with its fitted expansion",
         checks["exponent_b"]["passed"]),
        ("tail exponent within 0.1 of -3/2", checks["exponent_tail"]["passed"]),
    ]
    _verdict("supporting exponents", conditions)
