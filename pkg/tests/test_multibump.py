import math

import numpy as np
import pytest

from choquard.energy import fibre_max
from choquard.field import Grid, make_potentials, norm_AV
from choquard.multibump import (BumpPlan, build_theta, certificate_sweep, chi, choose_mu, cross_term, cutoff,
                                cutoff_decay_scan, cutoff_deltas, exp_approach, h2_check, make_plan, r_y,
                                shell_average, single_bump_terms, threshold_certificate)
from choquard.radial import RadialMesh, RadialOperator, RadialProfile
from choquard.riesz import D, RieszKernel
from choquard.symmetry import SymmetrySpec, symmetrize

KAPPA, EPS = 0.5, 0.1
SWEEP = [18.0, 20.0, 22.0, 24.0, 26.0, 28.0, 30.0]


def synthetic(mu, r_max=20.0, m=4000):
    mesh = RadialMesh(r_max, m)
    r = mesh.r
    return RadialProfile(r, np.exp(-math.sqrt(mu) * r) / r, mu, 3, 1.0, 2.0, r_max, 0, 0, 0, 0, 0, True, 0)


def test_chi_closed_form():
    t = np.linspace(0, 1.2, 121)
    s = np.clip((t - 0.75) / 0.25, 0, 1)
    np.testing.assert_allclose(cutoff(np.ones_like(t), 1.0, 0.25, r=t), 1 - 3 * s ** 2 + 2 * s ** 3, rtol=0, atol=1e-15)
    assert chi(0.5, 0.25) == 1.0 and chi(1.0, 0.25) == 0.0


def test_cutoff_identity_and_monotone(ground_p2):
    r = ground_p2.r
    u = np.where(r < 5, ground_p2.values, 0.0)
    np.testing.assert_array_equal(cutoff(u, 6.0, 0.1, r=r), u)
    w = ground_p2.mesh.weights
    v = cutoff(ground_p2, 3.0, 0.2)
    assert np.sum(w * v ** 2) <= np.sum(w * ground_p2.values ** 2)


def test_cutoff_beyond_support_is_exact(ground_p2):
    op = RadialOperator(ground_p2.mesh, 1.0)
    dD, dg = cutoff_deltas(np.where(ground_p2.r < 10, ground_p2.values, 0.0), op, 2.0, 20.0, 0.1)
    assert dD < 1e-14 and dg < 1e-14


@pytest.mark.parametrize("mu", [1.0, 4.0])
def test_synthetic_cutoff_rates(mu):
    prof = synthetic(mu)
    R = np.linspace(4, 14, 11) / math.sqrt(mu)
    scan = cutoff_decay_scan(prof, mu, EPS, R)
    assert scan.slope_D == pytest.approx(scan.expected_D, rel=0.1)
    assert scan.slope_grad == pytest.approx(scan.expected_grad, rel=0.1)


def test_rate_ratio_between_mu_and_four_mu():
    R1 = np.linspace(4, 14, 11)
    s1 = cutoff_decay_scan(synthetic(1.0), 1.0, EPS, R1)
    s4 = cutoff_decay_scan(synthetic(4.0), 4.0, EPS, R1 / 2)
    assert s4.slope_D / s1.slope_D == pytest.approx(2.0, rel=0.1)


def test_r_y_formula_and_limits():
    assert r_y(0.5, 1.0, 1.0, 10.0) == pytest.approx(6.25, rel=1e-15)
    assert r_y(1e-12, 1.0, 1.0, 10.0) == pytest.approx(5.0, rel=1e-10)
    assert r_y(2 - 1e-12, 1.0, 1.0, 10.0) == pytest.approx(10.0, rel=1e-10)
    with pytest.raises(ValueError):
        r_y(2.0, 1.0, 1.0, 10.0)


def test_plan_invariants(ground_p2):
    plan = make_plan(ground_p2, SymmetrySpec(2, 1), KAPPA, EPS, 20.0)
    assert 0 < plan.R_y < plan.delta * plan.y_norm
    assert plan.center_distance(1) > 2 * plan.R_y
    with pytest.raises(ValueError):
        make_plan(ground_p2, SymmetrySpec(2, 1), KAPPA, 0.9, 20.0)


@pytest.fixture(scope="module")
def theta_setup(ground_p2):
    spec = SymmetrySpec(2, 1)
    plan = make_plan(ground_p2, spec, KAPPA, EPS, 6.0)
    grid = Grid(3, 12.0, 64)
    return spec, plan, grid


def test_single_bump_theta(ground_p2):
    spec = SymmetrySpec(1, 0)
    plan = BumpPlan(ground_p2, 5.0, 3.0, 1, 0, EPS, 1.0, choose_mu(1.0, KAPPA, 1.0), KAPPA)
    grid = Grid(3, 10.0, 32)
    th = build_theta(plan, grid, spec)
    np.testing.assert_array_equal(th, build_theta(plan, grid, spec, only=0))


def test_theta_is_equivariant(theta_setup):
    spec, plan, grid = theta_setup
    th = build_theta(plan, grid, spec)
    assert np.max(np.abs(symmetrize(th, spec, grid) - th)) <= 1e-12 * np.max(np.abs(th))
    assert np.allclose(np.flip(th, axis=(0, 1)), -th, atol=1e-14)


def test_norm_splits_and_cross_term_matches_grid(theta_setup):
    spec, plan, grid = theta_setup
    pot = make_potentials(grid, 1.0)
    th, w = build_theta(plan, grid, spec), build_theta(plan, grid, spec, only=0)
    assert norm_AV(th, pot, grid) ** 2 == pytest.approx(2 * norm_AV(w, pot, grid) ** 2, rel=1e-4)
    op = RadialOperator(plan.profile.mesh, 1.0)
    _, _, phi = single_bump_terms(plan, lambda r: np.ones_like(r), op, 2.0)
    ker = RieszKernel(grid, 1.0)
    cross_grid = D(th, 2.0, ker) - 2 * D(w, 2.0, ker)
    assert cross_term(plan, phi, op, 2.0) == pytest.approx(cross_grid, rel=1e-3)


def test_fibre_split_without_cross_term(theta_setup):
    _, plan, _ = theta_setup
    op = RadialOperator(plan.profile.mesh, 1.0)
    n2, d, _ = single_bump_terms(plan, lambda r: np.ones_like(r), op, 2.0)
    for t in (0.5, 1.0, 2.0):
        whole = t * t / 2 * (2 * n2) - t ** 4 / 4 * (2 * d)
        assert whole == pytest.approx(2 * (t * t / 2 * n2 - t ** 4 / 4 * d), rel=1e-12)
    assert fibre_max(2 * n2, 2 * d, 2.0) == pytest.approx(2 * fibre_max(n2, d, 2.0), rel=1e-12)


def test_shell_average_of_constant_and_linear():
    r = np.array([0.5, 1.0, 3.0])
    np.testing.assert_allclose(shell_average(lambda rho: np.ones_like(rho), r, 5.0, 3), 1.0, rtol=1e-14)
    # mean of |x|^2 over the sphere of radius r about Y e is Y^2 + r^2
    np.testing.assert_allclose(shell_average(lambda rho: rho ** 2, r, 5.0, 3), 25 + r ** 2, rtol=1e-13)


def test_h2_check():
    assert h2_check(exp_approach(1.0, 1.0, KAPPA), 1.0, 1.0, KAPPA, 1.0, 50.0).holds
    assert not h2_check(lambda r: np.ones_like(r), 1.0, 1.0, KAPPA, 1.0, 50.0).holds


@pytest.fixture(scope="module")
def sweeps(ground_p2):
    spec = SymmetrySpec(2, 1)
    out = {}
    for c0 in (1.0, 2.0):
        out[c0] = certificate_sweep(ground_p2, spec, exp_approach(1.0, c0, KAPPA), 1.0, c0, KAPPA, 1.0, EPS, SWEEP)
    return out


def test_certificate_positive_gap_and_rate(sweeps):
    certs, fit = sweeps[1.0]
    assert all(c.passed and c.gap > 0 for c in certs)
    assert fit.rate == pytest.approx(KAPPA, rel=0.15)


def test_certificate_monotone_in_depth(sweeps):
    shallow, deep = sweeps[1.0][0], sweeps[2.0][0]
    assert all(d.gap > s.gap for s, d in zip(shallow, deep))


def test_degenerate_well_refused(ground_p2):
    plan = make_plan(ground_p2, SymmetrySpec(2, 1), KAPPA, EPS, 24.0)
    cert = threshold_certificate(plan, lambda r: np.ones_like(r), 1.0, 0.0, KAPPA, 1.0)
    assert not cert.passed and cert.gap <= 0 and cert.refusals
