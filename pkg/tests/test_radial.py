import math

import numpy as np
import pytest

from choquard.field import Grid
from choquard.radial import (DecayFit, RadialMesh, RadialOperator, RadialProfile, UnreliableWindow, decay_fit,
                             fit_log_tail, radial_convolve, solve_ground_state, sphere_area)
from choquard.riesz import RieszKernel, riesz_convolve


def test_mesh_validation():
    with pytest.raises(ValueError):
        RadialMesh(10.0, 8)
    m = RadialMesh(10.0, 100)
    assert m.weights.sum() == pytest.approx(4 * math.pi / 3 * 1000, rel=1e-4)
    assert sphere_area(3) == pytest.approx(4 * math.pi)


def test_convolve_zero_and_negative():
    mesh = RadialMesh(5.0, 200)
    assert np.all(radial_convolve(np.zeros(200), 1.0, mesh) == 0)
    with pytest.raises(ValueError):
        radial_convolve(-np.ones(200), 1.0, mesh)


def test_indicator_ball_newtonian():
    mesh = RadialMesh(4.0, 4000)
    r = mesh.r
    out = radial_convolve((r <= 1.0).astype(float), 1.0, mesh)
    exact = np.where(r <= 1, 2 * np.pi * (1 - r ** 2 / 3), 4 * np.pi / 3 / r)
    sel = np.abs(r - 1) > 2 * mesh.h
    assert np.max(np.abs(out - exact)[sel] / exact[sel]) <= 1e-5


def test_general_kernel_matches_grid():
    # radially extended Gaussian, alpha = 1.5, against the 3-d spectral grid convolution
    alpha = 1.5
    g = Grid(3, 8.0, 64)
    rg = np.broadcast_to(g.radius(), g.shape)
    grid_out = riesz_convolve(np.exp(-rg ** 2), RieszKernel(g, alpha, "spectral"))
    mesh = RadialMesh(8.0, 800)
    prof = radial_convolve(np.exp(-mesh.r ** 2), alpha, mesh)
    sel = rg < 3.0
    interp = np.interp(rg[sel], mesh.r, prof)
    assert np.max(np.abs(interp - grid_out[sel]) / grid_out[sel]) <= 1e-4


def test_general_path_reduces_to_newtonian():
    mesh = RadialMesh(6.0, 400)
    f = np.exp(-mesh.r ** 2)
    newt = RadialOperator(mesh, 1.0)
    gen = RadialOperator(mesh, 1.0 + 1e-12)
    assert newt.newtonian and not gen.newtonian
    np.testing.assert_allclose(gen.convolve(f), newt.convolve(f), rtol=2e-4)


def test_ground_state_identities(ground_p2):
    pr = ground_p2
    assert pr.converged
    assert pr.nehari_residual <= 1e-10
    assert pr.energy == pytest.approx(0.25 * pr.norm2, rel=1e-10)
    assert np.min(pr.values) >= 0
    assert pr.monotone_after_max()


def test_energy_scaling_law(ground_p2):
    for lam in (2.0, 4.0):
        pr = solve_ground_state(lam, 3, 1.0, 2.0, RadialMesh(30.0 / math.sqrt(lam), 3000, 3))
        assert pr.energy / ground_p2.energy == pytest.approx(lam ** 1.5, rel=1e-2)


def test_energy_nondecreasing_in_lambda():
    E = [solve_ground_state(lam, 3, 1.0, 2.5, RadialMesh(25.0, 1500, 3)).energy for lam in (0.5, 1.0, 1.5)]
    assert E[0] <= E[1] <= E[2]


def test_mesh_refinement_stability(ground_p2):
    fine = solve_ground_state(1.0, 3, 1.0, 2.0, RadialMesh(30.0, 6000, 3))
    assert abs(fine.energy - ground_p2.energy) / fine.energy <= 1e-4


def test_synthetic_decay_fit():
    mesh = RadialMesh(15.0, 3000)
    r = mesh.r
    prof = RadialProfile(r, np.exp(-2 * r) / r, 4.0, 3, 1.0, 2.0, 15.0, 0, 0, 0, 0, 0, True, 0)
    fit = decay_fit(prof)
    assert isinstance(fit, DecayFit)
    assert fit.rate == pytest.approx(2.0, abs=1e-3)
    assert fit.power == pytest.approx(1.0, abs=1e-2)


def test_fit_log_tail_exact_model():
    r = np.linspace(5, 20, 200)
    rate, power, rms = fit_log_tail(r, 3.0 * r ** -0.7 * np.exp(-1.3 * r))
    assert rate == pytest.approx(1.3, abs=1e-10) and power == pytest.approx(0.7, abs=1e-9)


def test_decay_window_guard(ground_p2):
    with pytest.raises(UnreliableWindow):
        decay_fit(ground_p2, window=(1.0, 29.0))


def test_ground_state_decay_rates(ground_p2, ground_p25):
    assert math.sqrt(0.9) <= decay_fit(ground_p2).rate <= 1.05
    assert decay_fit(ground_p25).rate == pytest.approx(1.0, rel=0.02)


def test_fibre_maximum_at_profile(ground_p2):
    pr = ground_p2
    t = (pr.norm2 / pr.D) ** (1 / (2 * pr.p - 2))
    assert abs(t - 1) <= 1e-8


def test_profile_roundtrip(tmp_path, ground_p2):
    path = tmp_path / "prof.csv"
    ground_p2.save(path, extra={"tag": 1})
    back = RadialProfile.load(path)
    np.testing.assert_array_equal(back.values, ground_p2.values)
    assert back.energy == ground_p2.energy
