import numpy as np
import pytest

from choquard.analysis import random_lattice_phase, smooth_random_field
from choquard.field import (Grid, GridMismatch, PotentialPair,
                            constant_field, covariant_gradient, diamagnetic_check, gauge_transform, inner_AV,
                            l2_norm, load_snapshot, make_potentials, norm_AV, save_snapshot, spectral_gradient)
from conftest import gaussian


def test_cell_centred_nodes_and_weight():
    g = Grid(3, 2.0, 8)
    x = g.axis()
    assert x[0] == pytest.approx(-2.0 + 0.25) and x[-1] == pytest.approx(2.0 - 0.25)
    np.testing.assert_array_equal(x, -x[::-1])
    assert g.weight == g.h ** 3 and g.coords().shape == (3, 8, 8, 8)


def test_grid_rejects_bad_sizes():
    for args in [(3, 1.0, 7), (4, 1.0, 8), (3, 0.0, 8)]:
        with pytest.raises(ValueError):
            Grid(*args)


def test_zero_field_norms():
    g = Grid(3, 4.0, 16)
    pot = make_potentials(g, 1.0, "well", "constant_field", a_args={"strength": 0.3})
    u = np.zeros(g.shape, complex)
    assert norm_AV(u, pot, g) == 0.0 and l2_norm(u, g) == 0.0


def test_zero_potential_reduces_to_plain_gradient():
    g = Grid(3, 6.0, 32)
    u = gaussian(g)
    A = np.zeros((3,) + g.shape)
    np.testing.assert_array_equal(covariant_gradient(u, A, g), spectral_gradient(u, g))


def test_plane_wave_with_constant_potential():
    g = Grid(3, np.pi, 16)
    X = g.mesh()
    kv = np.array([1.0, -2.0, 3.0])
    u = np.exp(1j * sum(k * x for k, x in zip(kv, X)))
    a = np.array([0.3, 0.1, -0.7])
    A = np.stack([np.full(g.shape, c) for c in a])
    mod = np.sqrt(np.sum(np.abs(covariant_gradient(u, A, g)) ** 2, axis=0))
    np.testing.assert_allclose(mod, np.linalg.norm(kv + a), rtol=1e-12)


def test_gauge_shift_of_covariant_gradient(rng):
    g = Grid(3, 8.0, 64)
    u = smooth_random_field(g, rng)
    A = constant_field(g, 0.2)
    phi, gphi = random_lattice_phase(g, rng)
    v, A2 = gauge_transform(u, A, phi, gphi)
    lhs = covariant_gradient(v, A2, g)
    rhs = np.exp(-1j * phi) * covariant_gradient(u, A, g)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * np.max(np.abs(rhs))


def test_free_norm_matches_h1():
    g = Grid(3, 6.0, 32)
    u = gaussian(g)
    pot = make_potentials(g, 1.0)
    grad = spectral_gradient(u, g)
    h1 = np.sqrt(g.integrate(np.sum(np.abs(grad) ** 2, axis=0) + np.abs(u) ** 2))
    assert norm_AV(u, pot, g) == pytest.approx(h1, rel=1e-13)


def test_norm_matches_inner_product(rng):
    g = Grid(3, 8.0, 32)
    pot = make_potentials(g, 1.0, "well", "constant_field", a_args={"strength": 0.2})
    u = smooth_random_field(g, rng)
    assert norm_AV(u, pot, g) ** 2 == pytest.approx(inner_AV(u, u, pot, g), rel=1e-12)


def test_diamagnetic_equality_for_real_nonnegative():
    g = Grid(3, 6.0, 32)
    rep = diamagnetic_check(gaussian(g), np.zeros((3,) + g.shape), g)
    assert rep.holds and abs(rep.margin) <= 1e-12 * rep.rhs


def test_diamagnetic_strict_for_modulated_bump():
    g = Grid(3, 2 * np.pi, 64)
    X = g.mesh()
    bump = gaussian(g, 1.0)
    u = np.exp(1j * 2.0 * X[0]) * bump
    rep = diamagnetic_check(u, np.zeros((3,) + g.shape), g)
    gb = spectral_gradient(bump, g)
    nb = np.sqrt(g.integrate(np.sum(np.abs(gb) ** 2, axis=0)))
    assert rep.lhs == pytest.approx(nb, rel=1e-8)
    assert rep.rhs == pytest.approx(np.sqrt(nb ** 2 + 4.0 * l2_norm(bump, g) ** 2), rel=1e-10)
    assert rep.holds and rep.margin > 0.1


@pytest.mark.parametrize("n", [32, 64])
def test_diamagnetic_random_fields_constant_field(rng, n):
    g = Grid(3, 12.0, n)
    A = constant_field(g, 0.3)
    for _ in range(3):
        assert diamagnetic_check(smooth_random_field(g, rng, width=1.5), A, g).holds


def test_potential_must_be_positive():
    g = Grid(3, 4.0, 8)
    with pytest.raises(ValueError):
        PotentialPair(np.zeros((3,) + g.shape), np.zeros(g.shape), 1.0)


def test_grid_mismatch():
    g = Grid(3, 4.0, 8)
    with pytest.raises(GridMismatch):
        covariant_gradient(np.zeros((8, 8)), np.zeros((3, 8, 8, 8)), g)


def test_snapshot_roundtrip(tmp_path, rng):
    g = Grid(3, 4.0, 8)
    u = (rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)).astype(np.complex64)
    save_snapshot(tmp_path / "f.bin", u, g, meta={"note": "x"})
    v, g2, meta = load_snapshot(tmp_path / "f.bin")
    assert g2 == g
    np.testing.assert_array_equal(v, u)
