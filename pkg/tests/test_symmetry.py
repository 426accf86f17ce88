import numpy as np
import pytest

from choquard.analysis import smooth_random_field
from choquard.field import Grid, make_potentials, norm_AV
from choquard.symmetry import (DegenerateLoop, SymmetrySpec, act, compat_check, equivariance_defect, symmetrize,
                               winding_number)
from conftest import gaussian


@pytest.fixture(scope="module")
def grid():
    return Grid(3, 6.0, 32)


def test_spec_validation():
    with pytest.raises(ValueError):
        SymmetrySpec(4, 4)
    with pytest.raises(ValueError):
        SymmetrySpec(0, 0)


def test_identity_action(grid, rng):
    u = smooth_random_field(grid, rng)
    np.testing.assert_array_equal(act(u, 0, SymmetrySpec(4, 1), grid), u)


def test_quarter_turn_phase(grid):
    u = gaussian(grid, 1.0, center=(1.5, 0.5, 0.0))
    out = act(u, 1, SymmetrySpec(4, 1), grid)
    manual = np.rot90(u, k=1, axes=(0, 1))
    manual_other = np.rot90(u, k=-1, axes=(0, 1))
    assert np.array_equal(out, 1j * manual) or np.array_equal(out, 1j * manual_other)


def test_action_preserves_norm(grid, rng):
    pot = make_potentials(grid, 1.0, "well", "constant_field", a_args={"strength": 0.3})
    spec = SymmetrySpec(4, 1)
    u = smooth_random_field(grid, rng)
    for j in range(4):
        assert norm_AV(act(u, j, spec, grid), pot, grid) == pytest.approx(norm_AV(u, pot, grid), rel=1e-12)


def test_projector_fixes_image_and_is_idempotent(grid, rng):
    for spec in (SymmetrySpec(2, 1), SymmetrySpec(4, 1), SymmetrySpec(4, 3)):
        s = symmetrize(smooth_random_field(grid, rng), spec, grid)
        np.testing.assert_array_equal(symmetrize(s, spec, grid), s)
        assert equivariance_defect(s, spec, grid) == 0.0


def test_twisted_half_turn_kills_even_bump(grid):
    u = gaussian(grid, 1.0)
    assert np.max(np.abs(symmetrize(u, SymmetrySpec(2, 1), grid))) == 0.0


def test_winding_of_radial_bump_and_vortex(grid):
    spec = SymmetrySpec(4, 1)
    bump = gaussian(grid, 2.0)
    assert winding_number(bump, 1.5, spec, grid) == 0
    X = grid.mesh()
    assert winding_number((X[0] + 1j * X[1]) * bump, 1.5, spec, grid) == 1
    assert winding_number((X[0] - 1j * X[1]) ** 3 * bump, 1.5, spec, grid) == -3


def test_winding_degenerate_loop(grid):
    with pytest.raises(DegenerateLoop):
        winding_number(np.zeros(grid.shape, complex), 1.5, SymmetrySpec(4, 1), grid)


@pytest.mark.parametrize("k", [2, 3, 4, 6])
def test_radial_and_constant_field_compatible(grid, k):
    pot = make_potentials(grid, 1.0, "well", "constant_field", a_args={"strength": 0.5})
    assert compat_check(pot, SymmetrySpec(k, 1), grid).compatible


def test_off_axis_bump_violation(grid):
    pot = make_potentials(grid, 1.0, "offaxis_bump")
    rep = compat_check(pot, SymmetrySpec(4, 1), grid)
    assert not rep.compatible
    amp = np.max(pot.V) - np.min(pot.V)
    assert rep.max_V_violation == pytest.approx(amp, rel=0.05)
    assert len(rep.worst_node) == 3
