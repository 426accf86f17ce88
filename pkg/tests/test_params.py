from fractions import Fraction

import math
import pytest

from choquard.params import ProblemParams, delta_tau, exact, lambda_set, standing_window, validate
from choquard.symmetry import SymmetrySpec


def test_reference_admissible_with_standing_window():
    rep = validate(ProblemParams(3, 1, 2))
    assert rep.admissible and rep.violations == []
    w = standing_window(3, 1)
    assert (w.lo, w.hi) == (Fraction(5, 3), Fraction(5))
    assert not w.lo_closed and not w.hi_closed


def test_upper_exponent_violation_named():
    rep = validate(ProblemParams(3, 1, 6))
    assert not rep.admissible
    assert any("(2N - alpha)/(N - 2) = 5" in v for v in rep.violations)


def test_large_alpha_window_contains_two():
    w = standing_window(3, 2.5)
    assert w.lo == 2 - exact(2.5) / 3 and w.hi == Fraction(7, 2)
    assert 2 in w
    assert validate(ProblemParams(3, 2.5, 2)).admissible


def test_lambda_set_reference_exact():
    ls = lambda_set(ProblemParams(3, 1, 2))
    iv = ls.intersection
    assert (iv.lo, iv.hi, iv.lo_closed, iv.hi_closed) == (Fraction(2), Fraction(9, 4), False, True)
    assert str(iv) == "(2, 9/4]"


def test_lambda_set_four_dims():
    iv = lambda_set(ProblemParams(4, 2, 2)).intersection
    assert (iv.lo, iv.hi, iv.lo_closed, iv.hi_closed) == (Fraction(2), Fraction(3), False, True)


def test_lambda_set_empties_at_upper_endpoint():
    near = lambda_set(ProblemParams(3, 1, 4.99)).intersection
    assert not near.empty and near.hi == 6
    ls = lambda_set(ProblemParams(3, 1, 5))
    assert ls.intersection.empty
    assert ls.first_empty == "sobolev&riesz&bootstrap"
    assert not validate(ProblemParams(3, 1, 5)).admissible


def test_delta_tau_values():
    assert delta_tau(SymmetrySpec(2, 1)) == 1.0
    assert delta_tau(SymmetrySpec(4, 1)) == pytest.approx(0.7071067811865476, rel=2.3e-16)
    assert delta_tau(SymmetrySpec(1, 0)) == 1.0


def test_h2_claim_checked_against_symmetry():
    p = ProblemParams(3, 1, 2, v_inf=1.0, kappa=1.9, claims=frozenset({"H2"}))
    assert validate(p, SymmetrySpec(2, 1)).admissible
    assert not validate(p, SymmetrySpec(4, 1)).admissible


def test_dimension_two_needs_flag():
    assert not validate(ProblemParams(2, 1, 2)).admissible
    rep = validate(ProblemParams(2, 1, 2, nonrigorous=True))
    assert rep.admissible and rep.nonrigorous
