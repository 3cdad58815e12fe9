"""Tests for built-in schemes and the coefficient algebra of methods."""

from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from epirk.exceptions import InvalidArgumentError, NotAvailableError
from epirk.models.method import (
    MethodForm,
    Strategy,
    embedded_method,
    summarize,
    to_forward_difference,
    to_residual_form,
    validate,
)
from epirk.models.phi_combination import PhiCombination, PhiSum
from epirk.schemes.builtin import BUILTIN_NAMES, builtin, embedded_estimator


@pytest.fixture
def sample_matrix():
    """Small stable matrix for evaluating coefficient functions."""
    rng = np.random.default_rng(3)
    return -np.eye(4) + 0.3 * rng.standard_normal((4, 4))


def test_builtin_names():
    """All four schemes are registered."""
    assert BUILTIN_NAMES == ["EPIRK4s3A", "EPIRK4s3B", "EPIRK5s3", "EXPRB53s3"]


def test_builtin_lookup_is_case_insensitive():
    """Method names match regardless of case."""
    assert builtin("epirk4s3a").name == "EPIRK4s3A"


def test_builtin_unknown():
    """Unknown names list the available methods."""
    with pytest.raises(InvalidArgumentError, match="EPIRK5s3"):
        builtin("RK4")


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtins_are_structurally_valid(name):
    """Normalization, scale and coefficient restrictions hold for every builtin."""
    assert validate(builtin(name)) == []


def test_coefficient_restriction_accepts_alpha_equal_g_path():
    """EPIRK4s3B has alpha_21 * P_21 = 1/3 but passes through alpha_21 = g_21."""
    method = builtin("EPIRK4s3B")
    assert method.alpha[(2, 1)] == method.psi[(2, 1)].single_scale
    assert validate(method) == []


def test_coefficient_restriction_flags_stage_failing_every_path():
    """alpha = 1/3 with a unit phi_1 at g = 1/2 matches none of the three relations."""
    method = replace(builtin("EPIRK4s3A"), alpha={(2, 1): Fraction(1, 3), (3, 1): Fraction(2, 3)})
    violations = validate(method)
    assert len(violations) == 1
    assert violations[0].startswith("coefficient restriction: stage 2")


def test_epirk5s3_b3_phi4_coefficient():
    """The b_3 phi_4 weight is the exact rational that closes the order conditions."""
    b3 = builtin("EPIRK5s3").coefficient(4, 3)
    assert b3.part(1).coefficient(4) == Fraction(-120285, 1696)


def test_declared_orders():
    """Declared stiff orders and strategy hints."""
    summaries = {name: summarize(builtin(name)) for name in BUILTIN_NAMES}
    assert summaries["EPIRK4s3A"].stiff_order == 4
    assert summaries["EPIRK5s3"].stiff_order == 5
    assert summaries["EPIRK5s3"].strategy_hint == Strategy.HORIZONTAL.value
    assert summaries["EPIRK4s3A"].has_embedded
    assert not summaries["EPIRK4s3B"].has_embedded


def test_embedded_estimator():
    """EPIRK4s3A carries a third-order estimator; the others raise."""
    estimator = embedded_estimator("EPIRK4s3A")
    assert set(estimator) == {1, 2}
    assert estimator[2].part(1).as_dict() == {3: Fraction(8)}
    with pytest.raises(NotAvailableError):
        embedded_estimator("EPIRK5s3")


def test_embedded_method_swaps_final_stage():
    """The embedded method keeps internal stages and uses the estimator row."""
    method = builtin("EPIRK4s3A")
    lower = embedded_method(method)
    assert lower.stiff_order == 3
    assert lower.psi[(2, 1)] == method.psi[(2, 1)]
    assert (4, 3) not in lower.psi
    assert lower.embedded is None


def test_residual_form_of_residual_method(sample_matrix):
    """A residual-form method maps onto its own alpha * psi products."""
    method = builtin("EXPRB53s3")
    coeffs = to_residual_form(method)
    assert coeffs.final_row == 4
    assert set(coeffs.row(3)) == {1, 2}
    assert coeffs.a_at(3, 2).scales == (Fraction(1, 2), Fraction(9, 10))
    assert coeffs.b_at(2) == method.coefficient(4, 2)


def test_forward_difference_round_trip(sample_matrix):
    """Residual -> forward-difference -> residual preserves every coefficient function."""
    method = builtin("EPIRK5s3")
    forward = to_forward_difference(method)
    assert forward.form == MethodForm.FORWARD_DIFFERENCE
    original = to_residual_form(method)
    restored = to_residual_form(forward)
    for j in (2, 3):
        expected = original.b_at(j).evaluate_matrix(sample_matrix)
        assert np.allclose(restored.b_at(j).evaluate_matrix(sample_matrix), expected)
    assert np.allclose(
        restored.a_at(3, 2).evaluate_matrix(sample_matrix),
        original.a_at(3, 2).evaluate_matrix(sample_matrix),
    )


def test_forward_difference_expansion():
    """A second forward difference c_3 splits into -2 c_3 on r(U_2) and c_3 on r(U_3)."""
    method = to_forward_difference(builtin("EPIRK4s3A"))
    c2 = method.coefficient(4, 2)
    c3 = method.coefficient(4, 3)
    coeffs = to_residual_form(method)
    assert coeffs.b_at(3) == c3
    assert coeffs.b_at(2) == c2 - c3 * 2


def test_phi_sum_merges_scales():
    """Terms at the same scale are added; zero parts vanish."""
    a = PhiSum.single({1: 1, 2: 3}, Fraction(1, 2))
    b = PhiSum.single({2: -3}, Fraction(1, 2))
    c = PhiSum.single({3: 1})
    total = a + b + c
    assert total.scales == (Fraction(1, 2), Fraction(1))
    assert total.part(Fraction(1, 2)).as_dict() == {1: Fraction(1)}
    assert (a - a).is_zero


def test_phi_combination_scalar_matches_matrix():
    """Scalar evaluation agrees with the 1x1 dense evaluation."""
    combo = PhiCombination.of({1: 2, 3: Fraction(-1, 2)}, Fraction(2, 3))
    z = -1.7
    dense = combo.evaluate_matrix(np.array([[z]]))[0, 0]
    assert combo.evaluate_scalar(z).real == pytest.approx(dense)
    assert combo.at_zero() == 2 - Fraction(1, 12)
