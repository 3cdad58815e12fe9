"""Tests for the tableau text format."""

from fractions import Fraction

import pytest

from epirk.exceptions import TableauParseError
from epirk.models.method import MethodForm, Strategy
from epirk.schemes.builtin import builtin
from epirk.schemes.tableau_file import dump_tableau, load_tableau, parse_phi_terms, parse_tableau

EPIRK4S3A_TEXT = """
# fourth-order three-stage scheme
NAME     EPIRK4s3A
FORM     residual
ORDER    4
STRATEGY mixed
EMBEDDED_ORDER 3
STAGES   3

ALPHA
(2,1) = 1/2
(3,1) = 2/3

BETA
(1) = 1

PSI
(2,1) = 1/2; phi_1
(3,1) = 2/3; phi_1
(4,1) = 1; phi_1
(4,2) = 1; 32*phi_3 - 144*phi_4   # b_2
(4,3) = 1; -27/2*phi_3 + 81*phi_4

EMBEDDED
(1) = 1; phi_1
(2) = 1; 8*phi_3
"""


def test_parse_matches_builtin():
    """The documented example reproduces the built-in EPIRK4s3A."""
    method = parse_tableau(EPIRK4S3A_TEXT)
    reference = builtin("EPIRK4s3A")
    assert method.name == "EPIRK4s3A"
    assert method.stages == 3
    assert method.stiff_order == 4
    assert method.embedded_order == 3
    assert method.strategy_hint == Strategy.MIXED
    assert method.psi == reference.psi
    assert method.embedded == reference.embedded
    for j in (1, 2, 3):
        assert method.weight(4, j) == Fraction(1)


def test_parse_phi_terms():
    """Signs, rationals and implicit unit coefficients."""
    assert parse_phi_terms("32*phi_3 - 144*phi_4") == {3: 32, 4: -144}
    assert parse_phi_terms("-phi_1 + 1/2*phi_2") == {1: -1, 2: Fraction(1, 2)}
    assert parse_phi_terms("phi_2 + phi_2") == {2: 2}


def test_multiple_scales_in_one_entry():
    """Repeating a PSI key adds another scale."""
    text = """
STAGES 2
PSI
(2,1) = 1/2; phi_1
(3,1) = 1; phi_1
(3,2) = 1/2; phi_3
(3,2) = 1; 2*phi_3
"""
    method = parse_tableau(text, source="two_scale.tab")
    assert method.name == "two_scale"
    assert method.psi[(3, 2)].scales == (Fraction(1, 2), Fraction(1))
    assert method.form == MethodForm.RESIDUAL


def test_dump_and_reload(tmp_path):
    """A dumped builtin reads back to the same tableau."""
    method = builtin("EXPRB53s3")
    path = tmp_path / "exprb53s3.tab"
    path.write_text(dump_tableau(method), encoding="utf-8")
    loaded = load_tableau(path)
    assert loaded.psi == method.psi
    assert loaded.alpha == method.alpha
    assert loaded.beta == method.beta
    assert loaded.stiff_order == method.stiff_order


@pytest.mark.parametrize(
    "text, line",
    [
        ("STAGES 3\nFORM sideways\n", 2),
        ("STAGES 3\nPSI\n(5,1) = 1; phi_1\n", 3),
        ("STAGES 3\nPSI\n(2,1) = 1/2; 3*psi_1\n", 3),
        ("STAGES 3\nPSI\n(2,1) = 0; phi_1\n", 3),
        ("STAGES 3\nALPHA\n(2,1) = one half\n", 3),
        ("STAGES 3\n(2,1) = 1/2\n", 2),
        ("PSI\n(2,1) = 1/2; phi_1\n", 2),
    ],
)
def test_parse_errors_carry_line_numbers(text, line):
    """Malformed input raises TableauParseError at the offending line."""
    with pytest.raises(TableauParseError) as info:
        parse_tableau(text)
    assert info.value.line == line
