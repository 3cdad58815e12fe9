"""EPIRK tableau representation and coefficient algebra.

A method with s stages computes, for i = 2..s,

    U_i = u_n + alpha_i1 psi_i1(hJ) h f(u_n) + sum_{j=2}^{i-1} alpha_ij psi_ij(hJ) h D_ij

and the final stage u_{n+1} the same way with beta_j and psi_{s+1,j}. In the
forward-difference form D_ij is the (j-1)-th forward difference of r over
(u_n, U_2, ..., U_j); in the residual form D_ij = r(U_j). Execution and order
checking always use the residual form.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from math import comb
from typing import Dict, List, Optional, Tuple

from epirk.exceptions import InvalidArgumentError
from epirk.models.phi_combination import PhiSum

logger = logging.getLogger(__name__)

StageKey = Tuple[int, int]


class MethodForm(str, Enum):
    """Which vectors the internal coefficients act on."""

    FORWARD_DIFFERENCE = "epirk_forward_difference"
    RESIDUAL = "exprb_residual"


class Strategy(str, Enum):
    """Exponential-Krylov execution strategy."""

    VERTICAL = "vertical"
    HORIZONTAL = "horizontal"
    MIXED = "mixed"


@dataclass(frozen=True)
class MethodDefinition:
    """
    Full tableau of an s-stage EPIRK scheme.

    ``alpha`` and ``psi`` are keyed by (row, column) with rows 2..s+1 (row
    s+1 is the final stage, whose weights live in ``beta`` keyed by column).
    ``embedded`` holds the lower-order final-stage coefficient functions,
    already multiplied by their weights, keyed by column.
    """

    name: str
    stages: int
    alpha: Dict[StageKey, Fraction]
    beta: Dict[int, Fraction]
    psi: Dict[StageKey, PhiSum]
    form: MethodForm = MethodForm.RESIDUAL
    stiff_order: int = 2
    strategy_hint: Strategy = Strategy.VERTICAL
    embedded: Optional[Dict[int, PhiSum]] = None
    embedded_order: Optional[int] = None
    description: str = ""

    @property
    def final_row(self) -> int:
        return self.stages + 1

    def weight(self, i: int, j: int) -> Fraction:
        """alpha_ij for internal rows, beta_j for the final row."""
        if i == self.final_row:
            return self.beta.get(j, Fraction(0))
        return self.alpha.get((i, j), Fraction(0))

    def coefficient(self, i: int, j: int) -> PhiSum:
        """Weight times psi for entry (i, j) in the method's own form."""
        psi = self.psi.get((i, j))
        if psi is None:
            return PhiSum.zero()
        return psi * self.weight(i, j)

    def first_column_scale(self, i: int) -> Optional[Fraction]:
        psi = self.psi.get((i, 1))
        return psi.single_scale if psi is not None else None

    def with_psi(self, key: StageKey, psi: PhiSum) -> "MethodDefinition":
        """Copy with one psi entry replaced."""
        table = dict(self.psi)
        table[key] = psi
        return replace(self, psi=table)

    def with_beta(self, j: int, value: Fraction) -> "MethodDefinition":
        weights = dict(self.beta)
        weights[j] = Fraction(value)
        return replace(self, beta=weights)


@dataclass(frozen=True)
class ResidualFormCoefficients:
    """
    Coefficient functions acting on h f(u_n) and h r(U_j).

    ``f_terms[i]`` multiplies h f(u_n) in row i (rows 2..s+1), ``a[(i, j)]``
    multiplies h r(U_j) in internal row i and ``b[j]`` in the final row.
    """

    stages: int
    f_terms: Dict[int, PhiSum]
    a: Dict[StageKey, PhiSum]
    b: Dict[int, PhiSum]
    embedded_f: Optional[PhiSum] = None
    embedded_b: Optional[Dict[int, PhiSum]] = None

    @property
    def final_row(self) -> int:
        return self.stages + 1

    def row(self, i: int, embedded: bool = False) -> Dict[int, PhiSum]:
        """Nonzero coefficient functions of row i keyed by source (1 means f)."""
        if embedded:
            if self.embedded_b is None or self.embedded_f is None:
                raise InvalidArgumentError("method has no embedded final stage")
            entries = {1: self.embedded_f, **self.embedded_b}
        elif i == self.final_row:
            entries = {1: self.f_terms.get(i, PhiSum.zero()), **self.b}
        else:
            entries = {1: self.f_terms.get(i, PhiSum.zero())}
            entries.update({j: c for (r, j), c in self.a.items() if r == i})
        return {j: c for j, c in sorted(entries.items()) if not c.is_zero}

    def b_at(self, j: int) -> PhiSum:
        return self.b.get(j, PhiSum.zero())

    def a_at(self, i: int, j: int) -> PhiSum:
        return self.a.get((i, j), PhiSum.zero())


def _difference_weight(j: int, m: int) -> int:
    """Coefficient of r(U_m) in the (j-1)-th forward difference over u_n, U_2, ..., U_j."""
    return (-1) ** (j - m) * comb(j - 1, m - 1)


def _expand_row(coefficients: Dict[int, PhiSum], row: int) -> Dict[int, PhiSum]:
    """Regroup forward-difference coefficients c_ij into per-residual a_im."""
    out: Dict[int, PhiSum] = {}
    for m in range(2, row):
        total = PhiSum.zero()
        for j in range(m, row):
            c = coefficients.get(j)
            if c is not None and not c.is_zero:
                total = total + c * _difference_weight(j, m)
        if not total.is_zero:
            out[m] = total
    return out


def _collapse_row(coefficients: Dict[int, PhiSum], row: int) -> Dict[int, PhiSum]:
    """Inverse of _expand_row by back substitution from the last column."""
    out: Dict[int, PhiSum] = {}
    for m in range(row - 1, 1, -1):
        c = coefficients.get(m, PhiSum.zero())
        for j in range(m + 1, row):
            if j in out:
                c = c - out[j] * _difference_weight(j, m)
        if not c.is_zero:
            out[m] = c
    return dict(sorted(out.items()))


def _row_entries(method: MethodDefinition, row: int) -> Dict[int, PhiSum]:
    return {
        j: method.coefficient(row, j)
        for (i, j) in method.psi
        if i == row and j >= 2 and not method.coefficient(row, j).is_zero
    }


def to_residual_form(method: MethodDefinition) -> ResidualFormCoefficients:
    """
    Convert a method to coefficient functions acting on h f(u_n) and h r(U_j).

    Forward differences are expanded into signed binomial combinations of
    stage residuals and regrouped per residual; a residual-form method is
    returned as its own products alpha_ij psi_ij.

    Args:
        method: method definition

    Returns:
        ResidualFormCoefficients
    """
    s = method.stages
    f_terms = {i: method.coefficient(i, 1) for i in range(2, s + 2)}
    a: Dict[StageKey, PhiSum] = {}
    b: Dict[int, PhiSum] = {}
    expand = method.form == MethodForm.FORWARD_DIFFERENCE
    for i in range(2, s + 2):
        entries = _row_entries(method, i)
        if expand:
            entries = _expand_row(entries, i)
        if i == s + 1:
            b = entries
        else:
            a.update({(i, j): c for j, c in entries.items()})

    embedded_f: Optional[PhiSum] = None
    embedded_b: Optional[Dict[int, PhiSum]] = None
    if method.embedded is not None:
        embedded_f = method.embedded.get(1, PhiSum.zero())
        rest = {j: c for j, c in method.embedded.items() if j >= 2 and not c.is_zero}
        embedded_b = _expand_row(rest, s + 1) if expand else rest
    return ResidualFormCoefficients(
        stages=s,
        f_terms=f_terms,
        a=a,
        b=b,
        embedded_f=embedded_f,
        embedded_b=embedded_b,
    )


def to_forward_difference(method: MethodDefinition) -> MethodDefinition:
    """
    Rewrite a method in forward-difference form.

    The first column keeps its weights and psi; every other entry is stored
    with unit weight and the collapsed coefficient function.
    """
    if method.form == MethodForm.FORWARD_DIFFERENCE:
        return method
    coeffs = to_residual_form(method)
    s = method.stages
    alpha = {(i, 1): w for (i, j), w in method.alpha.items() if j == 1}
    beta = {1: method.beta.get(1, Fraction(0))}
    psi = {(i, 1): p for (i, j), p in method.psi.items() if j == 1}
    for i in range(2, s + 2):
        row = coeffs.b if i == s + 1 else {j: c for (r, j), c in coeffs.a.items() if r == i}
        for j, c in _collapse_row(row, i).items():
            psi[(i, j)] = c
            if i == s + 1:
                beta[j] = Fraction(1)
            else:
                alpha[(i, j)] = Fraction(1)
    embedded = None
    if method.embedded is not None and coeffs.embedded_b is not None:
        embedded = {1: coeffs.embedded_f or PhiSum.zero()}
        embedded.update(_collapse_row(coeffs.embedded_b, s + 1))
    return replace(
        method,
        alpha=alpha,
        beta=beta,
        psi=psi,
        form=MethodForm.FORWARD_DIFFERENCE,
        embedded=embedded,
    )


def embedded_method(method: MethodDefinition) -> MethodDefinition:
    """The lower-order method obtained by swapping in the embedded final stage."""
    if method.embedded is None:
        raise InvalidArgumentError(f"{method.name} has no embedded final stage")
    s = method.stages
    psi = {key: p for key, p in method.psi.items() if key[0] <= s}
    beta: Dict[int, Fraction] = {}
    for j, c in method.embedded.items():
        psi[(s + 1, j)] = c
        beta[j] = Fraction(1)
    return replace(
        method,
        name=f"{method.name}-embedded",
        psi=psi,
        beta=beta,
        stiff_order=method.embedded_order or method.stiff_order - 1,
        embedded=None,
        embedded_order=None,
    )


def _is_phi1_unit(psi: Optional[PhiSum]) -> bool:
    if psi is None or psi.single_scale != 1:
        return False
    return psi.parts[0].as_dict() == {1: Fraction(1)}


def validate(method: MethodDefinition) -> List[str]:
    """
    Check the structural constraints of a method.

    Returns:
        Human-readable violations; empty when every check passes
    """
    violations: List[str] = []
    s = method.stages
    if s < 1:
        return [f"stage count must be >= 1, got {s}"]

    for (i, j), psi in method.psi.items():
        if not 2 <= i <= s + 1 or not 1 <= j < i:
            violations.append(f"psi({i},{j}) outside the tableau of a {s}-stage method")
            continue
        for g in psi.scales:
            if not 0 < g <= 1:
                violations.append(f"scale g({i},{j}) = {g} outside (0, 1]")
    if method.embedded is not None:
        for j, c in method.embedded.items():
            for g in c.scales:
                if not 0 < g <= 1:
                    violations.append(f"embedded scale g({j}) = {g} outside (0, 1]")

    final = s + 1
    if method.stiff_order >= 2:
        if method.beta.get(1) != 1:
            violations.append(f"normalization: beta_1 must be 1, got {method.beta.get(1)}")
        if not _is_phi1_unit(method.psi.get((final, 1))):
            violations.append(f"normalization: psi({final},1) must be phi_1 with g = 1")

    if method.stiff_order >= 3:
        for (i, j), psi in method.psi.items():
            if i == final and j >= 2 and not psi.is_zero and any(g != 1 for g in psi.scales):
                violations.append(
                    f"final-stage scale constraint: g({i},{j}) must be 1, got {list(psi.scales)}"
                )

    for i in range(2, s + 1):
        psi = method.psi.get((i, 1))
        if psi is None or psi.is_zero:
            violations.append(f"stage {i} has no f(u_n) term")
            continue
        g = psi.single_scale
        if g is None:
            violations.append(f"psi({i},1) must use a single scale, got {list(psi.scales)}")
            continue
        alpha = method.alpha.get((i, 1), Fraction(0))
        p = psi.parts[0].as_dict()
        if not (
            all(alpha * pk == g for pk in p.values())
            or alpha == g
            or all(pk == g for pk in p.values())
        ):
            violations.append(
                f"coefficient restriction: stage {i} needs alpha*p = g, alpha = g or p = g "
                f"(alpha={alpha}, g={g}, p={dict(p)})"
            )

    if violations:
        logger.info(f"{method.name}: {len(violations)} structural violation(s)")
    return violations


def p_coefficients(method: MethodDefinition, i: int) -> Dict[int, Fraction]:
    """p_i1k of the single-scale first-column psi of stage i."""
    psi = method.psi.get((i, 1))
    if psi is None or psi.single_scale is None:
        raise InvalidArgumentError(f"psi({i},1) must be a single-scale combination")
    return psi.parts[0].as_dict()


@dataclass
class MethodSummary:
    """Short description used by listings."""

    name: str
    stages: int
    stiff_order: int
    strategy_hint: str
    has_embedded: bool
    scales: List[str] = field(default_factory=list)


def summarize(method: MethodDefinition) -> MethodSummary:
    scales = sorted({str(g) for psi in method.psi.values() for g in psi.scales})
    return MethodSummary(
        name=method.name,
        stages=method.stages,
        stiff_order=method.stiff_order,
        strategy_hint=method.strategy_hint.value,
        has_embedded=method.embedded is not None,
        scales=scales,
    )
