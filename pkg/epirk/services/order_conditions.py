"""Numerical verification of stiff order conditions.

Coefficients enter through Q_ik = alpha_i1 * P_ik with

    P_i1 = sum_k p_i1k / k!,  P_i2 = sum_k p_i1k / (k+1)!,  P_i3 = sum_k p_i1k / (k+2)!

and b_i(Z) the final-stage residual coefficients. Full conditions are operator
identities checked on random sample matrices; the simplified ones replace b_i(Z)
by b_i(0) and are evaluated exactly in rationals.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from epirk.config import settings
from epirk.exceptions import InvalidArgumentError
from epirk.models.method import (
    MethodDefinition,
    ResidualFormCoefficients,
    p_coefficients,
    to_residual_form,
    validate,
)
from epirk.models.phi_combination import TableProvider, dense_table_provider

logger = logging.getLogger(__name__)

RULE_SETS = ("epirk", "exprb")


@dataclass(frozen=True)
class PCoefficients:
    """P_i1, P_i2, P_i3 of one internal stage."""

    stage: int
    p1: Fraction
    p2: Fraction
    p3: Fraction

    @classmethod
    def from_p(cls, stage: int, p: Dict[int, Fraction]) -> "PCoefficients":
        def weighted(shift: int) -> Fraction:
            return sum(
                (c * Fraction(1, math.factorial(k + shift)) for k, c in p.items()), Fraction(0)
            )

        return cls(stage=stage, p1=weighted(0), p2=weighted(1), p3=weighted(2))


@dataclass
class ConditionResult:
    """Outcome of one condition."""

    label: str
    order: int
    residual: float
    satisfied: bool
    gating: bool = True
    description: str = ""


@dataclass
class ConditionReport:
    """All conditions for one method and the order they certify."""

    method: str
    declared_order: int
    rule_set: str
    results: List[ConditionResult] = field(default_factory=list)
    certified_order: int = 2
    violations: List[str] = field(default_factory=list)

    def result(self, label: str) -> ConditionResult:
        for r in self.results:
            if r.label == label:
                return r
        raise InvalidArgumentError(f"no condition labelled {label!r}")

    def passed(self, *labels: str) -> bool:
        return all(self.result(label).satisfied for label in labels)


@dataclass
class _StageData:
    """Per-stage quantities used by the conditions."""

    stage: int
    g: Fraction
    alpha: Fraction
    p: Dict[int, Fraction]
    P: PCoefficients

    @property
    def q1(self) -> Fraction:
        return self.alpha * self.P.p1

    @property
    def q2(self) -> Fraction:
        return self.alpha * self.P.p2

    @property
    def q3(self) -> Fraction:
        return self.alpha * self.P.p3


def p_values(method: MethodDefinition) -> Dict[int, PCoefficients]:
    """P coefficients of every internal stage."""
    return {
        i: PCoefficients.from_p(i, p_coefficients(method, i)) for i in range(2, method.stages + 1)
    }


def _stage_data(method: MethodDefinition) -> Dict[int, _StageData]:
    data = {}
    for i in range(2, method.stages + 1):
        p = p_coefficients(method, i)
        g = method.first_column_scale(i)
        if g is None:
            raise InvalidArgumentError(f"psi({i},1) must use a single scale")
        data[i] = _StageData(
            stage=i,
            g=g,
            alpha=method.alpha.get((i, 1), Fraction(0)),
            p=p,
            P=PCoefficients.from_p(i, p),
        )
    return data


def big_psi(
    method: MethodDefinition,
    stage_i: int,
    Z: np.ndarray,
    include_alpha: bool = False,
    tables: Optional[TableProvider] = None,
) -> np.ndarray:
    """
    Evaluate Psi_i(Z).

        Psi_i(Z) = 1/2 sum_{j<i} (alpha_j1 P_j1)^2 a_ij(Z)
                   - w g_i1^2 sum_k p_i1k phi_{k+2}(g_i1 Z)

    with w = 1, or w = alpha_i1 when ``include_alpha`` is set. The weighted
    form is the one whose vanishing the fifth-order conditions require; for
    psi_i1 = phi_1 and alpha_i1 = g_i1 = c_i it reduces to
    sum_j a_ij(Z) c_j^2 / 2 - c_i^3 phi_3(c_i Z).

    Raises:
        InvalidArgumentError: If stage_i is not an internal stage
    """
    s = method.stages
    if not 2 <= stage_i <= s:
        raise InvalidArgumentError(f"stage {stage_i} outside internal stages 2..{s}")
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    provider = tables or dense_table_provider(Z)
    coeffs = to_residual_form(method)
    data = _stage_data(method)

    result = np.zeros_like(Z)
    for j in range(2, stage_i):
        a_ij = coeffs.a_at(stage_i, j)
        if not a_ij.is_zero:
            result = result + 0.5 * float(data[j].q1**2) * a_ij.evaluate_matrix(Z, provider)

    stage = data[stage_i]
    weight = stage.g**2 * (stage.alpha if include_alpha else 1)
    k_top = max(stage.p) + 2
    table = provider(stage.g, k_top)
    for k, c in stage.p.items():
        result = result - float(weight * c) * table[k + 2]
    return result


def _big_psi_at_zero(
    coeffs: ResidualFormCoefficients, data: Dict[int, _StageData], i: int
) -> Fraction:
    total = Fraction(0)
    for j in range(2, i):
        total += Fraction(1, 2) * data[j].q1**2 * coeffs.a_at(i, j).at_zero()
    stage = data[i]
    tail = sum(
        (c * Fraction(1, math.factorial(k + 2)) for k, c in stage.p.items()), Fraction(0)
    )
    return total - stage.alpha * stage.g**2 * tail


def _phi_zero(k: int) -> Fraction:
    return Fraction(1, math.factorial(k))


def _sample_pairs(samples: int, seed: int, dim: int) -> List[tuple]:
    rng = np.random.default_rng(seed)
    return [
        (rng.uniform(-1.0, 1.0, (dim, dim)), rng.uniform(-1.0, 1.0, (dim, dim)))
        for _ in range(samples)
    ]


MatrixRule = Callable[[np.ndarray, np.ndarray, TableProvider], np.ndarray]


def _epirk_matrix_rules(
    method: MethodDefinition, coeffs: ResidualFormCoefficients, data: Dict[int, _StageData]
) -> Dict[str, tuple]:
    stages = sorted(data)
    one = Fraction(1)

    def weighted_sum(weight: Callable[[_StageData], Fraction], rhs_k: int, rhs_c: int):
        def rule(Z: np.ndarray, K: np.ndarray, provider: TableProvider) -> np.ndarray:
            lhs = np.zeros_like(Z)
            for i in stages:
                w = weight(data[i])
                if w != 0:
                    lhs = lhs + float(w) * coeffs.b_at(i).evaluate_matrix(Z, provider)
            return lhs - rhs_c * provider(one, 5)[rhs_k]

        return rule

    def c8(Z: np.ndarray, K: np.ndarray, provider: TableProvider) -> np.ndarray:
        total = np.zeros_like(Z)
        for i in stages:
            q1 = data[i].q1
            if q1 == 0:
                continue
            b = coeffs.b_at(i).evaluate_matrix(Z, provider)
            psi = big_psi(method, i, Z, include_alpha=True, tables=provider)
            total = total + float(q1) * (b @ K @ psi)
        return total

    return {
        "C1": (3, weighted_sum(lambda d: d.q1**2, 3, 2), "sum b_i Q_i1^2 = 2 phi_3"),
        "C2": (
            4,
            weighted_sum(lambda d: d.g * d.q1 * d.q2, 4, 3),
            "sum b_i g_i Q_i1 Q_i2 = 3 phi_4",
        ),
        "C3": (4, weighted_sum(lambda d: d.q1**3, 4, 6), "sum b_i Q_i1^3 = 6 phi_4"),
        "C4": (
            5,
            weighted_sum(lambda d: d.g**2 * d.q1 * d.q3, 5, 4),
            "sum b_i g_i^2 Q_i1 Q_i3 = 4 phi_5",
        ),
        "C5": (
            5,
            weighted_sum(lambda d: d.g**2 * d.q2**2, 5, 6),
            "sum b_i g_i^2 Q_i2^2 = 6 phi_5",
        ),
        "C6": (
            5,
            weighted_sum(lambda d: d.g * d.q1**2 * d.q2, 5, 12),
            "sum b_i g_i Q_i1^2 Q_i2 = 12 phi_5",
        ),
        "C7": (5, weighted_sum(lambda d: d.q1**4, 5, 24), "sum b_i Q_i1^4 = 24 phi_5"),
        "C8": (5, c8, "sum Q_i1 b_i K Psi_i = 0"),
    }


def _epirk_simplified(
    coeffs: ResidualFormCoefficients, data: Dict[int, _StageData]
) -> Dict[str, tuple]:
    stages = sorted(data)
    b0 = {i: coeffs.b_at(i).at_zero() for i in stages}
    phi5 = _phi_zero(5)

    def exact(weight: Callable[[_StageData], Fraction], rhs: Fraction) -> Fraction:
        return sum((b0[i] * weight(data[i]) for i in stages), Fraction(0)) - rhs

    c8 = sum(
        (b0[i] * data[i].q1 * _big_psi_at_zero(coeffs, data, i) for i in stages), Fraction(0)
    )
    return {
        "C4*": exact(lambda d: d.g**2 * d.q1 * d.q3, 4 * phi5),
        "C5*": exact(lambda d: d.g**2 * d.q2**2, 6 * phi5),
        "C6*": exact(lambda d: d.g * d.q1**2 * d.q2, 12 * phi5),
        "C7*": exact(lambda d: d.q1**4, 24 * phi5),
        "C8*": c8,
    }


def _is_exprb_shaped(method: MethodDefinition, data: Dict[int, _StageData]) -> bool:
    return all(d.p == {1: Fraction(1)} and d.alpha == d.g for d in data.values())


def _check_epirk(
    method: MethodDefinition,
    coeffs: ResidualFormCoefficients,
    data: Dict[int, _StageData],
    pairs: Sequence[tuple],
    threshold: float,
) -> List[ConditionResult]:
    results = []
    rules = _epirk_matrix_rules(method, coeffs, data)
    residuals = {label: 0.0 for label in rules}
    c8_star_z = 0.0
    stages = sorted(data)
    for Z, K in pairs:
        provider = dense_table_provider(Z)
        for label, (_, rule, _) in rules.items():
            value = rule(Z, K, provider)
            residuals[label] = max(residuals[label], float(np.max(np.abs(value))))
        total = np.zeros_like(Z)
        for i in stages:
            psi = big_psi(method, i, Z, include_alpha=True, tables=provider)
            total = total + float(coeffs.b_at(i).at_zero() * data[i].q1) * (K @ psi)
        c8_star_z = max(c8_star_z, float(np.max(np.abs(total))))

    for label, (order, _, text) in rules.items():
        r = residuals[label]
        results.append(ConditionResult(label, order, r, r <= threshold, description=text))
    for label, value in _epirk_simplified(coeffs, data).items():
        r = abs(float(value))
        results.append(
            ConditionResult(label, 5, r, r <= threshold, description="at Z = 0 (exact)")
        )
    results.append(
        ConditionResult(
            "C8*(Z)",
            5,
            c8_star_z,
            c8_star_z <= threshold,
            gating=False,
            description="sum b_i(0) Q_i1 K Psi_i(Z) on sample matrices",
        )
    )
    return results


def _check_exprb(
    method: MethodDefinition,
    coeffs: ResidualFormCoefficients,
    data: Dict[int, _StageData],
    pairs: Sequence[tuple],
    threshold: float,
) -> List[ConditionResult]:
    stages = sorted(data)
    c = {i: data[i].g for i in stages}
    one = Fraction(1)

    def psi3(i: int, Z: np.ndarray, provider: TableProvider) -> np.ndarray:
        out = np.zeros_like(Z)
        for j in range(2, i):
            a = coeffs.a_at(i, j)
            if not a.is_zero:
                out = out + float(c[j] ** 2 / 2) * a.evaluate_matrix(Z, provider)
        return out - float(c[i] ** 3) * provider(c[i], 3)[3]

    r1 = r2 = r4 = 0.0
    for Z, K in pairs:
        provider = dense_table_provider(Z)
        phis = provider(one, 5)
        s2 = np.zeros_like(Z)
        s3 = np.zeros_like(Z)
        s4 = np.zeros_like(Z)
        for i in stages:
            b = coeffs.b_at(i).evaluate_matrix(Z, provider)
            s2 = s2 + float(c[i] ** 2) * b
            s3 = s3 + float(c[i] ** 3) * b
            s4 = s4 + float(c[i] * coeffs.b_at(i).at_zero()) * (K @ psi3(i, Z, provider))
        r1 = max(r1, float(np.max(np.abs(s2 - 2 * phis[3]))))
        r2 = max(r2, float(np.max(np.abs(s3 - 6 * phis[4]))))
        r4 = max(r4, float(np.max(np.abs(s4))))

    c3 = sum((coeffs.b_at(i).at_zero() * c[i] ** 4 for i in stages), Fraction(0))
    c3 -= 24 * _phi_zero(5)
    r3 = abs(float(c3))
    return [
        ConditionResult("C1'", 3, r1, r1 <= threshold, description="sum b_i c_i^2 = 2 phi_3"),
        ConditionResult("C2'", 4, r2, r2 <= threshold, description="sum b_i c_i^3 = 6 phi_4"),
        ConditionResult(
            "C3'", 5, r3, r3 <= threshold, description="sum b_i(0) c_i^4 = 24 phi_5(0)"
        ),
        ConditionResult(
            "C4'", 5, r4, r4 <= threshold, description="sum c_i b_i(0) K psi_3i(Z) = 0"
        ),
    ]


def _certify(report: ConditionReport, normalized: bool) -> int:
    if not normalized:
        return 1
    gating = {r.label: r.satisfied for r in report.results if r.gating}
    if report.rule_set == "exprb":
        order = 2
        if gating["C1'"]:
            order = 3
            if gating["C2'"]:
                order = 4
                if gating["C3'"] and gating["C4'"]:
                    order = 5
        return order
    order = 2
    if gating["C1"]:
        order = 3
        if gating["C2"] and gating["C3"]:
            order = 4
            full = all(gating[f"C{k}"] for k in range(4, 9))
            simplified = all(gating[f"C{k}*"] for k in range(4, 9))
            if full or simplified:
                order = 5
    return order


def check_conditions(
    method: MethodDefinition,
    samples: Optional[int] = None,
    seed: int = 0,
    rule_set: str = "epirk",
    threshold: Optional[float] = None,
    dimension: Optional[int] = None,
) -> ConditionReport:
    """
    Check the stiff order conditions of a method.

    Args:
        method: method definition (either form)
        samples: number of random (Z, K) sample pairs
        seed: sample seed
        rule_set: "epirk" (C1-C8 and C4*-C8*) or "exprb" (C1'-C4')
        threshold: pass threshold on the residual max-norm
        dimension: sample matrix size

    Returns:
        ConditionReport with per-condition residuals and the certified order

    Raises:
        InvalidArgumentError: If the rule set does not apply to the method
    """
    if rule_set not in RULE_SETS:
        raise InvalidArgumentError(f"rule_set must be one of {RULE_SETS}, got {rule_set!r}")
    samples = settings.ORDER_SAMPLES if samples is None else samples
    if samples < 1:
        raise InvalidArgumentError(f"samples must be >= 1, got {samples}")
    threshold = settings.ORDER_PASS_THRESHOLD if threshold is None else threshold
    dimension = settings.ORDER_SAMPLE_DIM if dimension is None else dimension

    violations = validate(method)
    normalized = not any(v.startswith("normalization") for v in violations)
    coeffs = to_residual_form(method)
    data = _stage_data(method)
    pairs = _sample_pairs(samples, seed, dimension)

    report = ConditionReport(
        method=method.name,
        declared_order=method.stiff_order,
        rule_set=rule_set,
        violations=violations,
    )
    if rule_set == "exprb":
        if not _is_exprb_shaped(method, data):
            raise InvalidArgumentError(
                f"{method.name}: the exprb rule set needs psi_i1 = phi_1 and alpha_i1 = g_i1"
            )
        report.results = _check_exprb(method, coeffs, data, pairs, threshold)
    else:
        report.results = _check_epirk(method, coeffs, data, pairs, threshold)
    report.certified_order = _certify(report, normalized)
    logger.info(
        f"{method.name}: certified stiff order {report.certified_order} "
        f"(declared {method.stiff_order}, rule set {rule_set})"
    )
    return report
