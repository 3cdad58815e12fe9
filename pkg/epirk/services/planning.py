"""Map a method's phi products onto Krylov projections.

Every nonzero entry of the residual-form tableau multiplies one source
vector (h f(u_n) for source 1, h r(U_j) for source j). A strategy decides
how those products are grouped into projections:

* vertical: one column task per source, read off at every scale it is
  needed at (waypoints), lower phi indices from time derivatives;
* horizontal: one row task per stage, all terms of the stage in a single
  evaluation, which needs a common scale per stage;
* mixed: internal stages by columns, the final stage as one row.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from epirk.exceptions import InvalidArgumentError, NotAvailableError, PlanInfeasibleError
from epirk.models.method import (
    MethodDefinition,
    ResidualFormCoefficients,
    Strategy,
    to_residual_form,
)
from epirk.models.phi_combination import PhiCombination, PhiSum

logger = logging.getLogger(__name__)

# Row key of the embedded final stage
EMBEDDED_ROW = 0

ROW_EVALUATIONS = ("combination", "rewrite")


@dataclass(frozen=True)
class ColumnTask:
    """phi_k(g A) v_source for every scale g in ``waypoints`` from one traversal."""

    source: int
    order: int
    waypoints: Tuple[Fraction, ...]
    depths: Dict[Fraction, int]
    rows: Tuple[int, ...]

    @property
    def kind(self) -> str:
        return "column"


@dataclass(frozen=True)
class RowTask:
    """All terms of one stage at a common scale, evaluated together."""

    row: int
    scale: Fraction
    terms: Dict[int, PhiCombination]

    @property
    def kind(self) -> str:
        return "row"

    @property
    def embedded(self) -> bool:
        return self.row == EMBEDDED_ROW

    @property
    def order(self) -> int:
        return max((c.max_order for c in self.terms.values()), default=0)


Task = Union[ColumnTask, RowTask]


@dataclass(frozen=True)
class ExecutionPlan:
    """
    Krylov tasks for one step of a method under a strategy.

    ``row_tasks`` maps a row to the task that evaluates it whole; rows not
    listed are assembled from the column tasks of their sources.
    """

    method: str
    strategy: Strategy
    tasks: Tuple[Task, ...]
    coefficients: ResidualFormCoefficients
    with_estimator: bool = False
    row_evaluation: str = "combination"
    row_tasks: Dict[int, RowTask] = field(default_factory=dict)
    column_tasks: Dict[int, ColumnTask] = field(default_factory=dict)

    @property
    def expected_projection_count(self) -> int:
        return len(self.tasks)

    @property
    def estimator_projections(self) -> int:
        return 1 if EMBEDDED_ROW in self.row_tasks else 0

    def rows(self) -> List[int]:
        """Rows in evaluation order: stages 2..s, the final stage, then the estimator."""
        order = list(range(2, self.coefficients.final_row + 1))
        if self.with_estimator:
            order.append(EMBEDDED_ROW)
        return order

    def row_terms(self, row: int) -> Dict[int, PhiSum]:
        return self.coefficients.row(row, embedded=row == EMBEDDED_ROW)

    def describe(self) -> List[str]:
        lines = []
        for task in self.tasks:
            if isinstance(task, ColumnTask):
                points = ", ".join(str(g) for g in task.waypoints)
                lines.append(f"column source={task.source} phi_{task.order} at [{points}]")
            else:
                label = "embedded" if task.embedded else f"stage {task.row}"
                lines.append(f"row {label} at g={task.scale} (phi_{task.order})")
        return lines


def _column_task(source: int, entries: Mapping[int, PhiSum]) -> Optional[ColumnTask]:
    lowest: Dict[Fraction, int] = {}
    top = 0
    for coeff in entries.values():
        for part in coeff.parts:
            top = max(top, part.max_order)
            lowest[part.scale] = min(lowest.get(part.scale, part.min_order), part.min_order)
    if not lowest:
        return None
    order = max(top, 1)
    waypoints = tuple(sorted(lowest))
    return ColumnTask(
        source=source,
        order=order,
        waypoints=waypoints,
        depths={g: order - k for g, k in lowest.items()},
        rows=tuple(sorted(entries)),
    )


def _columns(
    coeffs: ResidualFormCoefficients, rows: List[int]
) -> Dict[int, ColumnTask]:
    by_source: Dict[int, Dict[int, PhiSum]] = {}
    for i in rows:
        for j, coeff in coeffs.row(i, embedded=i == EMBEDDED_ROW).items():
            by_source.setdefault(j, {})[i] = coeff
    tasks = {}
    for j in sorted(by_source):
        task = _column_task(j, by_source[j])
        if task is not None:
            tasks[j] = task
    return tasks


def _row_task(coeffs: ResidualFormCoefficients, row: int) -> RowTask:
    entries = coeffs.row(row, embedded=row == EMBEDDED_ROW)
    scales = sorted({g for c in entries.values() for g in c.scales})
    label = "embedded final stage" if row == EMBEDDED_ROW else f"stage {row}"
    if len(scales) != 1:
        raise PlanInfeasibleError(
            f"{label} mixes scales {[str(g) for g in scales]}; a row task needs one common scale",
            stage=row,
            scales=scales,
        )
    g = scales[0]
    return RowTask(row=row, scale=g, terms={j: c.part(g) for j, c in entries.items()})


def plan(
    method: MethodDefinition,
    strategy: Union[Strategy, str],
    with_estimator: bool = False,
    row_evaluation: str = "combination",
) -> ExecutionPlan:
    """
    Build the projection plan of one step.

    Args:
        method: method definition
        strategy: vertical, horizontal or mixed
        with_estimator: also evaluate the embedded final stage
        row_evaluation: 'combination' evaluates a row's phi_0..phi_K terms in
            one augmented traversal; 'rewrite' first folds them into a single
            phi_K by the downshift recurrence

    Raises:
        PlanInfeasibleError: If a row task would need more than one scale
        NotAvailableError: If an estimator is requested but the method has none
    """
    try:
        strategy = Strategy(strategy)
    except ValueError:
        raise InvalidArgumentError(f"unknown strategy {strategy!r}") from None
    if row_evaluation not in ROW_EVALUATIONS:
        raise InvalidArgumentError(f"row_evaluation must be one of {ROW_EVALUATIONS}")
    if with_estimator and method.embedded is None:
        raise NotAvailableError(f"{method.name} has no embedded estimator")

    coeffs = to_residual_form(method)
    final = coeffs.final_row
    internal = list(range(2, final))
    all_rows = internal + [final] + ([EMBEDDED_ROW] if with_estimator else [])

    columns: Dict[int, ColumnTask] = {}
    rows: Dict[int, RowTask] = {}
    if strategy == Strategy.VERTICAL:
        columns = _columns(coeffs, all_rows)
    elif strategy == Strategy.HORIZONTAL:
        rows = {i: _row_task(coeffs, i) for i in all_rows}
    else:
        columns = _columns(coeffs, internal)
        rows = {i: _row_task(coeffs, i) for i in all_rows if i not in internal}

    tasks: List[Task] = list(columns.values())
    tasks += [rows[i] for i in all_rows if i in rows]
    result = ExecutionPlan(
        method=method.name,
        strategy=strategy,
        tasks=tuple(tasks),
        coefficients=coeffs,
        with_estimator=with_estimator,
        row_evaluation=row_evaluation,
        row_tasks=rows,
        column_tasks=columns,
    )
    logger.info(
        "plan built",
        extra={
            "method": method.name,
            "strategy": strategy.value,
            "projections": result.expected_projection_count,
            "estimator": with_estimator,
        },
    )
    return result


def feasible_strategies(method: MethodDefinition) -> List[Strategy]:
    """Strategies for which plan() succeeds."""
    found = []
    for strategy in Strategy:
        try:
            plan(method, strategy)
        except PlanInfeasibleError:
            continue
        found.append(strategy)
    return found


@dataclass(frozen=True)
class SinglePhiRow:
    """
    sum_k phi_k(M) x_k folded into one phi function of the highest index K.

    With y_0 = x_0 and y_{l+1} = M y_l + x_{l+1},

        sum_{k=0}^{K} phi_k(M) x_k = sum_{l<K} y_l / l! + phi_K(M) y_K,

    where x_k = sum_j weights[k][j] v_j.
    """

    order: int
    weights: Dict[int, Dict[int, Fraction]]

    def fold(
        self, matvec: Callable[[np.ndarray], np.ndarray], vectors: Mapping[int, np.ndarray]
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Return (polynomial part, y_K) using K products with M."""
        template = next(iter(vectors.values()))
        polynomial = np.zeros_like(template, dtype=np.result_type(template, np.float64))
        y = np.zeros_like(polynomial)
        for level in range(self.order + 1):
            if level > 0 and np.any(y):
                y = matvec(y)
            for j, c in self.weights.get(level, {}).items():
                y = y + float(c) * vectors[j]
            if level < self.order:
                polynomial = polynomial + y / math.factorial(level)
        return polynomial, y


def rewrite_to_single_phi(terms: Mapping[int, PhiCombination]) -> SinglePhiRow:
    """Fold the terms of a common-scale row into a single phi function."""
    scales = {c.scale for c in terms.values() if not c.is_zero}
    if len(scales) > 1:
        raise InvalidArgumentError(f"single-phi rewrite needs one scale, got {sorted(scales)}")
    weights: Dict[int, Dict[int, Fraction]] = {}
    for j, combo in terms.items():
        for k, c in combo.terms:
            weights.setdefault(k, {})[j] = c
    order = max(max(weights, default=1), 1)
    return SinglePhiRow(order=order, weights=weights)
