"""EPIRK time stepping with exponential-Krylov evaluation of the stages."""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.sparse.linalg import LinearOperator

from epirk.config import settings
from epirk.core.krylov import (
    KrylovReport,
    PhiCombinationRequest,
    WaypointValues,
    as_operator,
    eval_phi_column,
    eval_phi_combination,
)
from epirk.exceptions import (
    EpirkError,
    IntegrationError,
    InvalidArgumentError,
    NumericFailureError,
    StiffnessFailureError,
)
from epirk.models.method import MethodDefinition, Strategy, to_residual_form
from epirk.models.phi_combination import dense_table_provider
from epirk.models.problem import Problem, finite_difference_jacobian
from epirk.schemas.report import RunReport, StepRecord
from epirk.services.planning import (
    EMBEDDED_ROW,
    ColumnTask,
    ExecutionPlan,
    RowTask,
    plan as build_plan,
    rewrite_to_single_phi,
)

logger = logging.getLogger(__name__)

JACOBIAN_MODES = ("analytic", "fd")


class CountingOperator(LinearOperator):
    """scale * J with a matvec counter."""

    def __init__(self, inner: LinearOperator, scale: float = 1.0):
        self.inner = inner
        self.scale = float(scale)
        self.count = 0
        super().__init__(dtype=np.dtype(np.float64), shape=inner.shape)

    def _matvec(self, x: np.ndarray) -> np.ndarray:
        self.count += 1
        return self.scale * np.asarray(self.inner.matvec(np.asarray(x).reshape(-1))).reshape(-1)


@dataclass
class StepContext:
    """State at the start of a step: u_n, h, f(u_n) and J_n."""

    u_n: np.ndarray
    h: float
    f_n: np.ndarray
    jacobian: LinearOperator
    rhs: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self) -> None:
        self.u_n = np.asarray(self.u_n, dtype=float).reshape(-1)
        self.f_n = np.asarray(self.f_n, dtype=float).reshape(-1)
        self.jacobian = as_operator(self.jacobian)
        n = self.u_n.shape[0]
        if self.h <= 0:
            raise InvalidArgumentError(f"step size must be positive, got {self.h}")
        if self.f_n.shape[0] != n or self.jacobian.shape != (n, n):
            raise InvalidArgumentError(
                f"dimension mismatch: u_n has {n} entries, f_n {self.f_n.shape[0]}, "
                f"jacobian {self.jacobian.shape}"
            )

    @classmethod
    def build(
        cls, problem: Problem, u_n: np.ndarray, h: float, jacobian: str = "analytic"
    ) -> "StepContext":
        """Fresh context: f(u_n) is always recomputed."""
        if jacobian not in JACOBIAN_MODES:
            raise InvalidArgumentError(f"jacobian must be one of {JACOBIAN_MODES}")
        u_n = np.asarray(u_n, dtype=float)
        f_n = problem.evaluate(u_n)
        if jacobian == "fd":
            J = finite_difference_jacobian(problem.rhs, u_n, f_n)
        else:
            J = problem.jacobian_operator(u_n)
        return cls(u_n=u_n, h=float(h), f_n=f_n, jacobian=J, rhs=problem.evaluate)


@dataclass
class StepResult:
    """Outcome of one step."""

    u_next: np.ndarray
    err_estimate: Optional[float] = None
    krylov: List[KrylovReport] = field(default_factory=list)
    residual_vectors: Dict[int, np.ndarray] = field(default_factory=dict)
    stages: Dict[int, np.ndarray] = field(default_factory=dict)
    u_embedded: Optional[np.ndarray] = None
    matvecs: int = 0

    @property
    def projections(self) -> int:
        return len(self.krylov)

    @property
    def substeps(self) -> int:
        return sum(len(r.substeps) for r in self.krylov)


def remainder(u: np.ndarray, ctx: StepContext) -> np.ndarray:
    """r(u) = f(u) - f(u_n) - J_n (u - u_n)."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape != ctx.u_n.shape:
        raise InvalidArgumentError(f"expected {ctx.u_n.shape[0]} entries, got {u.shape[0]}")
    f_u = np.asarray(ctx.rhs(u), dtype=float).reshape(-1)
    if not np.all(np.isfinite(f_u)):
        raise NumericFailureError("right-hand side produced NaN or Inf in a stage")
    return f_u - ctx.f_n - np.asarray(ctx.jacobian.matvec(u - ctx.u_n)).reshape(-1)


class _StepExecutor:
    """Runs the tasks of a plan for one step, caching column results."""

    def __init__(
        self,
        ctx: StepContext,
        plan: ExecutionPlan,
        krylov_tol: float,
        m_max: Optional[int],
    ):
        self.ctx = ctx
        self.plan = plan
        self.tol = krylov_tol
        self.m_max = m_max
        self.A = CountingOperator(ctx.jacobian, ctx.h)
        self.sources: Dict[int, np.ndarray] = {1: ctx.h * ctx.f_n}
        self.columns: Dict[int, WaypointValues] = {}
        self.reports: List[KrylovReport] = []

    def column(self, task: ColumnTask) -> WaypointValues:
        values = self.columns.get(task.source)
        if values is None:
            values = eval_phi_column(
                self.A,
                task.order,
                self.sources[task.source],
                [float(g) for g in task.waypoints],
                self.tol,
                depths={float(g): d for g, d in task.depths.items()},
                m_max=self.m_max,
            )
            self.reports.append(values.report)
            self.columns[task.source] = values
        return values

    def assemble(self, row: int) -> np.ndarray:
        total = np.zeros_like(self.ctx.u_n)
        for j, coeff in self.plan.row_terms(row).items():
            values = self.column(self.plan.column_tasks[j])
            for part in coeff.parts:
                for k, c in part.terms:
                    total = total + float(c) * values.phi(float(part.scale), k)
        return total

    def row(self, task: RowTask) -> np.ndarray:
        g = float(task.scale)
        if self.plan.row_evaluation == "rewrite":
            folded = rewrite_to_single_phi(task.terms)
            polynomial, top = folded.fold(
                lambda y: g * self.A.matvec(y),
                {j: self.sources[j] for j in task.terms},
            )
            request = PhiCombinationRequest(
                self.A, [(folded.order, top / g**folded.order)], g, self.tol
            )
            report = eval_phi_combination(request, m_max=self.m_max)
            self.reports.append(report)
            return polynomial + report.result

        combined: Dict[int, np.ndarray] = {}
        for j, combo in task.terms.items():
            for k, c in combo.terms:
                term = float(c) * self.sources[j]
                combined[k] = combined[k] + term if k in combined else term
        terms = [(k, v / g**k) for k, v in sorted(combined.items())]
        report = eval_phi_combination(
            PhiCombinationRequest(self.A, terms, g, self.tol), m_max=self.m_max
        )
        self.reports.append(report)
        return report.result

    def evaluate(self, row: int) -> np.ndarray:
        task = self.plan.row_tasks.get(row)
        return self.row(task) if task is not None else self.assemble(row)


def step(
    ctx: StepContext,
    method: MethodDefinition,
    plan: Optional[ExecutionPlan] = None,
    krylov_tol: Optional[float] = None,
    m_max: Optional[int] = None,
) -> StepResult:
    """
    Advance one step of size ctx.h.

    Stages are computed in order; each internal stage U_i feeds its residual
    h r(U_i) into the later rows. Every phi product goes through the Krylov
    tasks of ``plan``. When the plan includes the estimator the embedded
    final stage is evaluated too and err_estimate = |u_next - u_embedded|_inf.

    Raises:
        EpirkError: Krylov or numeric failures, with ``stage`` set
    """
    plan = plan or build_plan(method, method.strategy_hint)
    if plan.method != method.name:
        raise InvalidArgumentError(f"plan was built for {plan.method}, not {method.name}")
    tol = settings.DEFAULT_KRYLOV_TOL if krylov_tol is None else krylov_tol
    executor = _StepExecutor(ctx, plan, tol, m_max)
    final = plan.coefficients.final_row
    result = StepResult(u_next=ctx.u_n)

    for row in plan.rows():
        try:
            value = executor.evaluate(row)
            if row == final:
                result.u_next = ctx.u_n + value
            elif row == EMBEDDED_ROW:
                result.u_embedded = ctx.u_n + value
            else:
                stage = ctx.u_n + value
                residual = remainder(stage, ctx)
                result.stages[row] = stage
                result.residual_vectors[row] = residual
                executor.sources[row] = ctx.h * residual
        except EpirkError as exc:
            if exc.stage is None:
                exc.stage = final if row == EMBEDDED_ROW else row
            raise

    if not np.all(np.isfinite(result.u_next)):
        raise NumericFailureError("step produced NaN or Inf", stage=final)
    if result.u_embedded is not None:
        result.err_estimate = float(np.max(np.abs(result.u_next - result.u_embedded)))
    result.krylov = executor.reports
    result.matvecs = executor.A.count
    return result


def evaluate_step_dense(
    method: MethodDefinition,
    u: np.ndarray,
    h: float,
    rhs: Callable[[np.ndarray], np.ndarray],
    jacobian: np.ndarray,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    One step with dense phi matrices instead of Krylov projections.

    Meant for small systems; returns (u_next, embedded u_next or None).
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    J = np.atleast_2d(np.asarray(jacobian, dtype=float))
    coeffs = to_residual_form(method)
    tables = dense_table_provider(h * J)
    hJ = h * J
    f_n = np.atleast_1d(np.asarray(rhs(u), dtype=float))
    sources: Dict[int, np.ndarray] = {1: h * f_n}

    def row_value(entries: Dict) -> np.ndarray:
        total = np.zeros_like(u)
        for j, coeff in entries.items():
            total = total + coeff.evaluate_matrix(hJ, tables) @ sources[j]
        return total

    for i in range(2, coeffs.final_row):
        stage = u + row_value(coeffs.row(i))
        r = np.atleast_1d(np.asarray(rhs(stage), dtype=float)) - f_n - J @ (stage - u)
        sources[i] = h * r
    u_next = u + row_value(coeffs.row(coeffs.final_row))
    u_hat = None
    if method.embedded is not None:
        u_hat = u + row_value(coeffs.row(coeffs.final_row, embedded=True))
    return u_next, u_hat


def _new_report(
    problem: Problem,
    method: MethodDefinition,
    strategy: Strategy,
    t_span: Tuple[float, float],
    krylov_tol: float,
    **kwargs: Optional[Union[float, int]],
) -> RunReport:
    return RunReport(
        method=method.name,
        strategy=strategy.value,
        problem=problem.name,
        n=problem.dimension,
        t_span=t_span,
        krylov_tol=krylov_tol,
        **kwargs,
    )


def _finish(report: RunReport, problem: Problem, u: np.ndarray, t: float, started: float) -> None:
    report.final_state = u
    report.wall_time_s = time.perf_counter() - started
    if problem.exact_solution is not None:
        report.final_error = float(np.max(np.abs(u - problem.exact_state(t))))


def _resolve_span(problem: Problem, t_span: Optional[Tuple[float, float]]) -> Problem:
    if t_span is None or tuple(t_span) == problem.t_span:
        return problem
    return problem.with_span(t_span)


def integrate_fixed(
    problem: Problem,
    method: MethodDefinition,
    strategy: Union[Strategy, str, None] = None,
    t_span: Optional[Tuple[float, float]] = None,
    h: float = 0.01,
    krylov_tol: Optional[float] = None,
    jacobian: str = "analytic",
    row_evaluation: str = "combination",
) -> RunReport:
    """
    Constant step size integration; the last step is shortened to hit t_end.

    Raises:
        IntegrationError: Wrapping the failing step, with the partial report
    """
    if h <= 0:
        raise InvalidArgumentError(f"step size must be positive, got {h}")
    problem = _resolve_span(problem, t_span)
    t0, t1 = problem.t_span
    strategy = Strategy(strategy or method.strategy_hint)
    tol = settings.DEFAULT_KRYLOV_TOL if krylov_tol is None else krylov_tol
    execution = build_plan(method, strategy, row_evaluation=row_evaluation)
    report = _new_report(
        problem,
        method,
        strategy,
        (t0, t1),
        tol,
        h=h,
        expected_projections=execution.expected_projection_count,
    )
    span = t1 - t0
    n_steps = max(1, math.ceil(span / h - 1e-12))
    logger.info(
        "run start",
        extra={
            "method": method.name,
            "strategy": strategy.value,
            "problem": problem.name,
            "h": h,
            "steps": n_steps,
        },
    )

    started = time.perf_counter()
    u = problem.initial.astype(float).copy()
    t = t0
    for k in range(n_steps):
        t_next = t1 if k == n_steps - 1 else t0 + (k + 1) * h
        h_step = t_next - t
        try:
            ctx = StepContext.build(problem, u, h_step, jacobian)
            result = step(ctx, method, execution, tol)
        except EpirkError as exc:
            _finish(report, problem, u, t, started)
            raise IntegrationError(f"step {k} at t={t:.6g} failed: {exc}", report, exc) from exc
        report.record(
            StepRecord(
                t=t,
                h=h_step,
                projections=result.projections,
                matvecs=result.matvecs,
                substeps=result.substeps,
            )
        )
        u, t = result.u_next, t_next

    report.completed = True
    _finish(report, problem, u, t, started)
    if not report.projection_contract_holds:
        logger.warning(
            "projection count differs from plan",
            extra={"expected": report.expected_projections, "method": method.name},
        )
    logger.info(
        "run end",
        extra={
            "method": method.name,
            "matvecs": report.total_matvecs,
            "wall_time_s": report.wall_time_s,
            "final_error": report.final_error,
        },
    )
    return report


def weighted_error(
    delta: np.ndarray, u_old: np.ndarray, u_new: np.ndarray, atol: float, rtol: float
) -> float:
    """|delta / (atol + rtol max(|u_old|, |u_new|))|_inf."""
    scale = atol + rtol * np.maximum(np.abs(u_old), np.abs(u_new))
    return float(np.max(np.abs(delta) / scale))


def _step_factor(err: float, exponent: float, rejected: bool) -> float:
    max_factor = 1.0 if rejected else settings.CONTROLLER_MAX_FACTOR
    if err == 0.0:
        return max_factor
    factor = settings.CONTROLLER_SAFETY * err ** (-exponent)
    return min(max_factor, max(settings.CONTROLLER_MIN_FACTOR, factor))


def integrate_adaptive(
    problem: Problem,
    method: MethodDefinition,
    strategy: Union[Strategy, str, None] = None,
    t_span: Optional[Tuple[float, float]] = None,
    atol: float = 1e-6,
    rtol: float = 1e-6,
    h0: Optional[float] = None,
    krylov_tol: Optional[float] = None,
    jacobian: str = "analytic",
    row_evaluation: str = "combination",
    max_steps: int = 100_000,
) -> RunReport:
    """
    Variable step size integration driven by the embedded estimator.

    A step is accepted when the weighted error is at most 1; the next step
    size is h min(5, max(0.2, 0.9 err^(-1/(p+1)))) with p the embedded
    order, never growing after a rejection. Unless given, the Krylov
    tolerance follows the step tolerances as 0.01 min(atol, rtol |u|).

    Raises:
        NotAvailableError: If the method has no embedded estimator
        IntegrationError: Wrapping a failed step or a step size underflow
    """
    if atol <= 0 or rtol < 0:
        raise InvalidArgumentError(f"need atol > 0 and rtol >= 0, got {atol}, {rtol}")
    problem = _resolve_span(problem, t_span)
    t0, t1 = problem.t_span
    span = t1 - t0
    strategy = Strategy(strategy or method.strategy_hint)
    execution = build_plan(method, strategy, with_estimator=True, row_evaluation=row_evaluation)
    exponent = 1.0 / ((method.embedded_order or method.stiff_order - 1) + 1)
    h = min(h0 if h0 is not None else span / 100.0, span)
    report = _new_report(
        problem,
        method,
        strategy,
        (t0, t1),
        krylov_tol if krylov_tol is not None else settings.KRYLOV_TOL_FACTOR * atol,
        atol=atol,
        rtol=rtol,
        expected_projections=execution.expected_projection_count,
    )
    logger.info(
        "run start",
        extra={
            "method": method.name,
            "strategy": strategy.value,
            "problem": problem.name,
            "atol": atol,
            "rtol": rtol,
        },
    )

    started = time.perf_counter()
    u = problem.initial.astype(float).copy()
    t = t0
    attempts = 0
    while t1 - t > 1e-12 * span:
        attempts += 1
        h = min(h, t1 - t)
        tol = krylov_tol
        if tol is None:
            coupled = min(atol, rtol * float(np.max(np.abs(u))))
            tol = settings.KRYLOV_TOL_FACTOR * (coupled if coupled > 0 else atol)
        try:
            if attempts > max_steps:
                raise StiffnessFailureError(f"more than {max_steps} step attempts", t=t, h=h)
            ctx = StepContext.build(problem, u, h, jacobian)
            result = step(ctx, method, execution, tol)
            err = weighted_error(result.u_next - result.u_embedded, u, result.u_next, atol, rtol)
            accepted = err <= 1.0
            report.record(
                StepRecord(
                    t=t,
                    h=h,
                    accepted=accepted,
                    err=err,
                    projections=result.projections,
                    matvecs=result.matvecs,
                    substeps=result.substeps,
                )
            )
            logger.debug(
                "controller", extra={"t": t, "h": h, "err": err, "accepted": accepted}
            )
            if accepted:
                u = result.u_next
                t = t1 if t1 - (t + h) <= 1e-12 * span else t + h
            h *= _step_factor(err, exponent, rejected=not accepted)
            if h < settings.MIN_STEP_FRACTION * span and t1 - t > 1e-12 * span:
                raise StiffnessFailureError(f"step size {h:.3e} underflow at t={t:.6g}", t=t, h=h)
        except EpirkError as exc:
            _finish(report, problem, u, t, started)
            raise IntegrationError(f"adaptive run failed at t={t:.6g}: {exc}", report, exc) from exc

    report.completed = True
    _finish(report, problem, u, t, started)
    logger.info(
        "run end",
        extra={
            "method": method.name,
            "accepted": report.accepted_steps,
            "rejected": report.rejected_steps,
            "matvecs": report.total_matvecs,
            "final_error": report.final_error,
        },
    )
    return report
