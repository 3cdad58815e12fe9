"""Experiment harness: convergence, strategy, order-reduction and tolerance sweeps."""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
import pandas as pd

from epirk.config import settings
from epirk.exceptions import AcceptanceFailureError, IntegrationError, InvalidArgumentError
from epirk.models.method import MethodDefinition, Strategy, embedded_method
from epirk.models.problem import Problem
from epirk.problems import HOMOGENEOUS_CONTROL, get_problem
from epirk.schemas.experiment import ExperimentConfig, ReferenceKind
from epirk.schemas.report import (
    AdaptiveRow,
    ConditionRow,
    ConditionSummary,
    RunReport,
    StrategyRow,
    SweepRow,
    SweepSummary,
)
from epirk.schemes.builtin import builtin
from epirk.schemes.tableau_file import load_tableau
from epirk.services.integrator import StepContext, integrate_adaptive, integrate_fixed, step
from epirk.services.order_conditions import check_conditions
from epirk.services.planning import feasible_strategies, plan

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

# (method, strategy) -> projections per fixed step
KNOWN_PROJECTION_COUNTS: Dict[Tuple[str, str], int] = {
    ("EPIRK4s3A", "vertical"): 3,
    ("EPIRK4s3A", "horizontal"): 3,
    ("EPIRK4s3A", "mixed"): 2,
}


def load_method(config: ExperimentConfig) -> MethodDefinition:
    if config.tableau_file:
        return load_tableau(config.tableau_file)
    return builtin(config.method)


def build_problem(config: ExperimentConfig, name: Optional[str] = None) -> Problem:
    return get_problem(
        name or config.problem, config.n, t_end=config.t_end, **config.problem_options
    )


def resolve_strategy(config: ExperimentConfig, method: MethodDefinition) -> Strategy:
    return config.strategy or method.strategy_hint


def _ordered_map(func: Callable[[T], R], items: Sequence[T]) -> List[R]:
    """Apply func over items in a worker pool; results keep the input order."""
    workers = min(settings.EPIRK_THREADS, max(1, len(items)))
    if workers == 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def fit_slope(steps: Iterable[float], errors: Iterable[float]) -> Optional[float]:
    """Least-squares slope of log(error) against log(step); None below two usable points."""
    pairs = [(h, e) for h, e in zip(steps, errors) if h > 0 and e > 0 and np.isfinite(e)]
    if len(pairs) < 2:
        return None
    x = np.log([h for h, _ in pairs])
    y = np.log([e for _, e in pairs])
    return float(np.polyfit(x, y, 1)[0])


def write_csv(rows: Sequence[Any], path: Optional[str]) -> Optional[pd.DataFrame]:
    """Write pydantic rows as CSV with a header, in the given order."""
    frame = pd.DataFrame.from_records([row.model_dump() for row in rows])
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
        logger.info("csv written", extra={"path": path, "rows": len(frame)})
    return frame


def _use_exact(config: ExperimentConfig, problem: Problem) -> bool:
    if config.reference == ReferenceKind.EXACT:
        if problem.exact_solution is None:
            raise InvalidArgumentError(f"{problem.name} has no exact solution")
        return True
    return config.reference == ReferenceKind.AUTO and problem.exact_solution is not None


def self_reference(
    problem: Problem,
    method: MethodDefinition,
    strategy: Strategy,
    h_ref: float,
    config: ExperimentConfig,
) -> np.ndarray:
    """Tight-step run of the method itself, used where no exact solution exists."""
    logger.info("reference run", extra={"problem": problem.name, "h_ref": h_ref})
    try:
        report = integrate_fixed(
            problem,
            method,
            strategy,
            h=h_ref,
            krylov_tol=settings.REFERENCE_KRYLOV_TOL,
            jacobian=config.jacobian,
        )
    except IntegrationError as exc:
        raise IntegrationError(f"reference solution failed: {exc}", exc.report, exc) from exc
    return np.asarray(report.final_state)


def _reference(
    config: ExperimentConfig,
    problem: Problem,
    method: MethodDefinition,
    strategy: Strategy,
    h_ref: float,
) -> Tuple[Optional[np.ndarray], str]:
    if _use_exact(config, problem):
        return problem.exact_state(problem.t_span[1]), "exact"
    return self_reference(problem, method, strategy, h_ref, config), f"self(h_ref={h_ref:g})"


def _convergence_rows(
    config: ExperimentConfig,
    problem: Problem,
    method: MethodDefinition,
    strategy: Strategy,
) -> Tuple[List[SweepRow], str]:
    h_ref = config.h_ref or min(config.h_list) / settings.REFERENCE_REFINEMENT
    reference, label = _reference(config, problem, method, strategy, h_ref)

    def run(h: float) -> SweepRow:
        report = integrate_fixed(
            problem,
            method,
            strategy,
            h=h,
            krylov_tol=config.krylov_tol,
            jacobian=config.jacobian,
            row_evaluation=config.row_evaluation,
        )
        error = float(np.max(np.abs(np.asarray(report.final_state) - reference)))
        return SweepRow(
            h=h,
            error=error,
            matvecs=report.total_matvecs,
            projections=report.total_projections,
            wall_s=report.wall_time_s,
        )

    return _ordered_map(run, config.h_list), label


def run_convergence(config: ExperimentConfig) -> SweepSummary:
    """
    Fixed-step sweep over config.h_list with the error at t_end.

    The error is measured against the exact solution when the problem has
    one, else against a tight-step run at h_min / 8 with Krylov tolerance
    1e-13. The CSV has columns h, error, matvecs, projections, wall_s.
    """
    method = load_method(config)
    problem = build_problem(config)
    strategy = resolve_strategy(config, method)
    rows, label = _convergence_rows(config, problem, method, strategy)
    summary = SweepSummary(
        method=method.name,
        problem=problem.name,
        strategy=strategy.value,
        slope=fit_slope([r.h for r in rows], [r.error for r in rows]),
        reference=label,
        rows=rows,
    )
    write_csv(rows, config.out)
    logger.info(
        "convergence sweep done",
        extra={"method": method.name, "problem": problem.name, "slope": summary.slope},
    )
    return summary


def run_strategy_compare(config: ExperimentConfig) -> SweepSummary:
    """
    Same problem, method and h under every feasible strategy.

    Raises:
        AcceptanceFailureError: If a run does not perform its planned number
            of projections per step
    """
    method = load_method(config)
    problem = build_problem(config)
    h = config.h_list[0]
    strategies = feasible_strategies(method)

    def run(strategy: Strategy) -> RunReport:
        return integrate_fixed(
            problem,
            method,
            strategy,
            h=h,
            krylov_tol=config.krylov_tol,
            jacobian=config.jacobian,
            row_evaluation=config.row_evaluation,
        )

    reports = _ordered_map(run, strategies)
    baseline = np.asarray(reports[0].final_state)
    rows: List[StrategyRow] = []
    failures: List[str] = []
    for strategy, report in zip(strategies, reports):
        difference = float(np.max(np.abs(np.asarray(report.final_state) - baseline)))
        rows.append(
            StrategyRow(
                strategy=strategy.value,
                projections_per_step=report.projections_per_step,
                expected_projections=report.expected_projections or 0,
                total_matvecs=report.total_matvecs,
                wall_s=report.wall_time_s,
                max_difference=difference,
            )
        )
        known = KNOWN_PROJECTION_COUNTS.get((method.name, strategy.value))
        if not report.projection_contract_holds or (
            known is not None and report.expected_projections != known
        ):
            failures.append(
                f"{strategy.value}: {report.projections_per_step:g} projections per step, "
                f"expected {known if known is not None else report.expected_projections}"
            )

    write_csv(rows, config.out)
    summary = SweepSummary(
        method=method.name,
        problem=problem.name,
        strategy=",".join(s.value for s in strategies),
        reference=strategies[0].value,
        rows=rows,
        notes=failures,
    )
    if failures:
        raise AcceptanceFailureError("projection-count contract violated: " + "; ".join(failures))
    return summary


def run_order_reduction(config: ExperimentConfig) -> SweepSummary:
    """
    Convergence sweep on a non-homogeneous problem next to its homogeneous
    control, reporting both observed slopes.
    """
    method = load_method(config)
    strategy = resolve_strategy(config, method)
    problem = build_problem(config)
    rows, label = _convergence_rows(config, problem, method, strategy)
    slope = fit_slope([r.h for r in rows], [r.error for r in rows])

    control_slope = None
    control_name = HOMOGENEOUS_CONTROL.get(problem.name)
    if control_name is not None:
        control = build_problem(config, control_name)
        control_rows, _ = _convergence_rows(config, control, method, strategy)
        control_slope = fit_slope([r.h for r in control_rows], [r.error for r in control_rows])

    notes = []
    if slope is not None:
        notes.append(f"reduction below declared order: {method.stiff_order - slope:.2f}")
    write_csv(rows, config.out)
    return SweepSummary(
        method=method.name,
        problem=problem.name,
        strategy=strategy.value,
        slope=slope,
        control_slope=control_slope,
        reference=label,
        rows=rows,
        notes=notes,
    )


def estimator_slope(
    problem: Problem,
    method: MethodDefinition,
    strategy: Strategy,
    steps: Sequence[float],
    krylov_tol: float = 1e-12,
) -> Optional[float]:
    """Slope of the embedded estimate |u - u_hat| of one step from u_0 against h."""
    execution = plan(method, strategy, with_estimator=True)
    estimates = []
    for h in steps:
        ctx = StepContext.build(problem, problem.initial, h)
        estimates.append(step(ctx, method, execution, krylov_tol).err_estimate or 0.0)
    return fit_slope(steps, estimates)


def run_adaptive_sweep(config: ExperimentConfig) -> SweepSummary:
    """
    Adaptive runs with atol = rtol = tol over config.tol_list.

    The CSV has columns tol, error, steps, rejections, matvecs, wall_s.
    """
    method = load_method(config)
    problem = build_problem(config)
    strategy = resolve_strategy(config, method)
    t0, t1 = problem.t_span
    h_ref = config.h_ref or (t1 - t0) / settings.REFERENCE_STEPS
    reference, label = _reference(config, problem, method, strategy, h_ref)

    def run(tol: float) -> AdaptiveRow:
        report = integrate_adaptive(
            problem,
            method,
            strategy,
            atol=tol,
            rtol=tol,
            jacobian=config.jacobian,
            row_evaluation=config.row_evaluation,
        )
        return AdaptiveRow(
            tol=tol,
            error=float(np.max(np.abs(np.asarray(report.final_state) - reference))),
            steps=report.accepted_steps,
            rejections=report.rejected_steps,
            matvecs=report.total_matvecs,
            wall_s=report.wall_time_s,
        )

    rows = _ordered_map(run, config.tol_list)
    span = t1 - t0
    steps = config.h_list or [span / 20.0 / 2**k for k in range(4)]
    write_csv(rows, config.out)
    return SweepSummary(
        method=method.name,
        problem=problem.name,
        strategy=strategy.value,
        slope=fit_slope([r.tol for r in rows], [r.error for r in rows]),
        estimator_slope=estimator_slope(problem, method, strategy, steps, config.krylov_tol),
        reference=label,
        rows=rows,
    )


def run_single(config: ExperimentConfig) -> RunReport:
    """One fixed-step run (h_list[0]) or adaptive run (tol_list[0])."""
    method = load_method(config)
    problem = build_problem(config)
    strategy = resolve_strategy(config, method)
    if config.h_list:
        report = integrate_fixed(
            problem,
            method,
            strategy,
            h=config.h_list[0],
            krylov_tol=config.krylov_tol,
            jacobian=config.jacobian,
            row_evaluation=config.row_evaluation,
        )
    else:
        tol = config.tol_list[0]
        report = integrate_adaptive(
            problem,
            method,
            strategy,
            atol=tol,
            rtol=tol,
            jacobian=config.jacobian,
            row_evaluation=config.row_evaluation,
        )
    return report


def check_order(config: ExperimentConfig, rule_set: str = "epirk") -> ConditionSummary:
    """Order-condition report of the configured method, embedded stage included."""
    method = load_method(config)
    report = check_conditions(method, seed=config.seed, rule_set=rule_set)
    embedded_order = None
    if method.embedded is not None:
        embedded = check_conditions(embedded_method(method), seed=config.seed)
        embedded_order = embedded.certified_order
    summary = ConditionSummary(
        method=report.method,
        rule_set=report.rule_set,
        declared_order=report.declared_order,
        certified_order=report.certified_order,
        rows=[
            ConditionRow(
                label=r.label,
                order=r.order,
                residual=r.residual,
                satisfied=r.satisfied,
                gating=r.gating,
                description=r.description,
            )
            for r in report.results
        ],
        violations=report.violations,
        embedded_certified_order=embedded_order,
    )
    write_csv(summary.rows, config.out)
    return summary
