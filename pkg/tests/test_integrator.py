"""Tests for EPIRK stepping and the fixed/adaptive drivers."""

from dataclasses import replace

import numpy as np
import pytest
from scipy.linalg import expm

from epirk.exceptions import (
    IntegrationError,
    InvalidArgumentError,
    NotAvailableError,
    NumericFailureError,
    StiffnessFailureError,
)
from epirk.problems import get_problem
from epirk.schemes.builtin import builtin
from epirk.services.integrator import (
    StepContext,
    evaluate_step_dense,
    integrate_adaptive,
    integrate_fixed,
    remainder,
    step,
    weighted_error,
)
from epirk.services.planning import feasible_strategies, plan

TIGHT = 1e-12


@pytest.fixture
def heat():
    """Linear heat equation: every scheme reduces to exp(hA) u."""
    return get_problem("linear_diffusion_1d", 10)


@pytest.fixture
def allen_cahn():
    return get_problem("allen_cahn_2d", 6, t_end=0.1)


@pytest.mark.parametrize("name", ["EPIRK4s3A", "EPIRK5s3", "EXPRB53s3"])
def test_linear_problem_step_is_matrix_exponential(heat, name):
    """For f(u) = A u all residuals vanish and u_next = exp(hA) u_n."""
    method = builtin(name)
    A = heat.jacobian_matrix(heat.initial).toarray()
    h = 0.01
    expected = expm(h * A) @ heat.initial
    for strategy in feasible_strategies(method):
        ctx = StepContext.build(heat, heat.initial, h)
        result = step(ctx, method, plan(method, strategy), krylov_tol=TIGHT)
        assert np.allclose(result.u_next, expected, atol=1e-9), strategy
        for residual in result.residual_vectors.values():
            assert np.max(np.abs(residual)) < 1e-8


@pytest.mark.parametrize("name", ["EPIRK4s3A", "EPIRK4s3B", "EPIRK5s3", "EXPRB53s3"])
def test_krylov_step_matches_dense_step(allen_cahn, name):
    """Every feasible strategy reproduces the dense-phi step on a nonlinear problem."""
    method = builtin(name)
    u = allen_cahn.initial
    h = 0.05
    J = allen_cahn.jacobian_matrix(u).toarray()
    dense, _ = evaluate_step_dense(method, u, h, allen_cahn.rhs, J)
    for strategy in feasible_strategies(method):
        execution = plan(method, strategy)
        result = step(StepContext.build(allen_cahn, u, h), method, execution, krylov_tol=TIGHT)
        assert np.allclose(result.u_next, dense, atol=1e-9), strategy
        assert result.projections == execution.expected_projection_count
        assert result.matvecs > 0


def test_rewrite_rows_match_combination_rows(allen_cahn):
    """Single-phi row evaluation agrees with the direct combination."""
    method = builtin("EPIRK4s3A")
    u, h = allen_cahn.initial, 0.05
    direct = step(
        StepContext.build(allen_cahn, u, h), method, plan(method, "mixed"), krylov_tol=TIGHT
    )
    folded = step(
        StepContext.build(allen_cahn, u, h),
        method,
        plan(method, "mixed", row_evaluation="rewrite"),
        krylov_tol=TIGHT,
    )
    assert np.allclose(direct.u_next, folded.u_next, atol=1e-9)


def test_error_estimate_matches_dense_embedded(allen_cahn):
    """err_estimate is the max-norm distance to the embedded solution."""
    method = builtin("EPIRK4s3A")
    u, h = allen_cahn.initial, 0.05
    J = allen_cahn.jacobian_matrix(u).toarray()
    dense, dense_hat = evaluate_step_dense(method, u, h, allen_cahn.rhs, J)
    execution = plan(method, "mixed", with_estimator=True)
    result = step(StepContext.build(allen_cahn, u, h), method, execution, krylov_tol=TIGHT)
    assert result.u_embedded is not None
    assert np.allclose(result.u_embedded, dense_hat, atol=1e-9)
    assert result.err_estimate == pytest.approx(np.max(np.abs(dense - dense_hat)), abs=1e-8)
    assert result.projections == 3


def test_remainder_vanishes_at_step_start(allen_cahn):
    """r(u_n) = 0 by construction."""
    ctx = StepContext.build(allen_cahn, allen_cahn.initial, 0.1)
    assert np.allclose(remainder(allen_cahn.initial, ctx), 0.0)
    with pytest.raises(InvalidArgumentError):
        remainder(np.zeros(3), ctx)


def test_finite_difference_jacobian_mode(allen_cahn):
    """The difference-quotient Jacobian gives nearly the same step."""
    method = builtin("EPIRK4s3A")
    u, h = allen_cahn.initial, 0.05
    analytic = step(StepContext.build(allen_cahn, u, h), method, krylov_tol=1e-10)
    fd = step(StepContext.build(allen_cahn, u, h, jacobian="fd"), method, krylov_tol=1e-10)
    assert np.allclose(analytic.u_next, fd.u_next, atol=1e-6)
    with pytest.raises(InvalidArgumentError):
        StepContext.build(allen_cahn, u, h, jacobian="secant")


def test_invalid_step_size(allen_cahn):
    """Non-positive step sizes are rejected."""
    with pytest.raises(InvalidArgumentError):
        StepContext.build(allen_cahn, allen_cahn.initial, 0.0)
    with pytest.raises(InvalidArgumentError):
        integrate_fixed(allen_cahn, builtin("EPIRK4s3A"), h=-0.1)


def test_plan_for_another_method(allen_cahn):
    """A plan is bound to the method it was built for."""
    ctx = StepContext.build(allen_cahn, allen_cahn.initial, 0.05)
    with pytest.raises(InvalidArgumentError):
        step(ctx, builtin("EPIRK4s3A"), plan(builtin("EPIRK4s3B"), "mixed"))


def test_stage_failure_is_tagged(heat):
    """A NaN in the first internal stage reports stage 2."""
    start = heat.initial.copy()
    A = heat.jacobian_matrix(start)

    def rhs(u):
        if np.array_equal(u, start):
            return A @ u
        return np.full_like(u, np.nan)

    broken = replace(heat, rhs=rhs)
    ctx = StepContext.build(broken, start, 0.01)
    with pytest.raises(NumericFailureError) as info:
        step(ctx, builtin("EPIRK4s3A"))
    assert info.value.stage == 2


def test_integrate_fixed_reaches_end(heat):
    """The last step is shortened so the steps cover the span exactly."""
    report = integrate_fixed(heat, builtin("EPIRK4s3A"), "mixed", h=0.03, krylov_tol=TIGHT)
    assert report.completed
    assert len(report.steps) == 4
    assert sum(s.h for s in report.steps) == pytest.approx(0.1)
    assert report.steps[-1].h == pytest.approx(0.01)
    assert report.final_error < 1e-8
    assert report.expected_projections == 2


def test_integrate_fixed_projection_contract(allen_cahn):
    """Every step of a nonlinear run uses exactly the planned projections."""
    report = integrate_fixed(allen_cahn, builtin("EPIRK4s3A"), "vertical", h=0.05)
    assert report.completed
    assert report.projection_contract_holds
    assert report.projections_per_step == 3
    assert report.final_state.shape == (allen_cahn.dimension,)
    assert report.final_error is None


def test_integrate_fixed_custom_span(heat):
    """An explicit span restarts the problem at its start time."""
    report = integrate_fixed(heat, builtin("EPIRK4s3A"), h=0.05, t_span=(0.0, 0.05))
    assert report.t_span == (0.0, 0.05)
    assert len(report.steps) == 1


def test_integrate_adaptive_completes(allen_cahn):
    """The embedded estimator drives a run to the end of the span."""
    report = integrate_adaptive(allen_cahn, builtin("EPIRK4s3A"), atol=1e-6, rtol=1e-6)
    assert report.completed
    assert report.accepted_steps > 0
    accepted = [s for s in report.steps if s.accepted]
    assert sum(s.h for s in accepted) == pytest.approx(0.1)
    assert all(s.err <= 1.0 for s in accepted)


def test_integrate_adaptive_needs_estimator(allen_cahn):
    """Methods without an embedded stage cannot run adaptively."""
    with pytest.raises(NotAvailableError):
        integrate_adaptive(allen_cahn, builtin("EPIRK5s3"))


def test_integrate_adaptive_attempt_limit(allen_cahn):
    """Exceeding max_steps surfaces as an IntegrationError with a partial report."""
    with pytest.raises(IntegrationError) as info:
        integrate_adaptive(allen_cahn, builtin("EPIRK4s3A"), h0=0.01, max_steps=1)
    assert isinstance(info.value.cause, StiffnessFailureError)
    assert not info.value.report.completed
    assert len(info.value.report.steps) == 1


def test_integrate_adaptive_validates_tolerances(allen_cahn):
    with pytest.raises(InvalidArgumentError):
        integrate_adaptive(allen_cahn, builtin("EPIRK4s3A"), atol=0.0)


def test_weighted_error():
    """Errors are scaled by atol + rtol max(|u_old|, |u_new|)."""
    delta = np.array([1e-6, 2e-6])
    u_old = np.array([1.0, 0.0])
    u_new = np.array([1.0, 1.0])
    assert weighted_error(delta, u_old, u_new, atol=1e-6, rtol=1e-6) == pytest.approx(1.0)


def test_matvec_cost_direction_on_allen_cahn():
    """Over 20 steps vertical costs at least horizontal, which is within 5% of mixed or above."""
    problem = get_problem("allen_cahn_2d", 32, t_end=0.1)
    method = builtin("EPIRK4s3A")
    matvecs = {
        strategy: integrate_fixed(problem, method, strategy, h=0.005).total_matvecs
        for strategy in ("vertical", "horizontal", "mixed")
    }
    assert matvecs["vertical"] >= matvecs["horizontal"]
    assert matvecs["horizontal"] >= 0.95 * matvecs["mixed"]
