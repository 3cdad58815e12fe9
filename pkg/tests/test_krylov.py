"""Tests for Arnoldi projection and adaptive Krylov phi evaluation."""

import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.linalg import expm

from epirk.core.krylov import (
    PhiCombinationRequest,
    arnoldi,
    eval_phi_column,
    eval_phi_combination,
    eval_single_phi_with_waypoints,
)
from epirk.core.phi import phi_dense
from epirk.exceptions import InvalidArgumentError, KrylovBudgetExceededError


def _laplacian(n: int) -> sp.csr_matrix:
    dx = 1.0 / (n + 1)
    return sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n), format="csr") / dx**2


def _phi_matrices(M: np.ndarray, k_max: int):
    """Dense phi_0..phi_k_max of an invertible matrix from scipy's expm."""
    I = np.eye(M.shape[0])
    values = [expm(M)]
    factorial = 1.0
    for k in range(k_max):
        values.append(np.linalg.solve(M, values[-1] - I / factorial))
        factorial *= k + 1
    return values


@pytest.fixture
def operator():
    """Scaled 1D Dirichlet Laplacian, moderately stiff."""
    return 2e-3 * _laplacian(40)


@pytest.fixture
def vectors():
    """Smooth vectors of matching size."""
    x = np.linspace(0.0, 1.0, 42)[1:-1]
    return np.sin(np.pi * x), x * (1.0 - x), np.cos(3.0 * x)


def test_arnoldi_relation(operator):
    """A V_m = V_{m+1} H with orthonormal V."""
    rng = np.random.default_rng(1)
    b = rng.standard_normal(40)
    basis = arnoldi(operator, b, m_max=8)
    V = basis.vectors
    assert basis.size == 8
    assert np.allclose(V.T @ V, np.eye(8), atol=1e-12)
    extended = np.column_stack([V, basis.next_vector])
    assert np.allclose(operator @ V, extended @ basis.hessenberg, atol=1e-8)
    assert basis.beta == pytest.approx(np.linalg.norm(b))


def test_arnoldi_happy_breakdown():
    """An invariant subspace of dimension 3 stops the iteration early."""
    A = np.diag([-1.0, -2.0, -3.0, -1.0, -2.0, -3.0])
    b = np.ones(6)
    basis = arnoldi(A, b, m_max=6)
    assert basis.breakdown
    assert basis.size == 3


def test_arnoldi_rejects_zero_vector(operator):
    """A zero start vector has no Krylov space."""
    with pytest.raises(InvalidArgumentError):
        arnoldi(operator, np.zeros(40), m_max=4)


def test_phi_combination_matches_dense(operator, vectors):
    """sum_k g^k phi_k(gA) b_k agrees with the dense oracle."""
    b0, b1, b2 = vectors
    g = 0.7
    request = PhiCombinationRequest(
        operator, [(0, b0), (1, b1), (2, b2)], end_time=g, tolerance=1e-11
    )
    report = eval_phi_combination(request)
    phis = _phi_matrices(g * operator.toarray(), 2)
    expected = phis[0] @ b0 + g * phis[1] @ b1 + g**2 * phis[2] @ b2
    assert np.max(np.abs(report.result - expected)) < 1e-8
    assert report.elapsed == pytest.approx(g)
    assert report.total_matvecs > 0


def test_phi_combination_zero_vectors(operator):
    """All-zero terms return zero without touching the operator."""
    request = PhiCombinationRequest(operator, [(1, np.zeros(40))])
    report = eval_phi_combination(request)
    assert not np.any(report.result)
    assert report.total_matvecs == 0


@pytest.mark.parametrize(
    "terms, end_time",
    [
        ([], 1.0),
        ([(1, np.ones(40)), (1, np.ones(40))], 1.0),
        ([(1, np.ones(40))], 1.5),
        ([(1, np.ones(39))], 1.0),
    ],
)
def test_phi_combination_request_validation(operator, terms, end_time):
    """Empty, duplicated, out-of-range and mis-sized requests are rejected."""
    with pytest.raises(InvalidArgumentError):
        PhiCombinationRequest(operator, terms, end_time=end_time)


def test_column_waypoints_and_derivatives(operator, vectors):
    """One traversal yields phi_k(gA) b at each waypoint and lower indices where asked."""
    b = vectors[2]
    points = [1 / 3, 2 / 3, 1.0]
    column = eval_phi_column(operator, 3, b, points, 1e-11, depths={1.0: 2})
    for g in points:
        phis = _phi_matrices(g * operator.toarray(), 3)
        assert np.max(np.abs(column.phi(g, 3) - phis[3] @ b)) < 1e-8
    phis = _phi_matrices(operator.toarray(), 3)
    assert np.max(np.abs(column.phi(1.0, 2) - phis[2] @ b)) < 1e-7
    assert np.max(np.abs(column.phi(1.0, 1) - phis[1] @ b)) < 1e-7
    with pytest.raises(InvalidArgumentError):
        column.phi(1 / 3, 2)


def test_single_phi_with_waypoints(operator, vectors):
    """Waypoint results come back in the order given."""
    b = vectors[1]
    results = eval_single_phi_with_waypoints(operator, 2, b, [0.5, 1.0], 1e-11)
    for g, value in zip([0.5, 1.0], results):
        phis = _phi_matrices(g * operator.toarray(), 2)
        assert np.max(np.abs(value - phis[2] @ b)) < 1e-8


@pytest.mark.parametrize("points", [[], [0.5, 0.25], [0.0, 1.0], [0.5, 1.2]])
def test_waypoint_validation(operator, vectors, points):
    """Waypoints must be nonempty, increasing and inside (0, 1]."""
    with pytest.raises(InvalidArgumentError):
        eval_single_phi_with_waypoints(operator, 1, vectors[0], points, 1e-8)


def test_budget_exceeded(operator, vectors):
    """A tiny matvec budget fails with the best result attached."""
    request = PhiCombinationRequest(operator, [(1, vectors[2])], tolerance=1e-12)
    with pytest.raises(KrylovBudgetExceededError) as info:
        eval_phi_combination(request, max_matvecs=3)
    assert info.value.best_result.shape == (40,)


def test_stiff_operator_uses_substeps(vectors):
    """A stiff operator is traversed in several substeps and stays accurate."""
    A = 0.05 * _laplacian(40)
    b = vectors[2]
    request = PhiCombinationRequest(A, [(1, b)], tolerance=1e-10)
    report = eval_phi_combination(request, m_max=20)
    phis = _phi_matrices(A.toarray(), 1)
    assert len(report.substeps) > 1
    assert max(m for _, m in report.substeps) <= 20
    assert np.max(np.abs(report.result - phis[1] @ b)) < 1e-7


def _random_operator(rng, size: int = 64) -> np.ndarray:
    """Dense nonsymmetric operator with its spectrum around -scale."""
    scale = rng.uniform(1.0, 10.0)
    return scale * (rng.standard_normal((size, size)) / np.sqrt(size) - np.eye(size))


def test_single_phi_zero_index_is_exponential(operator, vectors):
    """k = 0 returns exp(gA) b at every waypoint."""
    b = vectors[0]
    results = eval_single_phi_with_waypoints(operator, 0, b, [0.25, 0.5, 1.0], 1e-11)
    for g, value in zip([0.25, 0.5, 1.0], results):
        expected = expm(g * operator.toarray()) @ b
        assert np.max(np.abs(value - expected)) < 1e-8


def test_column_rejects_negative_index(operator, vectors):
    with pytest.raises(InvalidArgumentError):
        eval_phi_column(operator, -1, vectors[0], [1.0], 1e-8)


@pytest.mark.parametrize("seed", range(50))
def test_random_operators_match_dense_oracle(seed):
    """sum_k g^k phi_k(gA) b_k on random 64 x 64 operators is within 100 x tol."""
    rng = np.random.default_rng(seed)
    A = _random_operator(rng)
    terms = [(k, rng.standard_normal(64)) for k in range(4)]
    g = rng.uniform(0.2, 1.0)
    tol = 10.0 ** rng.uniform(-11.0, -7.0)
    report = eval_phi_combination(PhiCombinationRequest(A, terms, end_time=g, tolerance=tol))
    table = phi_dense(3, g * A)
    expected = sum(g**k * (table[k] @ b) for k, b in terms)
    scale = max(1.0, float(np.max(np.abs(expected))))
    assert np.max(np.abs(report.result - expected)) <= 100.0 * tol * scale
    assert report.est_error <= tol


@pytest.mark.parametrize("seed", range(40))
def test_halving_tolerance_never_raises_estimate(seed):
    """est_error at tol / 2 is at most est_error at tol; substeps cover [0, g] exactly."""
    rng = np.random.default_rng(1000 + seed)
    A = _random_operator(rng)
    terms = [(k, rng.standard_normal(64)) for k in (0, 1, 2)]
    g = rng.uniform(0.3, 1.0)
    tol = 10.0 ** rng.uniform(-10.0, -6.0)
    loose = eval_phi_combination(PhiCombinationRequest(A, terms, g, tol), m_max=16)
    tight = eval_phi_combination(PhiCombinationRequest(A, terms, g, tol / 2), m_max=16)
    assert tight.est_error <= loose.est_error
    assert loose.est_error <= tol
    assert tight.est_error <= tol / 2
    for report in (loose, tight):
        assert math.fsum(tau for tau, _ in report.substeps) == pytest.approx(g, abs=1e-14)


def test_stretched_substeps_use_half_the_budget_or_more(vectors):
    """Substeps that stop short of the end carry a per-unit error above tol / 2."""
    A = 0.05 * _laplacian(40)
    tol = 1e-9
    loose = eval_phi_combination(
        PhiCombinationRequest(A, [(1, vectors[2])], tolerance=tol), m_max=12
    )
    tight = eval_phi_combination(
        PhiCombinationRequest(A, [(1, vectors[2])], tolerance=tol / 2), m_max=12
    )
    assert len(loose.substeps) > 1
    assert tol / 2 < loose.est_error <= tol
    assert tight.est_error <= tol / 2


def test_single_waypoint_is_the_combination(operator, vectors):
    """A waypoint list of [1] reproduces the single-term combination."""
    b = vectors[1]
    (column,) = eval_single_phi_with_waypoints(operator, 2, b, [1.0], 1e-11)
    report = eval_phi_combination(PhiCombinationRequest(operator, [(2, b)], tolerance=1e-11))
    assert np.max(np.abs(column - report.result)) <= 1e-13


@pytest.mark.parametrize("seed", range(10))
def test_waypoints_agree_with_separate_calls(seed):
    """Values read off at waypoints match one traversal per scale."""
    rng = np.random.default_rng(500 + seed)
    A = _random_operator(rng)
    b = rng.standard_normal(64)
    tol = 1e-10
    points = sorted(rng.uniform(0.1, 1.0, size=3))
    together = eval_single_phi_with_waypoints(A, 2, b, points, tol)
    for g, value in zip(points, together):
        (alone,) = eval_single_phi_with_waypoints(A, 2, b, [g], tol)
        assert np.max(np.abs(value - alone)) <= 100.0 * tol * max(1.0, np.max(np.abs(alone)))
