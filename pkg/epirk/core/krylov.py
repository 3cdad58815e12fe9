"""Arnoldi projection and adaptive-substepping Krylov evaluation of phi combinations.

The combination

    u(t) = phi_0(tA) b_0 + t phi_1(tA) b_1 + ... + t^p phi_p(tA) b_p

is the top block of exp(t A~) y_0 for the augmented operator

    A~ = [[A, W / eta], [0, J]],    y_0 = [b_0; eta e_p],

with W = [b_p, ..., b_1] and J the p x p upper shift. The interval [0, g] is
traversed in substeps tau, each with a fresh Krylov basis of A~ built from the
current augmented state.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from epirk.config import settings
from epirk.core.phi import (
    MAX_PHI_INDEX,
    PhiValueTable,
    expm_taylor,
    extend_downward,
    phi_dense,
)
from epirk.exceptions import (
    InvalidArgumentError,
    KrylovBudgetExceededError,
    NumericFailureError,
)

logger = logging.getLogger(__name__)

OperatorLike = Union[LinearOperator, np.ndarray, "object"]

# Basis sizes at which the error estimate is evaluated
CHECKPOINTS: Tuple[int, ...] = (
    1, 2, 3, 4, 5, 6, 8, 10, 12, 14, 16, 20, 24, 28, 32,
    40, 48, 56, 64, 80, 96, 112, 128, 160, 192, 224, 256,
)  # fmt: skip
INITIAL_BASIS_SIZE = 10

# Substep factor clip and safety
TAU_MIN_FACTOR = 0.2
TAU_SAFETY = 0.9
STRETCH_BISECTIONS = 60


def as_operator(operator: OperatorLike) -> LinearOperator:
    """Wrap arrays and sparse matrices as a scipy LinearOperator."""
    if isinstance(operator, LinearOperator):
        return operator
    return aslinearoperator(operator)


def _dtype_of(operator: LinearOperator) -> np.dtype:
    return np.dtype(np.float64) if operator.dtype is None else np.dtype(operator.dtype)


def _operator_dtype(operator: LinearOperator, vector: np.ndarray) -> np.dtype:
    return np.result_type(_dtype_of(operator), vector.dtype, np.float64)


@dataclass
class KrylovBasis:
    """Orthonormal Krylov basis V and its (m+1) x m Hessenberg matrix."""

    vectors: np.ndarray
    hessenberg: np.ndarray
    beta: float
    next_vector: Optional[np.ndarray] = None
    breakdown_index: Optional[int] = None
    matvecs: int = 0
    reorthogonalizations: int = 0

    @property
    def size(self) -> int:
        return self.vectors.shape[1]

    @property
    def breakdown(self) -> bool:
        return self.breakdown_index is not None

    @property
    def square(self) -> np.ndarray:
        """The leading m x m block of the Hessenberg matrix."""
        m = self.size
        return self.hessenberg[:m, :m]


class ArnoldiProcess:
    """
    Incremental Arnoldi iteration.

    Modified Gram-Schmidt followed by one full re-orthogonalization pass per
    new vector. The basis can be grown in stages with ``extend`` so callers
    can test an error estimate at several sizes without restarting.
    """

    def __init__(
        self,
        operator: LinearOperator,
        v1: np.ndarray,
        m_max: int,
        breakdown_tol: float,
    ):
        """
        Initialize the process.

        Args:
            operator: square linear operator
            v1: unit-norm start vector
            m_max: largest basis size that may be requested
            breakdown_tol: absolute subdiagonal threshold for happy breakdown
        """
        if m_max < 1:
            raise InvalidArgumentError(f"m_max must be >= 1, got {m_max}")
        self.operator = operator
        self.dimension = operator.shape[0]
        self.m_max = min(m_max, self.dimension)
        self.breakdown_tol = breakdown_tol
        dtype = _operator_dtype(operator, v1)
        self.V = np.zeros((self.dimension, self.m_max + 1), dtype=dtype)
        self.H = np.zeros((self.m_max + 1, self.m_max), dtype=dtype)
        self.V[:, 0] = v1
        self.m = 0
        self.breakdown = False
        self.matvecs = 0
        self.reorthogonalizations = 0

    def extend(self, m_target: int) -> int:
        """
        Grow the basis to ``m_target`` vectors or until breakdown.

        Returns:
            The basis size reached

        Raises:
            NumericFailureError: If the operator returns non-finite values
        """
        m_target = min(m_target, self.m_max)
        while self.m < m_target and not self.breakdown:
            j = self.m
            w = np.asarray(self.operator.matvec(self.V[:, j])).reshape(-1).astype(
                self.V.dtype, copy=False
            )
            self.matvecs += 1
            if not np.all(np.isfinite(w)):
                raise NumericFailureError(f"operator apply produced non-finite values at m={j + 1}")

            for i in range(j + 1):
                h = np.vdot(self.V[:, i], w)
                self.H[i, j] = h
                w = w - h * self.V[:, i]
            basis = self.V[:, : j + 1]
            correction = basis.conj().T @ w
            self.H[: j + 1, j] += correction
            w = w - basis @ correction
            self.reorthogonalizations += 1

            h_next = float(np.linalg.norm(w))
            self.H[j + 1, j] = h_next
            self.m = j + 1
            if h_next <= self.breakdown_tol or self.m >= self.dimension:
                self.breakdown = True
            else:
                self.V[:, j + 1] = w / h_next
        return self.m

    @property
    def subdiagonal(self) -> float:
        return float(abs(self.H[self.m, self.m - 1])) if self.m else 0.0

    @property
    def next_vector_norm(self) -> float:
        if self.breakdown or self.m == 0:
            return 0.0
        return float(np.max(np.abs(self.V[:, self.m])))

    def basis(self, beta: float) -> KrylovBasis:
        m = self.m
        return KrylovBasis(
            vectors=self.V[:, :m].copy(),
            hessenberg=self.H[: m + 1, :m].copy(),
            beta=beta,
            next_vector=None if self.breakdown else self.V[:, m].copy(),
            breakdown_index=m if self.breakdown else None,
            matvecs=self.matvecs,
            reorthogonalizations=self.reorthogonalizations,
        )


def arnoldi(
    operator: OperatorLike,
    b: np.ndarray,
    m_max: int,
    happy_tol: Optional[float] = None,
) -> KrylovBasis:
    """
    Build a Krylov basis of ``operator`` started from ``b``.

    Args:
        operator: linear operator (array, sparse matrix or LinearOperator)
        b: start vector, nonzero
        m_max: maximum basis size
        happy_tol: breakdown threshold relative to ||b||

    Returns:
        KrylovBasis with orthonormal columns and Hessenberg matrix

    Raises:
        InvalidArgumentError: If b is zero or m_max < 1
        NumericFailureError: If the operator produces NaN or Inf
    """
    op = as_operator(operator)
    b = np.asarray(b).reshape(-1)
    beta = float(np.linalg.norm(b))
    if beta == 0.0:
        raise InvalidArgumentError("arnoldi start vector must be nonzero")
    if b.shape[0] != op.shape[1]:
        raise InvalidArgumentError(f"vector length {b.shape[0]} does not match operator {op.shape}")
    tol = settings.KRYLOV_HAPPY_TOL if happy_tol is None else happy_tol
    process = ArnoldiProcess(op, b / beta, m_max, tol * beta)
    process.extend(m_max)
    return process.basis(beta)


class AugmentedOperator(LinearOperator):
    """[[A, W], [0, J]] with J the upper shift on the trailing p coordinates."""

    def __init__(self, operator: LinearOperator, W: np.ndarray):
        self.inner = operator
        self.W = W
        self.n = operator.shape[0]
        self.p = W.shape[1]
        dtype = np.result_type(_dtype_of(operator), W.dtype)
        super().__init__(dtype=dtype, shape=(self.n + self.p, self.n + self.p))

    def _matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x).reshape(-1)
        top = np.asarray(self.inner.matvec(x[: self.n])).reshape(-1) + self.W @ x[self.n :]
        bottom = np.zeros(self.p, dtype=top.dtype)
        bottom[:-1] = x[self.n + 1 :]
        return np.concatenate([top, bottom])


@dataclass
class PhiCombinationRequest:
    """Evaluate sum_k t^k phi_k(tA) b_k at t = end_time."""

    operator: OperatorLike
    terms: List[Tuple[int, np.ndarray]]
    end_time: float = 1.0
    tolerance: float = 1e-10

    def __post_init__(self) -> None:
        self.operator = as_operator(self.operator)
        indices = [k for k, _ in self.terms]
        if not self.terms:
            raise InvalidArgumentError("phi combination needs at least one term")
        if len(set(indices)) != len(indices):
            raise InvalidArgumentError(f"phi indices must be distinct, got {indices}")
        for k in indices:
            if k < 0 or k > MAX_PHI_INDEX:
                raise InvalidArgumentError(f"phi index {k} out of range")
        if not 0.0 < self.end_time <= 1.0:
            raise InvalidArgumentError(f"end_time must lie in (0, 1], got {self.end_time}")
        if self.tolerance <= 0.0:
            raise InvalidArgumentError(f"tolerance must be positive, got {self.tolerance}")
        n = self.operator.shape[0]
        for k, b in self.terms:
            if np.asarray(b).reshape(-1).shape[0] != n:
                raise InvalidArgumentError(f"term phi_{k} vector does not match dimension {n}")


@dataclass
class KrylovReport:
    """
    Outcome of one adaptive Krylov traversal (one projection).

    ``est_error`` is the largest per-unit-time error estimate over the
    accepted substeps, the quantity compared against the tolerance.
    """

    result: np.ndarray
    substeps: List[Tuple[float, int]] = field(default_factory=list)
    total_matvecs: int = 0
    est_error: float = 0.0
    reorthogonalizations: int = 0

    @property
    def elapsed(self) -> float:
        return math.fsum(tau for tau, _ in self.substeps)


@dataclass
class WaypointValues:
    """phi_{K-d}(g A) b for each waypoint g and derivative depth d."""

    order: int
    values: Dict[float, Dict[int, np.ndarray]]
    report: KrylovReport

    def phi(self, g: float, k: int) -> np.ndarray:
        try:
            return self.values[g][k]
        except KeyError:
            raise InvalidArgumentError(f"phi_{k} at scale {g} was not requested") from None


def _validate_waypoints(waypoints: Sequence[float]) -> List[float]:
    points = [float(w) for w in waypoints]
    if not points:
        raise InvalidArgumentError("waypoint list must be nonempty")
    if any(b <= a for a, b in zip(points, points[1:])):
        raise InvalidArgumentError(f"waypoints must be strictly increasing, got {points}")
    if points[0] <= 0.0 or points[-1] > 1.0:
        raise InvalidArgumentError(f"waypoints must lie in (0, 1], got {points}")
    return points


def _next_checkpoint(m: int, limit: int) -> Optional[int]:
    for c in CHECKPOINTS:
        if c > m:
            return c if c <= limit else (limit if limit > m else None)
    return limit if limit > m else None


def _exp_columns(tau_h: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """exp(tau H) e_1 and phi_1(tau H) e_1 from one (m+1) x (m+1) exponential."""
    m = tau_h.shape[0]
    aug = np.zeros((m + 1, m + 1), dtype=tau_h.dtype)
    aug[:m, :m] = tau_h
    aug[0, m] = 1.0
    E = expm_taylor(aug)
    return E[:m, 0], E[:m, m]


@dataclass
class _SubstepTrial:
    """Error estimate and Krylov columns for one candidate substep length."""

    tau: float
    err: float
    exp_col: np.ndarray
    table: Optional[PhiValueTable] = None

    @property
    def rate(self) -> float:
        return self.err / self.tau


def _trial(process: ArnoldiProcess, beta: float, tau: float, depth: int) -> _SubstepTrial:
    """Estimate the substep error of length ``tau`` on the current basis.

    With ``depth > 0`` the derivative estimates are folded into the error, so
    a single per-unit-time rate decides acceptance.
    """
    m = process.m
    tau_h = tau * process.H[:m, :m]
    table: Optional[PhiValueTable] = None
    levels: List[complex] = []
    if depth > 0:
        table = extend_downward(phi_dense(1, tau_h), -depth, tau_h)
        exp_col = table[0][:, 0]
        phi1_col = table[1][:, 0]
        levels = [table[-(d - 1)][m - 1, 0] for d in range(1, depth + 1)]
    else:
        exp_col, phi1_col = _exp_columns(tau_h)
    if process.breakdown:
        return _SubstepTrial(tau, 0.0, exp_col, table)

    h_sub = process.subdiagonal
    scale_v = process.next_vector_norm
    err = beta * tau * h_sub * abs(phi1_col[m - 1]) * scale_v
    for d, level in enumerate(levels, start=1):
        err = max(err, beta * h_sub * tau ** (2 - d) * abs(level) * scale_v)
    return _SubstepTrial(tau, err, exp_col, table)


def _stretch(
    process: ArnoldiProcess,
    beta: float,
    first: float,
    remaining: float,
    tolerance: float,
    floor: float,
) -> _SubstepTrial:
    """
    Longest affordable substep short of ``remaining`` on a fixed basis.

    Starting from the predicted length ``first``, shrink until the rate is
    within tolerance, then bisect against ``remaining`` (known to be over
    tolerance) until the rate lies in (tolerance / 2, tolerance]. No matvecs.
    """
    hi = remaining
    lo = _trial(process, beta, first, 0)
    while lo.rate > tolerance:
        hi = lo.tau
        factor = TAU_SAFETY * (tolerance / lo.rate) ** (1.0 / process.m)
        tau = lo.tau * min(0.5, max(TAU_MIN_FACTOR, factor))
        if tau <= floor:
            raise KrylovBudgetExceededError(
                f"Krylov substep underflow (rate={lo.rate:.3e})",
                best_result=None,
                est_error=lo.rate,
            )
        lo = _trial(process, beta, tau, 0)
    for _ in range(STRETCH_BISECTIONS):
        if lo.rate > 0.5 * tolerance:
            break
        mid = _trial(process, beta, 0.5 * (lo.tau + hi), 0)
        if mid.rate > tolerance:
            hi = mid.tau
        else:
            lo = mid
    return lo


def _traverse(
    operator: LinearOperator,
    terms: Sequence[Tuple[int, np.ndarray]],
    waypoints: Sequence[float],
    tolerance: float,
    depths: Optional[Dict[float, int]] = None,
    m_max: Optional[int] = None,
    happy_tol: Optional[float] = None,
    max_matvecs: Optional[int] = None,
) -> Tuple[Dict[float, List[np.ndarray]], KrylovReport]:
    """
    Adaptive traversal of [0, waypoints[-1]] for u(t) = sum_k t^k phi_k(tA) b_k.

    Returns, for every waypoint g, [u(g), u'(g), ..., u^(d)(g)] with d the
    requested depth at g, together with the traversal report.
    """
    depths = depths or {}
    m_max = settings.KRYLOV_M_MAX if m_max is None else m_max
    happy_tol = settings.KRYLOV_HAPPY_TOL if happy_tol is None else happy_tol
    max_matvecs = settings.KRYLOV_MAX_MATVECS if max_matvecs is None else max_matvecs

    n = operator.shape[0]
    vectors = {k: np.asarray(b).reshape(-1) for k, b in terms}
    dtype = np.result_type(_dtype_of(operator), *[v.dtype for v in vectors.values()])
    b0 = vectors.get(0, np.zeros(n, dtype=dtype)).astype(dtype)
    higher = {k: v for k, v in vectors.items() if k > 0 and np.any(v)}
    p = max(higher) if higher else 0
    eta = max((float(np.max(np.abs(v))) for v in higher.values()), default=0.0)

    outputs: Dict[float, List[np.ndarray]] = {}
    end = waypoints[-1]
    if eta == 0.0 and not np.any(b0):
        for g in waypoints:
            outputs[g] = [np.zeros(n, dtype=dtype) for _ in range(depths.get(g, 0) + 1)]
        return outputs, KrylovReport(result=np.zeros(n, dtype=dtype), substeps=[(end, 0)])

    if p > 0:
        W = np.zeros((n, p), dtype=dtype)
        for k, v in higher.items():
            W[:, p - k] = v / eta
        aug_op: LinearOperator = AugmentedOperator(operator, W)
        y = np.concatenate([b0, np.zeros(p, dtype=dtype)])
        y[n + p - 1] = eta
    else:
        aug_op = operator
        y = b0.copy()

    m_limit = min(m_max, aug_op.shape[0])
    taus: List[float] = []
    report = KrylovReport(result=y[:n])
    t = 0.0
    m_target = min(INITIAL_BASIS_SIZE, m_limit)
    pending = list(waypoints)

    while pending:
        target = pending[0]
        depth = depths.get(target, 0)
        remaining = target - t
        beta = float(np.linalg.norm(y))
        if beta == 0.0:
            taus.append(remaining)
            report.substeps.append((remaining, 0))
            t = target
            outputs[target] = [np.zeros(n, dtype=dtype) for _ in range(depth + 1)]
            pending.pop(0)
            continue

        # Landing on the next waypoint is tried first; the basis grows while the
        # m^2 cost model prefers it, otherwise the substep is cut short.
        process = ArnoldiProcess(aug_op, y / beta, m_limit, happy_tol)
        m = process.extend(m_target)
        while True:
            if report.total_matvecs + process.matvecs > max_matvecs:
                raise KrylovBudgetExceededError(
                    f"Krylov matvec budget {max_matvecs} exhausted at t={t:.6g}",
                    best_result=y[:n].copy(),
                    est_error=report.est_error,
                )
            step = _trial(process, beta, remaining, depth)
            if step.rate <= tolerance:
                landing = True
                break
            factor = TAU_SAFETY * (tolerance / step.rate) ** (1.0 / m)
            shrink = min(1.0, max(TAU_MIN_FACTOR, factor))
            grow_to = _next_checkpoint(m, m_limit)
            if grow_to is not None and grow_to**2 <= m**2 / shrink:
                m = process.extend(grow_to)
                continue
            try:
                step = _stretch(
                    process, beta, remaining * shrink, remaining, tolerance, end * 1e-13
                )
            except KrylovBudgetExceededError as exc:
                raise KrylovBudgetExceededError(
                    f"{exc} at t={t:.6g}",
                    best_result=y[:n].copy(),
                    est_error=max(report.est_error, exc.est_error),
                ) from None
            landing = False
            break

        tau = step.tau
        y_new = beta * (process.V[:, :m] @ step.exp_col)
        derivatives: List[np.ndarray] = []
        if landing and step.table is not None:
            for d in range(1, depth + 1):
                col = step.table[-d][:, 0] / tau**d
                derivatives.append(beta * (process.V[:, :m] @ col))

        taus.append(tau)
        report.substeps.append((tau, m))
        report.total_matvecs += process.matvecs
        report.reorthogonalizations += process.reorthogonalizations
        report.est_error = max(report.est_error, step.rate)
        logger.debug(
            "krylov substep",
            extra={"tau": tau, "m": m, "err": step.err, "t": t + tau, "matvecs": process.matvecs},
        )
        if not np.all(np.isfinite(y_new)):
            raise NumericFailureError(f"Krylov substep produced non-finite values at t={t:.6g}")

        y = y_new
        m_target = m
        if landing:
            t = target
            outputs[target] = [y[:n].copy()] + [dv[:n] for dv in derivatives]
            pending.pop(0)
        else:
            t = math.fsum(taus)

    report.result = y[:n].copy()
    return outputs, report


def eval_phi_combination(
    request: PhiCombinationRequest,
    m_max: Optional[int] = None,
    happy_tol: Optional[float] = None,
    max_matvecs: Optional[int] = None,
) -> KrylovReport:
    """
    Evaluate u(g) = sum_k g^k phi_k(g A) b_k with one adaptive traversal.

    Args:
        request: operator, terms, end time g and tolerance
        m_max: basis size cap (defaults to settings.KRYLOV_M_MAX)
        happy_tol: breakdown threshold
        max_matvecs: matvec budget

    Returns:
        KrylovReport whose ``result`` is u(g)

    Raises:
        KrylovBudgetExceededError: If the tolerance is not reached within budget
        NumericFailureError: On NaN or Inf
    """
    _, report = _traverse(
        request.operator,
        request.terms,
        [request.end_time],
        request.tolerance,
        m_max=m_max,
        happy_tol=happy_tol,
        max_matvecs=max_matvecs,
    )
    return report


def eval_phi_column(
    operator: OperatorLike,
    k: int,
    b: np.ndarray,
    waypoints: Sequence[float],
    tolerance: float,
    depths: Optional[Dict[float, int]] = None,
    m_max: Optional[int] = None,
    max_matvecs: Optional[int] = None,
) -> WaypointValues:
    """
    One traversal of u(t) = t^k phi_k(tA) b, read off at every waypoint.

    At waypoint g the d-th time derivative of u equals g^(k-d) phi_(k-d)(gA) b,
    so ``depths[g] = d`` also yields phi_(k-1) .. phi_(k-d) at that scale
    from the same basis.

    Returns:
        WaypointValues with values[g][j] = phi_j(gA) b
    """
    op = as_operator(operator)
    if k < 0 or k > MAX_PHI_INDEX:
        raise InvalidArgumentError(f"column phi index must be in 0..{MAX_PHI_INDEX}, got {k}")
    points = _validate_waypoints(waypoints)
    depths = depths or {}
    for g, d in depths.items():
        if d < 0 or d > k:
            raise InvalidArgumentError(f"derivative depth {d} at {g} outside 0..{k}")
    request = PhiCombinationRequest(op, [(k, b)], points[-1], tolerance)
    raw, report = _traverse(
        request.operator,
        request.terms,
        points,
        tolerance,
        depths=depths,
        m_max=m_max,
        max_matvecs=max_matvecs,
    )
    values: Dict[float, Dict[int, np.ndarray]] = {}
    for g, derivs in raw.items():
        values[g] = {k - d: vec / g ** (k - d) for d, vec in enumerate(derivs)}
    return WaypointValues(order=k, values=values, report=report)


def eval_single_phi_with_waypoints(
    operator: OperatorLike,
    k: int,
    b: np.ndarray,
    waypoints: Sequence[float],
    tolerance: float,
) -> List[np.ndarray]:
    """
    Compute phi_k(g A) b for every g in ``waypoints`` with a single traversal.

    k = 0 gives exp(g A) b.

    Raises:
        InvalidArgumentError: If waypoints are empty, unsorted or outside (0, 1]
    """
    column = eval_phi_column(operator, k, b, waypoints, tolerance)
    return [column.phi(float(g), k) for g in waypoints]
