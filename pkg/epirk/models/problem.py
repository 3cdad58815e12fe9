"""Semi-discrete test problems u' = f(u)."""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator

from epirk.exceptions import InvalidArgumentError, NumericFailureError

Vector = np.ndarray
RhsFunction = Callable[[Vector], Vector]
JacobianApply = Callable[[Vector, Vector], Vector]


class BoundaryCondition(str, Enum):
    """Boundary treatment of a method-of-lines problem."""

    NO_FLOW = "no_flow"
    NEUMANN_HOMOG = "neumann_homog"
    PERIODIC = "periodic"
    DIRICHLET_HOMOG = "dirichlet_homog"
    NEUMANN_NONHOMOG = "neumann_nonhomog"
    DIRICHLET_NONHOMOG = "dirichlet_nonhomog"

    @property
    def homogeneous(self) -> bool:
        return self not in (
            BoundaryCondition.NEUMANN_NONHOMOG,
            BoundaryCondition.DIRICHLET_NONHOMOG,
        )


@dataclass(frozen=True)
class Grid:
    """
    Tensor-product grid, x index fastest.

    ``axes`` holds the coordinates of the unknowns along each direction
    (boundary nodes included for Neumann grids, excluded for Dirichlet).
    """

    axes: Tuple[np.ndarray, ...]
    spacing: Tuple[float, ...]
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(len(a) for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        """Flattened coordinate arrays matching the state layout."""
        if self.dim == 1:
            return (self.axes[0].copy(),)
        mesh = np.meshgrid(*self.axes, indexing="xy")
        return tuple(m.ravel() for m in mesh)


@dataclass(frozen=True)
class Problem:
    """
    Autonomous ODE system from a spatial discretization.

    Multi-species states are stored block by block (all u, then all v).
    Problems with time-dependent forcing carry an extra clock component as
    the last entry of the state, with t' = 1.
    """

    name: str
    rhs: RhsFunction
    jac_apply: JacobianApply
    initial: Vector
    t_span: Tuple[float, float]
    bc: BoundaryCondition
    grid: Grid
    species: int = 1
    has_clock: bool = False
    exact_solution: Optional[Callable[[Tuple[np.ndarray, ...], float], Vector]] = None
    jacobian_matrix: Optional[Callable[[Vector], Any]] = None
    parameters: Dict[str, Any] = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return int(self.initial.shape[0])

    @property
    def n(self) -> int:
        """Grid points per species."""
        return self.grid.size

    def with_span(self, t_span: Tuple[float, float]) -> "Problem":
        start, end = float(t_span[0]), float(t_span[1])
        if end <= start:
            raise InvalidArgumentError(f"t_span must be increasing, got {t_span}")
        initial = self.initial
        if self.has_clock:
            initial = initial.copy()
            initial[-1] = start
            if self.exact_solution is not None:
                initial = self.exact_state(start)
        return replace(self, t_span=(start, end), initial=initial)

    def exact_state(self, t: float) -> Vector:
        """Exact solution sampled on the grid, in state layout."""
        if self.exact_solution is None:
            raise InvalidArgumentError(f"{self.name} has no exact solution")
        values = np.asarray(self.exact_solution(self.grid.coordinates(), t), dtype=float)
        if self.has_clock:
            values = np.append(values, t)
        return values

    def evaluate(self, u: Vector) -> Vector:
        """rhs(u) with a finiteness check."""
        out = np.asarray(self.rhs(u))
        if not np.all(np.isfinite(out)):
            raise NumericFailureError(f"{self.name}: right-hand side produced NaN or Inf")
        return out

    def jacobian_operator(self, u: Vector) -> LinearOperator:
        """J(u) as a LinearOperator using the analytic Jacobian action."""
        n = self.dimension
        u = np.array(u, dtype=float, copy=True)
        return LinearOperator(
            (n, n), matvec=lambda v: self.jac_apply(u, np.asarray(v).reshape(-1)), dtype=float
        )


def finite_difference_jacobian(
    rhs: RhsFunction, u: Vector, f_u: Optional[Vector] = None
) -> LinearOperator:
    """
    J(u) v ~ (f(u + eps v) - f(u)) / eps with eps = sqrt(eps_mach) (1 + |u|) / |v|.
    """
    u = np.array(u, dtype=float, copy=True)
    base = np.asarray(rhs(u)) if f_u is None else np.asarray(f_u)
    root_eps = float(np.sqrt(np.finfo(float).eps))
    scale = 1.0 + float(np.linalg.norm(u))

    def matvec(v: np.ndarray) -> np.ndarray:
        v = np.asarray(v).reshape(-1)
        norm_v = float(np.linalg.norm(v))
        if norm_v == 0.0:
            return np.zeros_like(base)
        eps = root_eps * scale / norm_v
        return (np.asarray(rhs(u + eps * v)) - base) / eps

    n = u.shape[0]
    return LinearOperator((n, n), matvec=matvec, dtype=float)
