"""Two-dimensional advection-diffusion-reaction equation.

    u_t = eps (u_xx + u_yy) - alpha (u_x + u_y) + gamma u (u - 1/2)(1 - u)

Advection uses centered differences; at the resolutions of interest the
diffusive scale eps / dx^2 dominates alpha / dx, so no upwinding is applied.
"""

from typing import Optional

import numpy as np
import scipy.sparse as sp

from epirk.exceptions import InvalidArgumentError
from epirk.models.problem import BoundaryCondition, Problem
from epirk.problems.grid import NEUMANN, gradient_sum, laplacian, make_grid

EPSILON = 1.0 / 100.0
ALPHA = -10.0
GAMMA = 100.0
BOUNDS = ((0.0, 1.0), (0.0, 1.0))
T_END = 0.1


def adr_2d(n_per_side: int, t_end: Optional[float] = None) -> Problem:
    """ADR on [0, 1]^2 with homogeneous Neumann boundaries."""
    if n_per_side < 4:
        raise InvalidArgumentError(f"adr_2d needs n >= 4, got {n_per_side}")
    grid = make_grid(n_per_side, BOUNDS, NEUMANN)
    linear = (EPSILON * laplacian(grid, NEUMANN) - ALPHA * gradient_sum(grid, NEUMANN)).tocsr()
    x, y = grid.coordinates()

    def rhs(u: np.ndarray) -> np.ndarray:
        return linear @ u + GAMMA * u * (u - 0.5) * (1.0 - u)

    def reaction_slope(u: np.ndarray) -> np.ndarray:
        return GAMMA * (-3.0 * u**2 + 3.0 * u - 0.5)

    def jac_apply(u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return linear @ v + reaction_slope(u) * v

    def jacobian_matrix(u: np.ndarray) -> sp.csr_matrix:
        return (linear + sp.diags(reaction_slope(u))).tocsr()

    return Problem(
        name="adr_2d",
        rhs=rhs,
        jac_apply=jac_apply,
        initial=256.0 * (x * y * (1 - x) * (1 - y)) ** 2 + 0.3,
        t_span=(0.0, T_END if t_end is None else float(t_end)),
        bc=BoundaryCondition.NEUMANN_HOMOG,
        grid=grid,
        jacobian_matrix=jacobian_matrix,
        parameters={"epsilon": EPSILON, "alpha": ALPHA, "gamma": GAMMA, "n": n_per_side},
    )
