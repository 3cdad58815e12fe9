"""One-dimensional degenerate nonlinear diffusion.

    u_t = (u u_x)_x + u (1 - u),  x in (-23, 50),  u(-23) = 1, u(50) = 0

The flux uses the face-averaged diffusivity (u_i + u_{i+1}) / 2, which
makes the discrete operator (1/2) lap(u^2) with boundary values of u^2.
"""

from typing import Optional

import numpy as np
import scipy.sparse as sp

from epirk.exceptions import InvalidArgumentError
from epirk.models.problem import BoundaryCondition, Problem
from epirk.problems.grid import DIRICHLET, laplacian, make_grid

LEFT, RIGHT = -23.0, 50.0
U_LEFT, U_RIGHT = 1.0, 0.0
DECAY = 1.3
T_END = 50.0


def degenerate_diffusion_1d(n: int, t_end: Optional[float] = None) -> Problem:
    """Front propagation into u = 0 with Dirichlet data u(-23) = 1, u(50) = 0."""
    if n < 3:
        raise InvalidArgumentError(f"degenerate_diffusion_1d needs n >= 3, got {n}")
    grid = make_grid(n, ((LEFT, RIGHT),), DIRICHLET)
    (x,) = grid.coordinates()
    dx = grid.spacing[0]
    L = laplacian(grid, DIRICHLET)
    boundary = np.zeros(n)
    boundary[0] = 0.5 * U_LEFT**2 / dx**2
    boundary[-1] = 0.5 * U_RIGHT**2 / dx**2

    def rhs(u: np.ndarray) -> np.ndarray:
        return 0.5 * (L @ (u * u)) + boundary + u * (1.0 - u)

    def jac_apply(u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return L @ (u * v) + (1.0 - 2.0 * u) * v

    def jacobian_matrix(u: np.ndarray) -> sp.csr_matrix:
        return (L @ sp.diags(u) + sp.diags(1.0 - 2.0 * u)).tocsr()

    initial = np.where(x < 0.0, 1.0, np.exp(-DECAY * np.maximum(x, 0.0)))
    return Problem(
        name="degenerate_diffusion_1d",
        rhs=rhs,
        jac_apply=jac_apply,
        initial=initial,
        t_span=(0.0, T_END if t_end is None else float(t_end)),
        bc=BoundaryCondition.DIRICHLET_NONHOMOG,
        grid=grid,
        jacobian_matrix=jacobian_matrix,
        parameters={"n": n, "u_left": U_LEFT, "u_right": U_RIGHT},
    )
