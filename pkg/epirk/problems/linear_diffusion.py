"""Linear heat equation u_t = d u_xx on (0, 1), homogeneous Dirichlet."""

from typing import Optional, Tuple

import numpy as np

from epirk.exceptions import InvalidArgumentError
from epirk.models.problem import BoundaryCondition, Problem
from epirk.problems.grid import DIRICHLET, laplacian, make_grid

T_END = 0.1
MODES = ((1, 1.0), (3, 0.5))


def linear_diffusion_1d(
    n: int, diffusivity: float = 1.0, t_end: Optional[float] = None
) -> Problem:
    """
    Heat equation whose sine modes are eigenvectors of the discrete Laplacian.

    The exact solution is the semi-discrete one, so errors measure time
    integration only.
    """
    if n < 3:
        raise InvalidArgumentError(f"linear_diffusion_1d needs n >= 3, got {n}")
    grid = make_grid(n, ((0.0, 1.0),), DIRICHLET)
    dx = grid.spacing[0]
    A = (diffusivity * laplacian(grid, DIRICHLET)).tocsr()

    def eigenvalue(k: int) -> float:
        return -4.0 * diffusivity / dx**2 * np.sin(k * np.pi * dx / 2.0) ** 2

    def exact(coords: Tuple[np.ndarray, ...], t: float) -> np.ndarray:
        x = coords[0]
        return sum(c * np.exp(eigenvalue(k) * t) * np.sin(k * np.pi * x) for k, c in MODES)

    return Problem(
        name="linear_diffusion_1d",
        rhs=lambda u: A @ u,
        jac_apply=lambda u, v: A @ v,
        initial=exact(grid.coordinates(), 0.0),
        t_span=(0.0, T_END if t_end is None else float(t_end)),
        bc=BoundaryCondition.DIRICHLET_HOMOG,
        grid=grid,
        exact_solution=exact,
        jacobian_matrix=lambda u: A,
        parameters={"n": n, "diffusivity": diffusivity},
    )
