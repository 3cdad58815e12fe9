"""Two-dimensional Allen-Cahn equation u_t = alpha lap(u) + u - u^3 on [-1, 1]^2."""

import logging
from typing import Optional

import numpy as np
import scipy.sparse as sp

from epirk.exceptions import InvalidArgumentError
from epirk.models.problem import BoundaryCondition, Problem
from epirk.problems.grid import NEUMANN, laplacian, make_grid, neumann_boundary_term

logger = logging.getLogger(__name__)

ALPHA = 0.1
BOUNDS = ((-1.0, 1.0), (-1.0, 1.0))
T_END = 1.0


def _boundary_profile(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return 0.4 + 0.1 * (x + y) + 0.1 * np.sin(1.5 * np.pi * x) * np.sin(2.5 * np.pi * y)


def _profile_dx(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return 0.1 + 0.15 * np.pi * np.cos(1.5 * np.pi * x) * np.sin(2.5 * np.pi * y)


def _profile_dy(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return 0.1 + 0.25 * np.pi * np.sin(1.5 * np.pi * x) * np.cos(2.5 * np.pi * y)


def allen_cahn_2d(
    n_per_side: int, nonhomog: bool = False, t_end: Optional[float] = None
) -> Problem:
    """
    Allen-Cahn on an n x n node grid with mirrored no-flow boundaries.

    Args:
        n_per_side: grid nodes per direction, boundary nodes included
        nonhomog: use the prescribed-gradient Neumann data and matching
            initial state 0.4 + 0.1(x + y) + 0.1 sin(3/2 pi x) sin(5/2 pi y)
        t_end: end of the integration span (default 1)

    Returns:
        Problem with N = n_per_side^2 unknowns
    """
    if n_per_side < 4:
        raise InvalidArgumentError(f"allen_cahn_2d needs n >= 4, got {n_per_side}")
    grid = make_grid(n_per_side, BOUNDS, NEUMANN)
    L = (ALPHA * laplacian(grid, NEUMANN)).tocsr()
    x, y = grid.coordinates()

    if nonhomog:
        boundary = ALPHA * neumann_boundary_term(grid, _profile_dx, _profile_dy)
        initial = _boundary_profile(x, y)
        bc = BoundaryCondition.NEUMANN_NONHOMOG
    else:
        boundary = np.zeros(grid.size)
        initial = 0.1 + 0.1 * np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y)
        bc = BoundaryCondition.NO_FLOW

    def rhs(u: np.ndarray) -> np.ndarray:
        return L @ u + boundary + u - u**3

    def jac_apply(u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return L @ v + (1.0 - 3.0 * u**2) * v

    def jacobian_matrix(u: np.ndarray) -> sp.csr_matrix:
        return (L + sp.diags(1.0 - 3.0 * u**2)).tocsr()

    name = "allen_cahn_2d_nonhomog" if nonhomog else "allen_cahn_2d"
    logger.debug(f"built {name} with {grid.size} unknowns")
    return Problem(
        name=name,
        rhs=rhs,
        jac_apply=jac_apply,
        initial=initial,
        t_span=(0.0, T_END if t_end is None else float(t_end)),
        bc=bc,
        grid=grid,
        jacobian_matrix=jacobian_matrix,
        parameters={"alpha": ALPHA, "n": n_per_side},
    )
