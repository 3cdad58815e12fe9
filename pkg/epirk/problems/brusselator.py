"""Two-dimensional Brusselator on [0, 1]^2.

    u_t = 1 + u^2 v - 4u + alpha lap(u)
    v_t = 3u - u^2 v + alpha lap(v)

State layout is [u (N values), v (N values)].
"""

from typing import Optional

import numpy as np
import scipy.sparse as sp

from epirk.exceptions import InvalidArgumentError
from epirk.models.problem import BoundaryCondition, Problem
from epirk.problems.grid import DIRICHLET, NEUMANN, dirichlet_boundary_term, laplacian, make_grid

ALPHA = 0.02
BOUNDS = ((0.0, 1.0), (0.0, 1.0))
T_END = 1.0
V_BOUNDARY = 3.0


def _u_profile(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return 1.0 + np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)


def brusselator_2d(
    n_per_side: int, nonhomog: bool = False, t_end: Optional[float] = None
) -> Problem:
    """
    Brusselator with homogeneous Neumann or prescribed Dirichlet boundaries.

    The Dirichlet variant lives on interior nodes with boundary and initial
    values u = 1 + sin(2 pi x) sin(2 pi y), v = 3.
    """
    if n_per_side < 4:
        raise InvalidArgumentError(f"brusselator_2d needs n >= 4, got {n_per_side}")
    kind = DIRICHLET if nonhomog else NEUMANN
    grid = make_grid(n_per_side, BOUNDS, kind)
    L = (ALPHA * laplacian(grid, kind)).tocsr()
    m = grid.size
    x, y = grid.coordinates()

    if nonhomog:
        boundary_u = ALPHA * dirichlet_boundary_term(grid, _u_profile)
        boundary_v = ALPHA * dirichlet_boundary_term(
            grid, lambda bx, by: np.full_like(bx, V_BOUNDARY)
        )
        initial = np.concatenate([_u_profile(x, y), np.full(m, V_BOUNDARY)])
        bc = BoundaryCondition.DIRICHLET_NONHOMOG
    else:
        boundary_u = boundary_v = np.zeros(m)
        initial = np.concatenate([2.0 + 0.25 * y, 1.0 + 0.8 * x])
        bc = BoundaryCondition.NEUMANN_HOMOG

    def rhs(w: np.ndarray) -> np.ndarray:
        u, v = w[:m], w[m:]
        uuv = u * u * v
        return np.concatenate(
            [
                1.0 + uuv - 4.0 * u + L @ u + boundary_u,
                3.0 * u - uuv + L @ v + boundary_v,
            ]
        )

    def jac_apply(w: np.ndarray, z: np.ndarray) -> np.ndarray:
        u, v = w[:m], w[m:]
        du, dv = z[:m], z[m:]
        uv2 = 2.0 * u * v
        uu = u * u
        return np.concatenate(
            [
                L @ du + (uv2 - 4.0) * du + uu * dv,
                L @ dv + (3.0 - uv2) * du - uu * dv,
            ]
        )

    def jacobian_matrix(w: np.ndarray) -> sp.csr_matrix:
        u, v = w[:m], w[m:]
        return sp.bmat(
            [
                [L + sp.diags(2.0 * u * v - 4.0), sp.diags(u * u)],
                [sp.diags(3.0 - 2.0 * u * v), L - sp.diags(u * u)],
            ],
            format="csr",
        )

    return Problem(
        name="brusselator_2d_nonhomog" if nonhomog else "brusselator_2d",
        rhs=rhs,
        jac_apply=jac_apply,
        initial=initial,
        t_span=(0.0, T_END if t_end is None else float(t_end)),
        bc=bc,
        grid=grid,
        species=2,
        jacobian_matrix=jacobian_matrix,
        parameters={"alpha": ALPHA, "n": n_per_side},
    )
