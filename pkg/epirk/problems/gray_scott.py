"""Two-dimensional Gray-Scott system with periodic boundaries on [0, 1]^2."""

from typing import Optional

import numpy as np
import scipy.sparse as sp

from epirk.exceptions import InvalidArgumentError
from epirk.models.problem import BoundaryCondition, Problem
from epirk.problems.grid import PERIODIC, laplacian, make_grid

D_U = 0.2
D_V = 0.1
FEED = 0.04
KILL = 0.06
BOUNDS = ((0.0, 1.0), (0.0, 1.0))
# Default span end; factories take t_end to override
T_END = 1.0


def gray_scott_2d(n_per_side: int, t_end: Optional[float] = None) -> Problem:
    """
    u_t = d_u lap(u) - u v^2 + a(1 - u), v_t = d_v lap(v) + u v^2 - (a + b) v.

    State layout is [u, v] on the periodic cell grid x_i = i / n.
    """
    if n_per_side < 4:
        raise InvalidArgumentError(f"gray_scott_2d needs n >= 4, got {n_per_side}")
    grid = make_grid(n_per_side, BOUNDS, PERIODIC)
    L = laplacian(grid, PERIODIC)
    Lu, Lv = (D_U * L).tocsr(), (D_V * L).tocsr()
    m = grid.size
    x, y = grid.coordinates()
    u0 = 1.0 - np.exp(-150.0 * ((x - 0.5) ** 2 + (y - 0.5) ** 2))
    v0 = np.exp(-150.0 * ((x - 0.5) ** 2 + 2.0 * (y - 0.5) ** 2))

    def rhs(w: np.ndarray) -> np.ndarray:
        u, v = w[:m], w[m:]
        uvv = u * v * v
        return np.concatenate(
            [
                Lu @ u - uvv + FEED * (1.0 - u),
                Lv @ v + uvv - (FEED + KILL) * v,
            ]
        )

    def jac_apply(w: np.ndarray, z: np.ndarray) -> np.ndarray:
        u, v = w[:m], w[m:]
        du, dv = z[:m], z[m:]
        vv, uv2 = v * v, 2.0 * u * v
        return np.concatenate(
            [
                Lu @ du - (vv + FEED) * du - uv2 * dv,
                Lv @ dv + vv * du + (uv2 - FEED - KILL) * dv,
            ]
        )

    def jacobian_matrix(w: np.ndarray) -> sp.csr_matrix:
        u, v = w[:m], w[m:]
        return sp.bmat(
            [
                [Lu - sp.diags(v * v + FEED), sp.diags(-2.0 * u * v)],
                [sp.diags(v * v), Lv + sp.diags(2.0 * u * v - FEED - KILL)],
            ],
            format="csr",
        )

    return Problem(
        name="gray_scott_2d",
        rhs=rhs,
        jac_apply=jac_apply,
        initial=np.concatenate([u0, v0]),
        t_span=(0.0, T_END if t_end is None else float(t_end)),
        bc=BoundaryCondition.PERIODIC,
        grid=grid,
        species=2,
        jacobian_matrix=jacobian_matrix,
        parameters={"d_u": D_U, "d_v": D_V, "a": FEED, "b": KILL, "n": n_per_side},
    )
