"""One-dimensional semilinear parabolic problem with a nonlocal source.

    U_t - U_xx = int_0^1 U dx + Phi(x, t),  U(0, t) = U(1, t) = 0

with Phi chosen so that U = x(1 - x) e^t solves the equation:

    Phi(x, t) = x(1 - x) e^t + 2 e^t - e^t / 6.

The integral uses the trapezoid rule on the interior nodes (boundary values
vanish). The forcing depends on t, so the state carries a clock entry.
"""

from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from epirk.exceptions import InvalidArgumentError
from epirk.models.problem import BoundaryCondition, Problem
from epirk.problems.grid import DIRICHLET, laplacian, make_grid

T_END = 1.0


def _profile(x: np.ndarray) -> np.ndarray:
    return x * (1.0 - x)


def _exact(coords: Tuple[np.ndarray, ...], t: float) -> np.ndarray:
    return _profile(coords[0]) * np.exp(t)


def semilinear_parabolic_1d(
    n: int, consistent_forcing: bool = False, t_end: Optional[float] = None
) -> Problem:
    """
    Args:
        n: interior grid nodes
        consistent_forcing: build Phi from the discrete operators so the
            sampled exact solution also solves the semi-discrete system
        t_end: end of the integration span (default 1)
    """
    if n < 3:
        raise InvalidArgumentError(f"semilinear_parabolic_1d needs n >= 3, got {n}")
    grid = make_grid(n, ((0.0, 1.0),), DIRICHLET)
    (x,) = grid.coordinates()
    dx = grid.spacing[0]
    L = laplacian(grid, DIRICHLET)
    weights = np.full(n, dx)
    profile = _profile(x)
    if consistent_forcing:
        shape = profile - L @ profile - weights @ profile
    else:
        shape = profile + 2.0 - 1.0 / 6.0

    def forcing(t: float) -> np.ndarray:
        return shape * np.exp(t)

    def rhs(w: np.ndarray) -> np.ndarray:
        u, t = w[:n], w[n]
        return np.append(L @ u + weights @ u + forcing(t), 1.0)

    def jac_apply(w: np.ndarray, z: np.ndarray) -> np.ndarray:
        t = w[n]
        zu, zt = z[:n], z[n]
        return np.append(L @ zu + weights @ zu + forcing(t) * zt, 0.0)

    def jacobian_matrix(w: np.ndarray) -> sp.csr_matrix:
        dense = np.zeros((n + 1, n + 1))
        dense[:n, :n] = L.toarray() + weights[np.newaxis, :]
        dense[:n, n] = forcing(w[n])
        return sp.csr_matrix(dense)

    end = T_END if t_end is None else float(t_end)
    return Problem(
        name="semilinear_parabolic_1d",
        rhs=rhs,
        jac_apply=jac_apply,
        initial=np.append(profile, 0.0),
        t_span=(0.0, end),
        bc=BoundaryCondition.DIRICHLET_HOMOG,
        grid=grid,
        has_clock=True,
        exact_solution=_exact,
        jacobian_matrix=jacobian_matrix,
        parameters={"n": n, "consistent_forcing": consistent_forcing},
    )
