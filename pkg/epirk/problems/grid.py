"""Second-order finite-difference stencils on tensor-product grids.

Neumann grids carry the boundary nodes as unknowns and close the stencil
with a mirrored ghost node; Dirichlet grids hold interior nodes only;
periodic grids use cells x_i = lower + i dx.
"""

from typing import Callable, Tuple

import numpy as np
import scipy.sparse as sp

from epirk.exceptions import InvalidArgumentError
from epirk.models.problem import Grid

NEUMANN = "neumann"
DIRICHLET = "dirichlet"
PERIODIC = "periodic"
_KINDS = (NEUMANN, DIRICHLET, PERIODIC)


def axis(n: int, lower: float, upper: float, kind: str) -> Tuple[np.ndarray, float]:
    """Unknown coordinates and spacing along one direction."""
    if kind not in _KINDS:
        raise InvalidArgumentError(f"unknown grid kind {kind!r}")
    if n < 2:
        raise InvalidArgumentError(f"need at least 2 points per side, got {n}")
    length = upper - lower
    if kind == NEUMANN:
        dx = length / (n - 1)
        return lower + dx * np.arange(n), dx
    if kind == DIRICHLET:
        dx = length / (n + 1)
        return lower + dx * np.arange(1, n + 1), dx
    dx = length / n
    return lower + dx * np.arange(n), dx


def make_grid(n: int, bounds: Tuple[Tuple[float, float], ...], kind: str) -> Grid:
    axes, spacing = [], []
    for lower, upper in bounds:
        points, dx = axis(n, lower, upper, kind)
        axes.append(points)
        spacing.append(dx)
    return Grid(
        axes=tuple(axes),
        spacing=tuple(spacing),
        lower=tuple(b[0] for b in bounds),
        upper=tuple(b[1] for b in bounds),
    )


def laplacian_1d(n: int, dx: float, kind: str) -> sp.csr_matrix:
    """Three-point Laplacian (1/dx^2)[1, -2, 1] with the given closure."""
    main = -2.0 * np.ones(n)
    off = np.ones(n - 1)
    L = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    if kind == NEUMANN:
        L[0, 1] = 2.0
        L[n - 1, n - 2] = 2.0
    elif kind == PERIODIC:
        L[0, n - 1] += 1.0
        L[n - 1, 0] += 1.0
    elif kind != DIRICHLET:
        raise InvalidArgumentError(f"unknown grid kind {kind!r}")
    return (L / dx**2).tocsr()


def gradient_1d(n: int, dx: float, kind: str) -> sp.csr_matrix:
    """Centered first derivative; zero rows at mirrored Neumann boundaries."""
    off = np.ones(n - 1) / (2.0 * dx)
    D = sp.diags([-off, off], [-1, 1], format="lil")
    if kind == NEUMANN:
        D[0, 1] = 0.0
        D[n - 1, n - 2] = 0.0
    elif kind == PERIODIC:
        D[0, n - 1] = -1.0 / (2.0 * dx)
        D[n - 1, 0] = 1.0 / (2.0 * dx)
    return D.tocsr()


def laplacian(grid: Grid, kind: str) -> sp.csr_matrix:
    """Laplacian on a 1D or 2D grid (x fastest)."""
    if grid.dim == 1:
        return laplacian_1d(grid.shape[0], grid.spacing[0], kind)
    nx, ny = grid.shape
    Lx = laplacian_1d(nx, grid.spacing[0], kind)
    Ly = laplacian_1d(ny, grid.spacing[1], kind)
    return (sp.kron(sp.identity(ny), Lx) + sp.kron(Ly, sp.identity(nx))).tocsr()


def gradient_sum(grid: Grid, kind: str) -> sp.csr_matrix:
    """Discrete u_x + u_y on a 2D grid."""
    nx, ny = grid.shape
    Dx = gradient_1d(nx, grid.spacing[0], kind)
    Dy = gradient_1d(ny, grid.spacing[1], kind)
    return (sp.kron(sp.identity(ny), Dx) + sp.kron(Dy, sp.identity(nx))).tocsr()


def neumann_boundary_term(
    grid: Grid,
    grad_x: Callable[[np.ndarray, np.ndarray], np.ndarray],
    grad_y: Callable[[np.ndarray, np.ndarray], np.ndarray],
) -> np.ndarray:
    """
    Affine contribution of prescribed boundary gradients to the Laplacian.

    The mirrored ghost node u_{-1} = u_1 - 2 dx u_x(lower) adds
    -2 u_x(lower) / dx on the first row and +2 u_x(upper) / dx on the last.
    """
    x, y = grid.axes
    dx, dy = grid.spacing
    term = np.zeros((len(y), len(x)))
    term[:, 0] -= 2.0 * grad_x(np.full_like(y, x[0]), y) / dx
    term[:, -1] += 2.0 * grad_x(np.full_like(y, x[-1]), y) / dx
    term[0, :] -= 2.0 * grad_y(x, np.full_like(x, y[0])) / dy
    term[-1, :] += 2.0 * grad_y(x, np.full_like(x, y[-1])) / dy
    return term.ravel()


def dirichlet_boundary_term(
    grid: Grid, value: Callable[[np.ndarray, np.ndarray], np.ndarray]
) -> np.ndarray:
    """Affine contribution of prescribed boundary values to a 2D Dirichlet Laplacian."""
    x, y = grid.axes
    dx, dy = grid.spacing
    x0, y0 = grid.lower
    x1, y1 = grid.upper
    term = np.zeros((len(y), len(x)))
    term[:, 0] += value(np.full_like(y, x0), y) / dx**2
    term[:, -1] += value(np.full_like(y, x1), y) / dx**2
    term[0, :] += value(x, np.full_like(x, y0)) / dy**2
    term[-1, :] += value(x, np.full_like(x, y1)) / dy**2
    return term.ravel()
