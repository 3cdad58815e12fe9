"""Scalar and small dense-matrix phi-function kernels.

phi_0(z) = exp(z) and phi_{k+1}(z) = (phi_k(z) - 1/k!) / z, so phi_k(0) = 1/k!.
Dense evaluation embeds M in a block upper-triangular matrix whose exponential
carries every phi_k(M) in its first block row.
"""

import cmath
import math
from dataclasses import dataclass, field
from typing import Dict, Union

import numpy as np

from epirk.exceptions import InvalidArgumentError, NumericFailureError


Scalar = Union[float, complex]

MAX_PHI_INDEX = 12
MAX_DENSE_DIM = 256

# Scalar series switch
SMALL_ARG = 0.1
SMALL_ARG_TERMS = 20
SERIES_MAX_TERMS = 200

# Matrix exponential: Taylor on a matrix of 1-norm <= SCALING_TARGET, then squaring
SCALING_TARGET = 0.5
MAX_SQUARINGS = 40
TAYLOR_TERMS = 18


def inverse_factorial(k: int) -> float:
    """1/k! with the convention 1/k! = 0 for negative k."""
    if k < 0:
        return 0.0
    return 1.0 / math.factorial(k)


def _check_index(k: int) -> None:
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool):
        raise InvalidArgumentError(f"phi index must be an integer, got {k!r}")
    if k < 0 or k > MAX_PHI_INDEX:
        raise InvalidArgumentError(f"phi index {k} outside supported range 0..{MAX_PHI_INDEX}")


def _series(k: int, z: Scalar, max_terms: int) -> Scalar:
    """Taylor series sum_j z^j / (j+k)!, stopped once terms stop contributing."""
    term: Scalar = inverse_factorial(k)
    total: Scalar = term
    for j in range(1, max_terms):
        term = term * z / (j + k)
        total += term
        if abs(term) <= 1e-17 * abs(total):
            break
    return total


def phi_scalar(k: int, z: Scalar) -> Scalar:
    """
    Evaluate phi_k at a real or complex scalar.

    Args:
        k: phi index, 0 <= k <= 12
        z: argument

    Returns:
        phi_k(z), real for real input

    Raises:
        InvalidArgumentError: If k is out of range
    """
    _check_index(k)
    is_complex = isinstance(z, complex) or np.iscomplexobj(z)
    z = complex(z) if is_complex else float(z)
    if k == 0:
        return cmath.exp(z) if is_complex else math.exp(z)

    radius = abs(z)
    if radius < SMALL_ARG:
        return _series(k, z, SMALL_ARG_TERMS)
    if radius < k:
        # terms decrease monotonically here, no cancellation
        return _series(k, z, SERIES_MAX_TERMS)

    value: Scalar = cmath.exp(z) if is_complex else math.exp(z)
    for j in range(k):
        value = (value - inverse_factorial(j)) / z
    return value


@dataclass(frozen=True)
class PhiValueTable:
    """phi_0(M) .. phi_{max_index}(M) for one small dense matrix."""

    max_index: int
    matrix: np.ndarray
    values: Dict[int, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, k: int) -> np.ndarray:
        try:
            return self.values[k]
        except KeyError:
            raise InvalidArgumentError(
                f"phi_{k} not present in table (max_index={self.max_index})"
            ) from None

    def __contains__(self, k: object) -> bool:
        return k in self.values


def expm_taylor(W: np.ndarray) -> np.ndarray:
    """
    Matrix exponential by truncated Taylor series with scaling and squaring.

    Args:
        W: square matrix

    Returns:
        exp(W)

    Raises:
        NumericFailureError: If W is too large to scale below the target norm
            within the squaring cap, or the result is not finite
    """
    norm = float(np.linalg.norm(W, 1)) if W.size else 0.0
    if not math.isfinite(norm):
        raise NumericFailureError("matrix exponential of non-finite matrix", norm=norm)
    squarings = 0
    if norm > SCALING_TARGET:
        squarings = int(math.ceil(math.log2(norm / SCALING_TARGET)))
    if squarings > MAX_SQUARINGS:
        raise NumericFailureError(
            f"matrix exponential overflow: norm {norm:.3e} needs {squarings} squarings",
            norm=norm,
        )

    X = W / (2.0**squarings)
    n = W.shape[0]
    result = np.eye(n, dtype=X.dtype)
    term = np.eye(n, dtype=X.dtype)
    for j in range(1, TAYLOR_TERMS + 1):
        term = term @ X / j
        result = result + term
    for _ in range(squarings):
        result = result @ result

    if not np.all(np.isfinite(result)):
        raise NumericFailureError(
            f"matrix exponential overflow after {squarings} squarings", norm=norm
        )
    return result


def _as_square(M: np.ndarray) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidArgumentError(f"matrix must be square, got shape {M.shape}")
    if M.shape[0] > MAX_DENSE_DIM:
        raise InvalidArgumentError(
            f"dense phi evaluation limited to dimension {MAX_DENSE_DIM}, got {M.shape[0]}"
        )
    if not np.iscomplexobj(M):
        M = M.astype(float)
    return M


def phi_dense(k_max: int, M: np.ndarray) -> PhiValueTable:
    """
    Compute phi_0(M) .. phi_{k_max}(M) with one exponential of an augmented matrix.

    The augmented matrix is

        [[M, I, 0, ..., 0],
         [0, 0, I, ..., 0],
         ...
         [0, 0, 0, ..., 0]]

    and block (0, k) of its exponential is phi_k(M).

    Args:
        k_max: highest phi index
        M: small dense square matrix

    Returns:
        PhiValueTable holding entries 0..k_max

    Raises:
        InvalidArgumentError: If M is not square or k_max is out of range
        NumericFailureError: On exponential overflow
    """
    _check_index(k_max)
    M = _as_square(M)
    n = M.shape[0]
    size = n * (k_max + 1)
    W = np.zeros((size, size), dtype=M.dtype)
    W[:n, :n] = M
    for k in range(k_max):
        W[k * n : (k + 1) * n, (k + 1) * n : (k + 2) * n] = np.eye(n)

    E = expm_taylor(W)
    values = {k: E[:n, k * n : (k + 1) * n].copy() for k in range(k_max + 1)}
    return PhiValueTable(max_index=k_max, matrix=M, values=values)


def phi_downshift(table: PhiValueTable, k: int, M: np.ndarray) -> np.ndarray:
    """
    Lower one phi order with phi_k(M) = M phi_{k+1}(M) + I/k!.

    Negative k is allowed (1/k! = 0 there), giving phi_{-d}(M) = M^d exp(M);
    the Krylov module uses this for time derivatives of projected solutions.

    Args:
        table: table containing entry k + 1
        k: target index
        M: the matrix the table was built from

    Returns:
        phi_k(M)

    Raises:
        InvalidArgumentError: If entry k + 1 is missing
    """
    if (k + 1) not in table:
        raise InvalidArgumentError(f"phi_downshift to {k} needs phi_{k + 1} in the table")
    M = np.atleast_2d(np.asarray(M))
    upper = table[k + 1]
    return M @ upper + inverse_factorial(k) * np.eye(M.shape[0], dtype=upper.dtype)


def extend_downward(table: PhiValueTable, lowest: int, M: np.ndarray) -> PhiValueTable:
    """Return a copy of ``table`` with entries lowest..max_index filled by downshifting."""
    values = dict(table.values)
    current = PhiValueTable(max_index=table.max_index, matrix=table.matrix, values=values)
    start = min(values) - 1
    for k in range(start, lowest - 1, -1):
        values[k] = phi_downshift(current, k, M)
    return current
