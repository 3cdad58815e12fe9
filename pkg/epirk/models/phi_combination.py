"""Formal linear combinations of phi functions with exact rational coefficients."""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from epirk.core.phi import PhiValueTable, phi_dense, phi_scalar
from epirk.exceptions import InvalidArgumentError

Number = Union[int, Fraction, str]
TableProvider = Callable[[Fraction, int], PhiValueTable]


def as_fraction(value: Union[Number, float]) -> Fraction:
    """Convert ints, strings like '32065/13122' and floats to an exact Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(str(value))
    try:
        return Fraction(value)
    except (ValueError, ZeroDivisionError) as exc:
        raise InvalidArgumentError(f"not a rational number: {value!r}") from exc


def dense_table_provider(Z: np.ndarray) -> TableProvider:
    """Memoized phi_dense(k, g Z) keyed by scale."""
    cache: Dict[Fraction, PhiValueTable] = {}

    def provide(scale: Fraction, k_max: int) -> PhiValueTable:
        table = cache.get(scale)
        if table is None or table.max_index < k_max:
            table = phi_dense(k_max, float(scale) * Z)
            cache[scale] = table
        return table

    return provide


@dataclass(frozen=True)
class PhiCombination:
    """z -> sum_k c_k phi_k(g z), one scale g."""

    terms: Tuple[Tuple[int, Fraction], ...]
    scale: Fraction = Fraction(1)

    def __post_init__(self) -> None:
        indices = [k for k, _ in self.terms]
        if len(set(indices)) != len(indices):
            raise InvalidArgumentError(f"phi indices must be distinct, got {indices}")
        if any(k < 0 for k in indices):
            raise InvalidArgumentError(f"phi indices must be non-negative, got {indices}")
        if self.scale <= 0:
            raise InvalidArgumentError(f"phi combination scale must be positive, got {self.scale}")

    @classmethod
    def of(cls, coefficients: Mapping[int, Number], scale: Number = 1) -> "PhiCombination":
        """Build from {k: c_k}, dropping zero coefficients."""
        terms = tuple(
            sorted((int(k), as_fraction(c)) for k, c in coefficients.items() if as_fraction(c) != 0)
        )
        return cls(terms=terms, scale=as_fraction(scale))

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def orders(self) -> Tuple[int, ...]:
        return tuple(k for k, _ in self.terms)

    @property
    def max_order(self) -> int:
        return max(self.orders, default=0)

    @property
    def min_order(self) -> int:
        return min(self.orders, default=0)

    def coefficient(self, k: int) -> Fraction:
        for j, c in self.terms:
            if j == k:
                return c
        return Fraction(0)

    def as_dict(self) -> Dict[int, Fraction]:
        return dict(self.terms)

    def scaled(self, factor: Number) -> "PhiCombination":
        f = as_fraction(factor)
        return PhiCombination.of({k: c * f for k, c in self.terms}, self.scale)

    def at_zero(self) -> Fraction:
        """Value at z = 0: sum_k c_k / k!."""
        return sum((c * Fraction(1, math.factorial(k)) for k, c in self.terms), Fraction(0))

    def evaluate_scalar(self, z: complex) -> complex:
        g = float(self.scale)
        return sum(float(c) * phi_scalar(k, g * z) for k, c in self.terms)

    def evaluate_matrix(
        self, Z: np.ndarray, tables: Optional[TableProvider] = None
    ) -> np.ndarray:
        """Sum_k c_k phi_k(g Z) for a small dense matrix."""
        Z = np.atleast_2d(np.asarray(Z))
        result = np.zeros(Z.shape, dtype=np.result_type(Z.dtype, np.float64))
        if self.is_zero:
            return result
        provider = tables or dense_table_provider(Z)
        table = provider(self.scale, self.max_order)
        for k, c in self.terms:
            result = result + float(c) * table[k]
        return result

    def __str__(self) -> str:
        if self.is_zero:
            return "0"
        parts = []
        for k, c in self.terms:
            sign = "-" if c < 0 else "+"
            parts.append(f"{sign} {abs(c)}*phi_{k}")
        text = " ".join(parts)
        text = text[2:] if text.startswith("+ ") else "-" + text[2:]
        return f"{text} @ {self.scale}"


@dataclass(frozen=True)
class PhiSum:
    """Sum of phi combinations at distinct scales; the general coefficient function."""

    parts: Tuple[PhiCombination, ...] = ()

    @classmethod
    def zero(cls) -> "PhiSum":
        return cls(())

    @classmethod
    def of(cls, *combinations: PhiCombination) -> "PhiSum":
        """Merge combinations, adding terms that share a scale."""
        merged: Dict[Fraction, Dict[int, Fraction]] = {}
        for combo in combinations:
            bucket = merged.setdefault(combo.scale, {})
            for k, c in combo.terms:
                bucket[k] = bucket.get(k, Fraction(0)) + c
        parts = []
        for scale in sorted(merged):
            combo = PhiCombination.of(merged[scale], scale)
            if not combo.is_zero:
                parts.append(combo)
        return cls(tuple(parts))

    @classmethod
    def single(cls, coefficients: Mapping[int, Number], scale: Number = 1) -> "PhiSum":
        return cls.of(PhiCombination.of(coefficients, scale))

    @property
    def is_zero(self) -> bool:
        return not self.parts

    @property
    def scales(self) -> Tuple[Fraction, ...]:
        return tuple(p.scale for p in self.parts)

    @property
    def single_scale(self) -> Optional[Fraction]:
        """The common scale if there is exactly one, else None."""
        return self.parts[0].scale if len(self.parts) == 1 else None

    @property
    def max_order(self) -> int:
        return max((p.max_order for p in self.parts), default=0)

    @property
    def min_order(self) -> int:
        return min((p.min_order for p in self.parts), default=0)

    def part(self, scale: Number) -> PhiCombination:
        s = as_fraction(scale)
        for p in self.parts:
            if p.scale == s:
                return p
        return PhiCombination((), s)

    def __add__(self, other: "PhiSum") -> "PhiSum":
        return PhiSum.of(*self.parts, *other.parts)

    def __neg__(self) -> "PhiSum":
        return self * -1

    def __sub__(self, other: "PhiSum") -> "PhiSum":
        return self + (-other)

    def __mul__(self, factor: Number) -> "PhiSum":
        return PhiSum.of(*(p.scaled(factor) for p in self.parts))

    __rmul__ = __mul__

    def at_zero(self) -> Fraction:
        return sum((p.at_zero() for p in self.parts), Fraction(0))

    def evaluate_scalar(self, z: complex) -> complex:
        return sum(p.evaluate_scalar(z) for p in self.parts)

    def evaluate_matrix(
        self, Z: np.ndarray, tables: Optional[TableProvider] = None
    ) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z))
        provider = tables or dense_table_provider(Z)
        result = np.zeros(Z.shape, dtype=np.result_type(Z.dtype, np.float64))
        for p in self.parts:
            result = result + p.evaluate_matrix(Z, provider)
        return result

    def __str__(self) -> str:
        if self.is_zero:
            return "0"
        return " + ".join(f"({p})" for p in self.parts)
