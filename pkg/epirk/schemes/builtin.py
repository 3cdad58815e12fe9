"""Built-in stiffly accurate three-stage schemes.

Coefficients are exact rationals. Every scheme is stored in residual form
with alpha_i1 = g_i1, so psi_i1 carries the remaining factor.
"""

from fractions import Fraction as F
from typing import Dict, List

from epirk.exceptions import InvalidArgumentError, NotAvailableError
from epirk.models.method import MethodDefinition, MethodForm, Strategy
from epirk.models.phi_combination import PhiCombination, PhiSum


__all__ = [
    "BUILTIN_NAMES",
    "builtin",
    "embedded_estimator",
    "epirk4s3a",
    "epirk4s3b",
    "epirk5s3",
    "exprb53s3",
]

PHI1 = PhiSum.single({1: 1})


def _final(b2: PhiSum, b3: PhiSum) -> Dict:
    return {(4, 1): PHI1, (4, 2): b2, (4, 3): b3}


epirk4s3a = MethodDefinition(
    name="EPIRK4s3A",
    stages=3,
    alpha={(2, 1): F(1, 2), (3, 1): F(2, 3)},
    beta={1: F(1), 2: F(1), 3: F(1)},
    psi={
        (2, 1): PhiSum.single({1: 1}, F(1, 2)),
        (3, 1): PhiSum.single({1: 1}, F(2, 3)),
        **_final(
            PhiSum.single({3: 32, 4: -144}),
            PhiSum.single({3: F(-27, 2), 4: 81}),
        ),
    },
    form=MethodForm.RESIDUAL,
    stiff_order=4,
    strategy_hint=Strategy.MIXED,
    embedded={1: PHI1, 2: PhiSum.single({3: 8})},
    embedded_order=3,
    description="fourth-order, phi_1 internal stages; two projections in mixed form",
)

epirk4s3b = MethodDefinition(
    name="EPIRK4s3B",
    stages=3,
    alpha={(2, 1): F(1, 2), (3, 1): F(3, 4)},
    beta={1: F(1), 2: F(1), 3: F(1)},
    psi={
        (2, 1): PhiSum.single({2: F(4, 3)}, F(1, 2)),
        (3, 1): PhiSum.single({2: F(4, 3)}, F(3, 4)),
        **_final(
            PhiSum.single({3: 54, 4: -324}),
            PhiSum.single({3: -16, 4: 144}),
        ),
    },
    form=MethodForm.RESIDUAL,
    stiff_order=4,
    strategy_hint=Strategy.MIXED,
    description="fourth-order, phi_2 internal stages (not of exponential Rosenbrock type)",
)

# The b_3 phi_4 weight -120285/1696 is the value for which C1 holds exactly.
epirk5s3 = MethodDefinition(
    name="EPIRK5s3",
    stages=3,
    alpha={(2, 1): F(48, 55), (3, 1): F(4, 9), (3, 2): F(1)},
    beta={1: F(1), 2: F(1), 3: F(1)},
    psi={
        (2, 1): PhiSum.single({2: 6, 3: -12}, F(48, 55)),
        (3, 1): PhiSum.single({1: F(53, 5), 2: F(-288, 5), 3: F(576, 5)}, F(4, 9)),
        (3, 2): PhiSum.single({3: F(32065, 13122)}, F(4, 9)),
        **_final(
            PhiSum.single({3: F(-166375, 61056), 4: F(499125, 27136)}),
            PhiSum.single({3: F(2187, 106), 4: F(-120285, 1696)}),
        ),
    },
    form=MethodForm.RESIDUAL,
    stiff_order=5,
    strategy_hint=Strategy.HORIZONTAL,
    description="fifth-order, one common scale per stage for horizontal evaluation",
)

exprb53s3 = MethodDefinition(
    name="EXPRB53s3",
    stages=3,
    alpha={(2, 1): F(1, 2), (3, 1): F(9, 10), (3, 2): F(1)},
    beta={1: F(1), 2: F(1), 3: F(1)},
    psi={
        (2, 1): PhiSum.single({1: 1}, F(1, 2)),
        (3, 1): PhiSum.single({1: 1}, F(9, 10)),
        (3, 2): PhiSum.of(
            PhiCombination.of({3: F(27, 25)}, F(1, 2)),
            PhiCombination.of({3: F(729, 125)}, F(9, 10)),
        ),
        **_final(
            PhiSum.single({3: 18, 4: -60}),
            PhiSum.single({3: F(-250, 81), 4: F(500, 27)}),
        ),
    },
    form=MethodForm.RESIDUAL,
    stiff_order=5,
    strategy_hint=Strategy.MIXED,
    description="fifth-order exponential Rosenbrock scheme",
)

_REGISTRY: Dict[str, MethodDefinition] = {
    m.name: m for m in (epirk4s3a, epirk4s3b, epirk5s3, exprb53s3)
}
BUILTIN_NAMES: List[str] = list(_REGISTRY)


def builtin(name: str) -> MethodDefinition:
    """
    Look up a built-in scheme by name (case-insensitive).

    Raises:
        InvalidArgumentError: If the name is unknown
    """
    for key, method in _REGISTRY.items():
        if key.lower() == name.lower():
            return method
    raise InvalidArgumentError(f"Unknown method {name!r}; choose from {', '.join(BUILTIN_NAMES)}")


def embedded_estimator(name: str) -> Dict[int, PhiSum]:
    """
    Embedded lower-order final stage of a built-in scheme, keyed by column.

    Column 1 multiplies h f(u_n); column j >= 2 multiplies h r(U_j).

    Raises:
        NotAvailableError: If the scheme has no embedded estimator
    """
    method = builtin(name)
    if method.embedded is None:
        raise NotAvailableError(f"{method.name} has no embedded estimator")
    return dict(method.embedded)
