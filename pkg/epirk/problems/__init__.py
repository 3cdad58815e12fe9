"""Method-of-lines test problems, looked up by name."""

from functools import partial
from typing import Any, Callable, Dict, List, Optional

from epirk.exceptions import InvalidArgumentError
from epirk.models.problem import Problem
from epirk.problems.adr import adr_2d
from epirk.problems.allen_cahn import allen_cahn_2d
from epirk.problems.brusselator import brusselator_2d
from epirk.problems.degenerate_diffusion import degenerate_diffusion_1d
from epirk.problems.gray_scott import gray_scott_2d
from epirk.problems.linear_diffusion import linear_diffusion_1d
from epirk.problems.semilinear_parabolic import semilinear_parabolic_1d

__all__ = [
    "PROBLEMS",
    "adr_2d",
    "allen_cahn_2d",
    "brusselator_2d",
    "degenerate_diffusion_1d",
    "get_problem",
    "gray_scott_2d",
    "linear_diffusion_1d",
    "problem_names",
    "semilinear_parabolic_1d",
]

ProblemFactory = Callable[..., Problem]

PROBLEMS: Dict[str, ProblemFactory] = {
    "allen_cahn_2d": allen_cahn_2d,
    "allen_cahn_2d_nonhomog": partial(allen_cahn_2d, nonhomog=True),
    "adr_2d": adr_2d,
    "brusselator_2d": brusselator_2d,
    "brusselator_2d_nonhomog": partial(brusselator_2d, nonhomog=True),
    "gray_scott_2d": gray_scott_2d,
    "semilinear_parabolic_1d": semilinear_parabolic_1d,
    "degenerate_diffusion_1d": degenerate_diffusion_1d,
    "linear_diffusion_1d": linear_diffusion_1d,
}

# Homogeneous counterparts used as order-reduction controls
HOMOGENEOUS_CONTROL: Dict[str, str] = {
    "allen_cahn_2d_nonhomog": "allen_cahn_2d",
    "brusselator_2d_nonhomog": "brusselator_2d",
}


def problem_names() -> List[str]:
    return list(PROBLEMS)


def get_problem(name: str, n: int, t_end: Optional[float] = None, **options: Any) -> Problem:
    """
    Build a registered problem.

    Args:
        name: registry key
        n: grid points per side (2D) or interior nodes (1D)
        t_end: optional end time replacing the problem default
        options: extra keyword arguments for the factory

    Raises:
        InvalidArgumentError: If the name is unknown
    """
    factory = PROBLEMS.get(name)
    if factory is None:
        raise InvalidArgumentError(
            f"Unknown problem {name!r}; choose from {', '.join(PROBLEMS)}"
        )
    try:
        return factory(n, t_end=t_end, **options)
    except TypeError as exc:
        raise InvalidArgumentError(f"bad options for {name}: {exc}") from exc
