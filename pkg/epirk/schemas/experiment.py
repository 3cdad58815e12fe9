"""Experiment configuration schema."""

from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, Field, field_validator, model_validator

from epirk.models.method import Strategy


class ExperimentMode(str, Enum):
    """What an experiment run produces."""

    FIXED_SWEEP = "fixed_sweep"
    ADAPTIVE_SWEEP = "adaptive_sweep"
    SINGLE_RUN = "single_run"
    CHECK_ORDER = "check_order"
    STRATEGY_COMPARE = "strategy_compare"
    ORDER_REDUCTION = "order_reduction"


class ReferenceKind(str, Enum):
    """How sweep errors are measured."""

    AUTO = "auto"
    EXACT = "exact"
    SELF = "self"


class ExperimentConfig(BaseModel):
    """Everything needed to reproduce one experiment."""

    problem: str = "allen_cahn_2d"
    n: int = Field(32, gt=0)
    problem_options: Dict[str, Any] = Field(default_factory=dict)
    method: str = "EPIRK4s3A"
    tableau_file: Optional[str] = None
    strategy: Optional[Strategy] = None
    mode: ExperimentMode = ExperimentMode.SINGLE_RUN
    h_list: List[float] = Field(default_factory=list)
    tol_list: List[float] = Field(default_factory=list)
    krylov_tol: float = Field(1e-12, gt=0)
    t_end: Optional[float] = Field(None, gt=0)
    reference: ReferenceKind = ReferenceKind.AUTO
    h_ref: Optional[float] = Field(None, gt=0)
    jacobian: str = Field("analytic", pattern="^(analytic|fd)$")
    row_evaluation: str = Field("combination", pattern="^(combination|rewrite)$")
    out: Optional[str] = None
    report_json: Optional[str] = None
    seed: int = 0

    @field_validator("h_list", "tol_list")
    @classmethod
    def strictly_decreasing(cls, v: List[float]) -> List[float]:
        """Sweep values must be positive and strictly decreasing."""
        if any(x <= 0 for x in v):
            raise ValueError("values must be positive")
        if any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("values must be strictly decreasing")
        return v

    @model_validator(mode="after")
    def mode_requirements(self) -> "ExperimentConfig":
        """Each mode needs its own sweep list."""
        needs_h = {
            ExperimentMode.FIXED_SWEEP,
            ExperimentMode.STRATEGY_COMPARE,
            ExperimentMode.ORDER_REDUCTION,
        }
        if self.mode in needs_h and not self.h_list:
            raise ValueError(f"mode {self.mode.value} requires h_list")
        if self.mode == ExperimentMode.ADAPTIVE_SWEEP and not self.tol_list:
            raise ValueError("mode adaptive_sweep requires tol_list")
        if self.mode == ExperimentMode.SINGLE_RUN and not (self.h_list or self.tol_list):
            raise ValueError("mode single_run requires h_list or tol_list")
        return self

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentConfig":
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))
