"""Run and sweep report schemas."""

from typing import Any, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field


class StepRecord(BaseModel):
    """One attempted time step."""

    t: float
    h: float = Field(..., gt=0)
    accepted: bool = True
    err: Optional[float] = Field(None, ge=0)
    projections: int = Field(0, ge=0)
    matvecs: int = Field(0, ge=0)
    substeps: int = Field(0, ge=0)


class RunReport(BaseModel):
    """Outcome of one integration, serialized alongside sweep CSVs."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    method: str
    strategy: str
    problem: str
    n: int = Field(..., gt=0)
    t_span: Tuple[float, float]
    h: Optional[float] = None
    atol: Optional[float] = None
    rtol: Optional[float] = None
    krylov_tol: float
    expected_projections: Optional[int] = None
    steps: List[StepRecord] = Field(default_factory=list)
    final_error: Optional[float] = None
    total_matvecs: int = 0
    total_projections: int = 0
    accepted_steps: int = 0
    rejected_steps: int = 0
    wall_time_s: float = 0.0
    completed: bool = False
    final_state: Optional[Any] = Field(None, exclude=True)

    def record(self, step: StepRecord) -> None:
        self.steps.append(step)
        self.total_matvecs += step.matvecs
        self.total_projections += step.projections
        if step.accepted:
            self.accepted_steps += 1
        else:
            self.rejected_steps += 1

    @property
    def projection_contract_holds(self) -> bool:
        """Every step performed exactly the planned number of projections."""
        if self.expected_projections is None:
            return True
        return all(s.projections == self.expected_projections for s in self.steps)

    @property
    def projections_per_step(self) -> float:
        return self.total_projections / len(self.steps) if self.steps else 0.0


class ConditionRow(BaseModel):
    """One order-condition residual."""

    label: str
    order: int
    residual: float
    satisfied: bool
    gating: bool = True
    description: str = ""


class ConditionSummary(BaseModel):
    """Order-condition report of one method."""

    method: str
    rule_set: str
    declared_order: int
    certified_order: int
    rows: List[ConditionRow] = Field(default_factory=list)
    violations: List[str] = Field(default_factory=list)
    embedded_certified_order: Optional[int] = None


class SweepRow(BaseModel):
    """One point of a fixed-step convergence sweep."""

    h: float
    error: float
    matvecs: int
    projections: int
    wall_s: float


class AdaptiveRow(BaseModel):
    """One point of a tolerance sweep."""

    tol: float
    error: float
    steps: int
    rejections: int
    matvecs: int
    wall_s: float


class StrategyRow(BaseModel):
    """One strategy of a strategy comparison."""

    strategy: str
    projections_per_step: float
    expected_projections: int
    total_matvecs: int
    wall_s: float
    max_difference: float = 0.0


class SweepSummary(BaseModel):
    """Convergence or tolerance sweep with its fitted slope."""

    method: str
    problem: str
    strategy: str
    slope: Optional[float] = None
    reference: str = "exact"
    rows: List[Any] = Field(default_factory=list)
    control_slope: Optional[float] = None
    estimator_slope: Optional[float] = None
    notes: List[str] = Field(default_factory=list)
