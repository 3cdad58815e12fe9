"""Pydantic schemas package."""

from epirk.schemas.experiment import ExperimentConfig, ExperimentMode, ReferenceKind
from epirk.schemas.report import (
    AdaptiveRow,
    ConditionRow,
    ConditionSummary,
    RunReport,
    StepRecord,
    StrategyRow,
    SweepRow,
    SweepSummary,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentMode",
    "ReferenceKind",
    "AdaptiveRow",
    "ConditionRow",
    "ConditionSummary",
    "RunReport",
    "StepRecord",
    "StrategyRow",
    "SweepRow",
    "SweepSummary",
]
