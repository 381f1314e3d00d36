"""Schemas for model files, run configurations and reports."""

from .model_file import DecompositionFile, KrausModelFile, LindbladModelFile, ModelFile
from .report import (
    CheckResult,
    EquilibriumReport,
    EquilibriumSummary,
    Statistic,
    ValidationReport,
    VerificationThresholds,
)
from .run_config import RunConfig

__all__ = [
    "CheckResult",
    "DecompositionFile",
    "EquilibriumReport",
    "EquilibriumSummary",
    "KrausModelFile",
    "LindbladModelFile",
    "ModelFile",
    "RunConfig",
    "Statistic",
    "ValidationReport",
    "VerificationThresholds",
]
