"""Verification thresholds and report models."""

from typing import List, Optional

from pydantic import BaseModel, Field, field_validator


class VerificationThresholds(BaseModel):
    """Acceptance thresholds applied by ergodic_report."""

    distance_tolerance: float = Field(0.05, gt=0, description="Max trace distance of time average to Theta_inf")
    min_fraction: float = Field(0.95, ge=0, le=1, description="Fraction of paths that must meet a per-path tolerance")
    z_max: float = Field(3.0, gt=0, description="Max |mean| / standard error for zero-mean tests")
    residual_tolerance: float = Field(0.05, gt=0, description="Max norm of the averaged generator residual")
    checkpoint_times: List[float] = Field(default=[1.0, 5.0], description="Times (steps for chains) of martingale tests")
    profile_times: List[float] = Field(default_factory=list, description="Horizons of the convergence profile")
    zero_se_tolerance: float = Field(1e-6, gt=0, description="|mean| below which a zero-mean test passes outright")

    @field_validator("checkpoint_times", "profile_times")
    @classmethod
    def validate_times(cls, v: List[float]) -> List[float]:
        """Times must be positive and are kept sorted."""
        if any(t <= 0 for t in v):
            raise ValueError("Times must be positive")
        return sorted(v)


class Statistic(BaseModel):
    """One reported statistic; ``passed`` is None for informational entries."""

    name: str
    value: Optional[float]
    standard_error: Optional[float] = None
    threshold: Optional[float] = None
    passed: Optional[bool] = None
    samples: int = 0


class EquilibriumReport(BaseModel):
    """Ensemble statistics for the pathwise ergodic theorem."""

    unraveling: str
    trajectories: int
    horizon: float
    projector_method: str
    spectral_gap: Optional[float] = None
    unique_equilibrium: bool
    statistics: List[Statistic] = Field(default_factory=list)
    passed: bool = True

    def statistic(self, name: str) -> Statistic:
        """Look up a statistic by name."""
        for entry in self.statistics:
            if entry.name == name:
                return entry
        raise KeyError(name)

    def failures(self) -> List[Statistic]:
        """Statistics that failed their threshold."""
        return [entry for entry in self.statistics if entry.passed is False]


class CheckResult(BaseModel):
    """One structural check of the validate command."""

    name: str
    passed: bool
    deviation: Optional[float] = None
    tolerance: Optional[float] = None


class ValidationReport(BaseModel):
    """Output of the validate command."""

    model_path: str
    model_kind: str
    passed: bool
    checks: List[CheckResult] = Field(default_factory=list)
    error: Optional[str] = None


class EquilibriumSummary(BaseModel):
    """Output of the equilibria command."""

    model_kind: str
    unique: bool
    dimension: int
    states: List[List[List[List[float]]]] = Field(default_factory=list, description="[re, im] pair matrices")
    method: str
    spectral_gap: Optional[float] = None
    idempotence_residual: float
    invariance_residual: float
    method_agreement: Optional[float] = Field(default=None, description="Max entrywise gap between the two methods")
