"""Run configuration shared by the simulate and verify commands."""

from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator

DEFAULT_GRID_STEP = 0.05


class RunConfig(BaseModel):
    """One seeded ensemble run."""

    model: Path = Field(..., description="Model file")
    unraveling: Literal["jump", "diffusive", "discrete"] = Field(..., description="Unraveling to simulate")
    theta0: str = Field(..., description="basis:n, plus, mixed or a JSON matrix literal")
    horizon: Optional[float] = Field(default=None, gt=0, description="Final time (jump, diffusive)")
    dt: Optional[float] = Field(default=None, gt=0, description="Euler-Maruyama step (diffusive)")
    grid_step: Optional[float] = Field(default=None, gt=0, description="Output grid step")
    steps: Optional[int] = Field(default=None, ge=1, description="Number of measurements (discrete)")
    trajectories: int = Field(..., ge=1, description="Ensemble size")
    seed: int = Field(..., ge=0, lt=2**64, description="64-bit run seed")
    out: Optional[Path] = Field(default=None, description="Output directory")
    workers: Optional[int] = Field(default=None, ge=1, description="Worker processes (settings default when unset)")
    csv: bool = Field(default=False, description="Also write per-trajectory CSV")

    @model_validator(mode="after")
    def validate_unraveling_fields(self):
        """Each unraveling has its own required fields."""
        if self.unraveling == "discrete":
            if self.steps is None:
                raise ValueError("discrete unraveling requires steps")
            return self
        if self.horizon is None:
            raise ValueError(f"{self.unraveling} unraveling requires horizon")
        if self.unraveling == "diffusive" and self.dt is None:
            raise ValueError("diffusive unraveling requires dt")
        if self.grid_step is None:
            grid_step = min(DEFAULT_GRID_STEP, self.horizon)
            # the output grid never subdivides an Euler step
            self.grid_step = max(grid_step, self.dt) if self.unraveling == "diffusive" else grid_step
        return self

    def echo(self) -> dict:
        """Configuration fields that determine trajectory contents."""
        return self.model_dump(mode="json", exclude={"workers", "out", "csv"})
