"""Configuration management using Pydantic Settings."""

from typing import Optional, Tuple

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Numerical tolerances and runtime settings, overridable via QTRAJ_* variables."""

    # Logging
    log_level: str = Field("INFO", description="Log level for the quantum_trajectories logger")
    log_file: Optional[str] = Field(None, description="Optional log file; error.log is written beside it")

    # Density matrix invariants
    hermitian_tol: float = Field(1e-10, description="Max-entry Hermiticity tolerance")
    psd_tol: float = Field(1e-10, description="Smallest admissible eigenvalue is -psd_tol")
    trace_tol: float = Field(1e-10, description="Unit-trace tolerance")
    degenerate_trace: float = Field(1e-12, description="Trace floor after eigenvalue clipping")

    # Eigendecomposition
    eig_condition_limit: float = Field(1e12, description="Eigenvector condition number above which A is near-defective")
    eig_residual_tol: float = Field(1e-8, description="Relative reconstruction residual for eig")
    propagator_cache_condition_limit: float = Field(
        1e6, description="Eigenvector condition number up to which between-click flow uses the spectral cache"
    )

    # Generator / decomposition checks
    choi_tol: float = Field(1e-9, description="Choi eigenvalue floor for jump maps")
    semigroup_choi_tol: float = Field(1e-8, description="Choi eigenvalue floor for exp(t L0)")
    semigroup_check_times: Tuple[float, ...] = Field((0.01, 0.1, 1.0), description="Times at which exp(t L0) is checked")
    decomposition_tol: float = Field(1e-10, description="Entrywise tolerance for L0 + sum J = L")
    kraus_tol: float = Field(1e-10, description="Tolerance for sum V*V = I")

    # Jump simulation
    rate_floor: float = Field(1e-14, description="Total jump rate below which a state is dark")
    survival_slack: float = Field(1e-9, description="Admissible excursion of survival outside [0, 1]")
    bisection_rel_tol: float = Field(1e-9, description="Waiting-time bisection tolerance relative to the horizon")
    max_clicks: int = Field(10_000_000, description="Click cap per trajectory")

    # Diffusive simulation
    max_diffusive_dt: float = Field(0.1, description="Largest admissible Euler-Maruyama step")

    # Mean projector
    zero_eigenvalue_tol: float = Field(1e-9, description="Zero-eigenvalue cluster tolerance relative to max(1, |L|)")
    projector_tol: float = Field(1e-8, description="Idempotence and invariance tolerance for spectral projectors")
    quadrature_horizon: float = Field(1e3, description="Horizon of the quadrature mean projector")
    cesaro_steps: int = Field(100_000, description="Number of powers averaged by the discrete Cesaro projector")

    # Ensembles
    default_workers: int = Field(1, description="Worker processes used when --workers is omitted")

    model_config = SettingsConfigDict(
        env_prefix="QTRAJ_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level."""
        allowed_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in allowed_levels:
            raise ValueError(f"Log level must be one of: {allowed_levels}")
        return v.upper()

    @field_validator(
        "hermitian_tol",
        "psd_tol",
        "trace_tol",
        "degenerate_trace",
        "eig_condition_limit",
        "eig_residual_tol",
        "propagator_cache_condition_limit",
        "choi_tol",
        "semigroup_choi_tol",
        "decomposition_tol",
        "kraus_tol",
        "rate_floor",
        "survival_slack",
        "bisection_rel_tol",
        "max_diffusive_dt",
        "zero_eigenvalue_tol",
        "projector_tol",
        "quadrature_horizon",
    )
    @classmethod
    def validate_positive(cls, v: float) -> float:
        """Tolerances and limits must be positive."""
        if v <= 0:
            raise ValueError("Value must be positive")
        return v

    @field_validator("max_clicks", "cesaro_steps", "default_workers")
    @classmethod
    def validate_positive_int(cls, v: int) -> int:
        """Counts must be positive."""
        if v < 1:
            raise ValueError("Value must be at least 1")
        return v


# Global settings instance
settings = Settings()
