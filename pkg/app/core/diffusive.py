"""Diffusive unraveling integrated by Euler-Maruyama.

dTheta = L(Theta) dt + sum_i X_i(Theta) dW_i, with one real innovation process per jump
operator and X_i(Theta) = Theta V_i* + V_i Theta - tr(Theta V_i* + V_i Theta) Theta.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import numpy.typing as npt

from .config import settings
from .jump import SampledPath
from .logger import get_logger
from .model import LindbladModel, build_generator
from .numlin import (
    ComplexMatrix,
    DensityMatrix,
    MatrixLike,
    Superoperator,
    as_complex_matrix,
    repair_density,
)
from .sampling import Seed, make_rng

logger = get_logger(__name__)


class DiffusiveSimulationError(Exception):
    """Base diffusive simulation error."""
    pass


class EigenvalueGuardError(DiffusiveSimulationError):
    """An Euler-Maruyama iterate left the state space by more than the guard allows."""

    def __init__(self, step: int, eigenvalue: float, dt: float):
        super().__init__(
            f"Eigenvalue {eigenvalue:.3e} below guard at step {step}; time step dt={dt} is too large"
        )
        self.step = step
        self.eigenvalue = eigenvalue


@dataclass(frozen=True)
class DiffusiveStepConfig:
    """Euler-Maruyama step, repair cadence and abort threshold.

    ``min_eig_guard`` applies below the excursion a single step can produce, see
    ``step_excursion``.
    """

    dt: float
    repair_every: int = 1
    min_eig_guard: float = -1e-3
    grid_step: Optional[float] = None
    noiseless: bool = False

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("Time step must be positive")
        if self.dt > settings.max_diffusive_dt:
            raise ValueError(f"Time step {self.dt} exceeds {settings.max_diffusive_dt}")
        if self.repair_every < 1:
            raise ValueError("repair_every must be at least 1")
        if self.grid_step is not None and self.grid_step < self.dt:
            raise ValueError("Output grid step must not be smaller than dt")

    @property
    def output_stride(self) -> int:
        """Number of Euler steps between recorded states."""
        if self.grid_step is None:
            return 1
        return max(1, int(round(self.grid_step / self.dt)))


def diffusion_coefficient(theta: MatrixLike, operator: MatrixLike) -> ComplexMatrix:
    """X = Theta V* + V Theta - tr(Theta V* + V Theta) Theta."""
    theta = as_complex_matrix(theta)
    operator = as_complex_matrix(operator)
    if theta.shape != operator.shape:
        raise ValueError(f"State shape {theta.shape} does not match operator shape {operator.shape}")
    symmetric = theta @ operator.conj().T + operator @ theta
    return symmetric - np.trace(symmetric) * theta


def em_step(
    theta: MatrixLike,
    generator: Superoperator,
    operators: Sequence[MatrixLike],
    dt: float,
    gaussians: npt.ArrayLike,
) -> ComplexMatrix:
    """One Euler-Maruyama step driven by standard normal draws (one per operator)."""
    if dt <= 0:
        raise ValueError("Time step must be positive")
    theta = as_complex_matrix(theta)
    gaussians = np.asarray(gaussians, dtype=float).ravel()
    if len(gaussians) != len(operators):
        raise ValueError(f"Expected {len(operators)} Gaussian draws, got {len(gaussians)}")

    increment = generator.apply(theta) * dt
    sqrt_dt = np.sqrt(dt)
    for operator, g in zip(operators, gaussians):
        if g != 0.0:
            increment = increment + diffusion_coefficient(theta, operator) * (sqrt_dt * g)
    return theta + increment


def step_excursion(
    theta: MatrixLike,
    generator: Superoperator,
    operators: Sequence[MatrixLike],
    dt: float,
    gaussians: npt.ArrayLike,
) -> float:
    """Bound on the eigenvalue dip below zero that one step can produce from a valid state.

    Off the support of Theta a step only adds the coupling B with |B| <= sqrt(dt) (sum_i |g_i| ||X_i||)
    + dt ||L(Theta)||, and the smallest eigenvalue moves down by at most |B|^2 / (1 - O(dt)).
    Frobenius norms stand in for operator norms.
    """
    theta = as_complex_matrix(theta)
    gaussians = np.abs(np.asarray(gaussians, dtype=float).ravel())
    spread = sum(
        g * np.linalg.norm(diffusion_coefficient(theta, operator))
        for operator, g in zip(operators, gaussians)
        if g != 0.0
    )
    coupling = np.sqrt(dt) * spread + dt * np.linalg.norm(generator.apply(theta))
    return float(2.0 * coupling**2)


def simulate(
    model: LindbladModel,
    theta0: DensityMatrix,
    horizon: float,
    config: DiffusiveStepConfig,
    seed: Seed,
) -> SampledPath:
    """Sample one diffusive trajectory on [0, horizon]."""
    if theta0.dim != model.dim:
        raise ValueError(f"Initial state has d={theta0.dim}, model has d={model.dim}")
    if horizon <= 0:
        raise ValueError("Horizon must be positive")

    rng = make_rng(seed)
    generator = build_generator(model)
    operators = model.jump_operators
    steps = int(round(horizon / config.dt))
    if abs(steps * config.dt - horizon) > 1e-9 * horizon:
        raise ValueError(f"Horizon {horizon} is not a whole number of steps dt={config.dt}")
    stride = config.output_stride

    if config.noiseless:
        noise = np.zeros((steps, len(operators)))
    else:
        noise = rng.standard_normal((steps, len(operators)))

    theta = theta0.matrix.copy()
    times: List[float] = [0.0]
    states: List[ComplexMatrix] = [theta.copy()]

    for step in range(1, steps + 1):
        draws = noise[step - 1]
        allowance = step_excursion(theta, generator, operators, config.dt, draws)
        theta = em_step(theta, generator, operators, config.dt, draws)
        repaired, smallest = repair_density(theta)
        # the guard is measured beyond the dip a single step legitimately produces
        if smallest < config.min_eig_guard - allowance:
            raise EigenvalueGuardError(step, smallest, config.dt)
        if step % config.repair_every == 0:
            theta = repaired
        if step % stride == 0 or step == steps:
            times.append(step * config.dt)
            states.append(repaired)

    logger.debug(f"Diffusive trajectory finished: steps={steps}, dt={config.dt}")
    return SampledPath.from_states(np.array(times), states, unraveling="diffusive")

