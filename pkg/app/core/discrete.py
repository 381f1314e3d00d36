"""Discrete-time unraveling of a Kraus channel and its Cesaro averages."""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .config import settings
from .logger import get_logger
from .numlin import (
    ComplexMatrix,
    DensityMatrix,
    MatrixLike,
    Superoperator,
    as_complex_matrix,
)
from .sampling import Seed, make_rng, sample_index

logger = get_logger(__name__)


class KrausError(Exception):
    """Base Kraus chain error."""
    pass


class KrausValidationError(KrausError):
    """sum V_i* V_i differs from the identity."""

    def __init__(self, deviation: float):
        super().__init__(f"Kraus operators are not trace preserving (max deviation {deviation:.3e})")
        self.deviation = deviation


class ZeroProbabilityBranchError(KrausError):
    """A zero-probability outcome was drawn."""
    pass


@dataclass(frozen=True, eq=False)
class KrausModel:
    """Kraus operators V_1..V_k of a channel T(rho) = sum_i V_i rho V_i*."""

    kraus_operators: Tuple[ComplexMatrix, ...]
    stacked: np.ndarray = field(init=False, repr=False)
    adjoints: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        operators = tuple(as_complex_matrix(v) for v in self.kraus_operators)
        if not operators:
            raise KrausError("At least one Kraus operator is required")
        dim = operators[0].shape[0]
        for index, operator in enumerate(operators, start=1):
            if operator.shape != (dim, dim):
                raise KrausError(f"V_{index} has shape {operator.shape}, expected {(dim, dim)}")
            operator.setflags(write=False)
        object.__setattr__(self, "kraus_operators", operators)
        stacked = np.stack(operators)
        adjoints = np.ascontiguousarray(stacked.conj().transpose(0, 2, 1))
        stacked.setflags(write=False)
        adjoints.setflags(write=False)
        object.__setattr__(self, "stacked", stacked)
        object.__setattr__(self, "adjoints", adjoints)

    @property
    def dim(self) -> int:
        """Hilbert space dimension."""
        return self.kraus_operators[0].shape[0]

    @property
    def num_outcomes(self) -> int:
        """Number of measurement outcomes k."""
        return len(self.kraus_operators)

    def channel(self) -> Superoperator:
        """Superoperator of T."""
        return Superoperator.from_kraus(self.kraus_operators)


@dataclass(frozen=True)
class KrausReport:
    """Result of validate_kraus."""

    ok: bool
    max_deviation: float
    tolerance: float


@dataclass(frozen=True, eq=False)
class DiscreteChain:
    """Outcomes omega_1..omega_N (1-based) and states Theta_0..Theta_N."""

    outcomes: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        outcomes = np.asarray(self.outcomes, dtype=np.int64)
        states = np.asarray(self.states, dtype=np.complex128)
        if states.shape[0] != len(outcomes) + 1:
            raise ValueError("A chain of N outcomes carries N + 1 states")
        outcomes.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "states", states)

    @property
    def steps(self) -> int:
        """Number of outcomes N."""
        return len(self.outcomes)

    @property
    def dim(self) -> int:
        """Hilbert space dimension."""
        return self.states.shape[1]

    @property
    def final_state(self) -> DensityMatrix:
        """Theta_N."""
        return DensityMatrix(self.states[-1])

    def state(self, index: int) -> DensityMatrix:
        """Theta_index."""
        return DensityMatrix(self.states[index])


def validate_kraus(model: KrausModel) -> KrausReport:
    """Check sum V_i* V_i = I and report the largest entrywise deviation."""
    total = sum(v.conj().T @ v for v in model.kraus_operators)
    deviation = float(np.max(np.abs(total - np.eye(model.dim))))
    report = KrausReport(ok=deviation <= settings.kraus_tol, max_deviation=deviation, tolerance=settings.kraus_tol)
    if not report.ok:
        logger.info(f"Kraus condition violated: max deviation {deviation:.3e}")
    return report


def require_valid(model: KrausModel) -> KrausModel:
    """Raise KrausValidationError unless the Kraus condition holds."""
    report = validate_kraus(model)
    if not report.ok:
        raise KrausValidationError(report.max_deviation)
    return model


def step_probabilities(theta: MatrixLike, model: KrausModel) -> np.ndarray:
    """p_i = tr(V_i Theta V_i*)."""
    images = model.stacked @ as_complex_matrix(theta) @ model.adjoints
    return np.clip(images.trace(axis1=1, axis2=2).real, 0.0, None)


def kraus_update(theta: MatrixLike, operator: MatrixLike) -> ComplexMatrix:
    """V Theta V* / tr(V Theta V*)."""
    theta = as_complex_matrix(theta)
    operator = as_complex_matrix(operator)
    image = operator @ theta @ operator.conj().T
    weight = float(np.real(np.trace(image)))
    if weight <= 0.0:
        raise ZeroProbabilityBranchError("Kraus update of a zero-probability outcome")
    image = image / weight
    return (image + image.conj().T) / 2


def simulate_chain(model: KrausModel, theta0: DensityMatrix, steps: int, seed: Seed) -> DiscreteChain:
    """Sample outcomes and conditional states for ``steps`` repeated measurements."""
    if steps < 1:
        raise ValueError("A chain needs at least one step")
    if theta0.dim != model.dim:
        raise ValueError(f"Initial state has d={theta0.dim}, model has d={model.dim}")
    require_valid(model)
    rng = make_rng(seed)

    draws = rng.random(steps)
    outcomes = np.zeros(steps, dtype=np.int64)
    states = np.zeros((steps + 1, model.dim, model.dim), dtype=np.complex128)
    states[0] = theta0.matrix
    stacked, adjoints = model.stacked, model.adjoints
    theta = states[0]
    for n in range(1, steps + 1):
        # each branch image is computed once and reused as the post-measurement state
        images = stacked @ theta @ adjoints
        weights = images.trace(axis1=1, axis2=2).real.tolist()
        index = sample_index([max(w, 0.0) for w in weights], float(draws[n - 1]))
        if weights[index] <= 0.0:
            raise ZeroProbabilityBranchError(f"Outcome {index + 1} has probability 0 at step {n}")
        outcomes[n - 1] = index + 1
        image = images[index] * (0.5 / weights[index])
        theta = image + image.conj().T
        states[n] = theta

    logger.debug(f"Kraus chain finished: steps={steps}")
    return DiscreteChain(outcomes=outcomes, states=states)


def cesaro(chain: DiscreteChain, steps: int) -> DensityMatrix:
    """(1/N) sum_{n<N} Theta_n."""
    if not 1 <= steps <= chain.steps + 1:
        raise ValueError(f"Cesaro length {steps} outside 1..{chain.steps + 1}")
    average = np.mean(chain.states[:steps], axis=0)
    return DensityMatrix((average + average.conj().T) / 2)


def channel_power(channel: Superoperator, steps: int) -> Superoperator:
    """T^n."""
    if steps < 0:
        raise ValueError("Channel powers need a non-negative exponent")
    return Superoperator(np.linalg.matrix_power(channel.matrix, steps), channel.dim)

