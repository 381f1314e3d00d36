"""Lindblad generators and their unraveling decompositions."""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import settings
from .logger import get_logger
from .numlin import (
    ComplexMatrix,
    Superoperator,
    as_complex_matrix,
    devectorize,
    matrix_exp,
    min_eigenvalue,
    trace_functional,
)

logger = get_logger(__name__)


class ModelError(Exception):
    """Base model error."""
    pass


class ModelValidationError(ModelError):
    """A LindbladModel invariant is violated."""

    def __init__(self, invariant: str, deviation: float = float("nan"), detail: str = ""):
        message = f"Model invariant '{invariant}' violated"
        if np.isfinite(deviation):
            message += f" (deviation {deviation:.3e})"
        if detail:
            message += f": {detail}"
        super().__init__(message)
        self.invariant = invariant
        self.deviation = deviation


class DecompositionError(ModelError):
    """An UnravelingDecomposition invariant is violated."""

    def __init__(self, invariant: str, deviation: float):
        super().__init__(f"Decomposition invariant '{invariant}' violated (deviation {deviation:.3e})")
        self.invariant = invariant
        self.deviation = deviation


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hamiltonian H and jump operators V_1..V_k on a d-dimensional Hilbert space.

    Convention: L(rho) = -i[H, rho] + sum_i (V_i rho V_i* - 1/2 {V_i* V_i, rho}).
    """

    hamiltonian: ComplexMatrix
    jump_operators: Tuple[ComplexMatrix, ...]

    def __post_init__(self):
        hamiltonian = as_complex_matrix(self.hamiltonian)
        if hamiltonian.shape[0] != hamiltonian.shape[1]:
            raise ModelValidationError("square_hamiltonian", detail=f"shape {hamiltonian.shape}")
        dim = hamiltonian.shape[0]

        deviation = float(np.max(np.abs(hamiltonian - hamiltonian.conj().T))) if dim else 0.0
        if deviation > settings.hermitian_tol:
            raise ModelValidationError("hermitian_hamiltonian", deviation)

        operators = tuple(as_complex_matrix(v) for v in self.jump_operators)
        if not operators:
            raise ModelValidationError("at_least_one_jump_operator")
        for index, operator in enumerate(operators, start=1):
            if operator.shape != (dim, dim):
                raise ModelValidationError("jump_operator_shape", detail=f"V_{index} has shape {operator.shape}, expected {(dim, dim)}")

        frozen_h = hamiltonian.copy()
        frozen_h.setflags(write=False)
        object.__setattr__(self, "hamiltonian", frozen_h)
        for operator in operators:
            operator.setflags(write=False)
        object.__setattr__(self, "jump_operators", operators)

    @property
    def dim(self) -> int:
        """Hilbert space dimension."""
        return self.hamiltonian.shape[0]

    @property
    def num_jumps(self) -> int:
        """Number of jump operators k."""
        return len(self.jump_operators)


@dataclass(frozen=True)
class NaturalChoice:
    """J_i(rho) = V_i rho V_i*, L0 = L - sum J_i."""
    pass


@dataclass(frozen=True, eq=False)
class ExplicitSuperoperators:
    """Caller-supplied L0 and J_1..J_k."""

    l0: Superoperator
    jumps: Tuple[Superoperator, ...]


DecompositionChoice = Union[NaturalChoice, ExplicitSuperoperators]


@dataclass(frozen=True, eq=False)
class UnravelingDecomposition:
    """L = L0 + sum_i J_i with J_i and exp(t L0) completely positive."""

    generator: Superoperator
    l0: Superoperator
    jumps: Tuple[Superoperator, ...]
    model: Optional[LindbladModel] = field(default=None)

    @property
    def dim(self) -> int:
        """Hilbert space dimension."""
        return self.generator.dim

    @property
    def num_jumps(self) -> int:
        """Number of detectors k."""
        return len(self.jumps)


@dataclass(frozen=True)
class InvariantCheck:
    """Outcome of one structural check."""

    name: str
    passed: bool
    deviation: float
    tolerance: float


def build_generator(model: LindbladModel) -> Superoperator:
    """Superoperator matrix of the Lindblad generator."""
    dim = model.dim
    identity = np.eye(dim, dtype=np.complex128)
    h = model.hamiltonian

    # -i(H rho - rho H)
    total = -1j * (np.kron(identity, h) - np.kron(h.T, identity))
    for v in model.jump_operators:
        vdv = v.conj().T @ v
        total = total + np.kron(v.conj(), v) - 0.5 * (np.kron(identity, vdv) + np.kron(vdv.T, identity))

    return Superoperator(total, dim)


def natural_jumps(model: LindbladModel) -> Tuple[Superoperator, ...]:
    """J_i(rho) = V_i rho V_i*."""
    return tuple(Superoperator.conjugation(v) for v in model.jump_operators)


def choi_matrix(superoperator: Superoperator) -> ComplexMatrix:
    """Unnormalized Choi matrix sum_ij S(E_ij) kron E_ij; PSD iff S is completely positive."""
    dim = superoperator.dim
    choi = np.zeros((dim * dim, dim * dim), dtype=np.complex128)
    for j in range(dim):
        for i in range(dim):
            unit = np.zeros((dim, dim), dtype=np.complex128)
            unit[i, j] = 1.0
            # column-stacked index of E_ij is i + j d
            image = devectorize(superoperator.matrix[:, i + j * dim], dim)
            choi += np.kron(image, unit)
    return choi


def choi_min_eigenvalue(superoperator: Superoperator) -> float:
    """Smallest eigenvalue of the Hermitian part of the Choi matrix."""
    return min_eigenvalue(choi_matrix(superoperator))


def propagator(generator: Superoperator, t: float) -> Superoperator:
    """T_t = exp(t L)."""
    if t < 0:
        raise ValueError(f"Propagator time must be non-negative, got {t}")
    return Superoperator(matrix_exp(generator.matrix, t), generator.dim)


def trace_preservation_deviation(generator: Superoperator) -> float:
    """max |tr L(X)| over matrix units, i.e. the norm of r @ L."""
    row = trace_functional(generator.dim)
    return float(np.max(np.abs(row @ generator.matrix)))


def decomposition_checks(
    generator: Superoperator, l0: Superoperator, jumps: Sequence[Superoperator]
) -> List[InvariantCheck]:
    """Evaluate every UnravelingDecomposition invariant."""
    checks: List[InvariantCheck] = []

    total = Superoperator.sum([l0, *jumps], generator.dim)
    sum_deviation = float(np.max(np.abs(total.matrix - generator.matrix)))
    checks.append(InvariantCheck("sum_equals_generator", sum_deviation <= settings.decomposition_tol,
                                 sum_deviation, settings.decomposition_tol))

    for index, jump in enumerate(jumps, start=1):
        min_eig = choi_min_eigenvalue(jump)
        checks.append(InvariantCheck(f"jump_{index}_completely_positive", min_eig >= -settings.choi_tol,
                                     max(0.0, -min_eig), settings.choi_tol))

    for t in settings.semigroup_check_times:
        min_eig = choi_min_eigenvalue(propagator(l0, t))
        checks.append(InvariantCheck(f"no_click_flow_completely_positive_t={t:g}",
                                     min_eig >= -settings.semigroup_choi_tol,
                                     max(0.0, -min_eig), settings.semigroup_choi_tol))
    return checks


def build_decomposition(
    model: LindbladModel, choice: Optional[DecompositionChoice] = None
) -> UnravelingDecomposition:
    """Build and validate an unraveling decomposition of the model's generator."""
    choice = choice or NaturalChoice()
    generator = build_generator(model)

    if isinstance(choice, NaturalChoice):
        jumps = natural_jumps(model)
        l0 = generator - Superoperator.sum(jumps, model.dim)
    else:
        l0 = choice.l0
        jumps = tuple(choice.jumps)
        for superoperator in (l0, *jumps):
            if superoperator.dim != model.dim:
                raise DecompositionError("dimension", float(abs(superoperator.dim - model.dim)))
        if len(jumps) != model.num_jumps:
            raise DecompositionError("jump_count", float(abs(len(jumps) - model.num_jumps)))

    for check in decomposition_checks(generator, l0, jumps):
        if not check.passed:
            raise DecompositionError(check.name, check.deviation)

    logger.debug(f"Decomposition validated: d={model.dim}, k={len(jumps)}, choice={type(choice).__name__}")
    return UnravelingDecomposition(generator=generator, l0=l0, jumps=jumps, model=model)


def model_checks(model: LindbladModel, choice: Optional[DecompositionChoice] = None) -> List[InvariantCheck]:
    """All structural checks surfaced by the validate command."""
    generator = build_generator(model)
    trace_dev = trace_preservation_deviation(generator)
    trace_tol = 1e-12 * max(1.0, float(np.abs(generator.matrix).max()))
    checks = [
        InvariantCheck("hermitian_hamiltonian", True,
                       float(np.max(np.abs(model.hamiltonian - model.hamiltonian.conj().T))),
                       settings.hermitian_tol),
        InvariantCheck("trace_preserving_generator", trace_dev <= trace_tol, trace_dev, trace_tol),
    ]
    choice = choice or NaturalChoice()
    if isinstance(choice, NaturalChoice):
        jumps = natural_jumps(model)
        l0 = generator - Superoperator.sum(jumps, model.dim)
    else:
        l0, jumps = choice.l0, tuple(choice.jumps)
    checks.extend(decomposition_checks(generator, l0, jumps))
    return checks

