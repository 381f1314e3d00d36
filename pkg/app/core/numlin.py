"""Dense complex linear algebra on small matrices.

All superoperators act on column-stacked operators: ``vec(A X B) = (B^T kron A) vec(X)``.
"""

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
import scipy.linalg

from .config import settings
from .logger import get_logger

logger = get_logger(__name__)

ComplexMatrix = npt.NDArray[np.complex128]
MatrixLike = Union[ComplexMatrix, "DensityMatrix", npt.ArrayLike]


class LinearAlgebraError(Exception):
    """Base linear algebra error."""
    pass


class DimensionMismatchError(LinearAlgebraError):
    """Operands have incompatible shapes."""
    pass


class MatrixExponentialOverflowError(LinearAlgebraError):
    """Matrix exponential overflowed or produced non-finite entries."""
    pass


class NearDefectiveError(LinearAlgebraError):
    """Eigenvector matrix is too ill-conditioned for a spectral decomposition."""

    def __init__(self, condition_number: float):
        super().__init__(f"Near-defective matrix: eigenvector condition number {condition_number:.3e}")
        self.condition_number = condition_number


class DegenerateStateError(LinearAlgebraError):
    """Matrix has no positive part left after eigenvalue clipping."""
    pass


class InvalidDensityMatrixError(LinearAlgebraError):
    """Matrix violates a density matrix invariant."""

    def __init__(self, invariant: str, deviation: float):
        super().__init__(f"Density matrix invariant '{invariant}' violated (deviation {deviation:.3e})")
        self.invariant = invariant
        self.deviation = deviation


def as_complex_matrix(data: MatrixLike) -> ComplexMatrix:
    """Convert input to a finite 2-D complex array."""
    if isinstance(data, DensityMatrix):
        return data.matrix
    matrix = np.asarray(data, dtype=np.complex128)
    if matrix.ndim != 2:
        raise DimensionMismatchError(f"Expected a 2-D matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise LinearAlgebraError("Matrix has non-finite entries")
    return matrix


def _require_square(matrix: ComplexMatrix) -> int:
    rows, cols = matrix.shape
    if rows != cols:
        raise DimensionMismatchError(f"Expected a square matrix, got {rows}x{cols}")
    return rows


def _frozen(matrix: np.ndarray) -> np.ndarray:
    matrix = np.array(matrix, dtype=np.complex128, copy=True)
    matrix.setflags(write=False)
    return matrix


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace d x d matrix."""

    matrix: ComplexMatrix

    def __post_init__(self):
        matrix = as_complex_matrix(self.matrix)
        _require_square(matrix)
        object.__setattr__(self, "matrix", _frozen(matrix))
        invariant, deviation = density_violation(matrix)
        if invariant:
            raise InvalidDensityMatrixError(invariant, deviation)

    @property
    def dim(self) -> int:
        """Hilbert space dimension."""
        return self.matrix.shape[0]

    @property
    def purity(self) -> float:
        """tr(rho^2)."""
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def populations(self) -> np.ndarray:
        """Diagonal entries as reals."""
        return np.real(np.diag(self.matrix)).copy()

    def expectation(self, observable: MatrixLike) -> complex:
        """tr(A rho)."""
        return complex(np.trace(as_complex_matrix(observable) @ self.matrix))

    @classmethod
    def pure(cls, vector: npt.ArrayLike) -> "DensityMatrix":
        """Projector onto a normalized copy of the given vector."""
        psi = np.asarray(vector, dtype=np.complex128).ravel()
        norm = np.linalg.norm(psi)
        if norm == 0:
            raise DegenerateStateError("Cannot build a pure state from the zero vector")
        psi = psi / norm
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def basis(cls, dim: int, index: int) -> "DensityMatrix":
        """Pure state |index><index|."""
        if not 0 <= index < dim:
            raise DimensionMismatchError(f"Basis index {index} outside 0..{dim - 1}")
        psi = np.zeros(dim, dtype=np.complex128)
        psi[index] = 1.0
        return cls.pure(psi)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        """I / d."""
        return cls(np.eye(dim, dtype=np.complex128) / dim)


def density_violation(matrix: ComplexMatrix) -> Tuple[str, float]:
    """Return (invariant name, deviation) for the first violated invariant, or ("", 0.0)."""
    hermitian_dev = float(np.max(np.abs(matrix - matrix.conj().T))) if matrix.size else 0.0
    if hermitian_dev > settings.hermitian_tol:
        return "hermitian", hermitian_dev
    trace_dev = abs(complex(np.trace(matrix)) - 1.0)
    if trace_dev > settings.trace_tol:
        return "unit_trace", trace_dev
    min_eig = min_eigenvalue(matrix)
    if min_eig < -settings.psd_tol:
        return "positive_semidefinite", -min_eig
    return "", 0.0


def vectorize(matrix: MatrixLike) -> np.ndarray:
    """Column-stack a square matrix: [[a, b], [c, d]] -> (a, c, b, d)."""
    matrix = as_complex_matrix(matrix)
    _require_square(matrix)
    return matrix.reshape(-1, order="F").copy()


def devectorize(vector: npt.ArrayLike, dim: Optional[int] = None) -> ComplexMatrix:
    """Inverse of vectorize."""
    vector = np.asarray(vector, dtype=np.complex128).ravel()
    if dim is None:
        dim = int(round(np.sqrt(vector.size)))
    if dim * dim != vector.size:
        raise DimensionMismatchError(f"Vector of length {vector.size} is not a vectorized {dim}x{dim} matrix")
    return vector.reshape((dim, dim), order="F").copy()


def matrix_exp(matrix: MatrixLike, t: float = 1.0) -> ComplexMatrix:
    """e^{tA} by Pade scaling-and-squaring (scipy.linalg.expm)."""
    matrix = as_complex_matrix(matrix)
    _require_square(matrix)
    scaled = t * matrix
    with np.errstate(over="raise", invalid="raise"):
        try:
            result = scipy.linalg.expm(scaled)
        except FloatingPointError as e:
            raise MatrixExponentialOverflowError(
                f"Overflow in exp(tA) with |tA|_1 = {np.linalg.norm(scaled, 1):.3e}"
            ) from e
    if not np.all(np.isfinite(result)):
        raise MatrixExponentialOverflowError(
            f"Non-finite exp(tA) with |tA|_1 = {np.linalg.norm(scaled, 1):.3e}"
        )
    return np.asarray(result, dtype=np.complex128)


@dataclass(frozen=True, eq=False)
class Eigensystem:
    """A = vectors @ diag(values) @ inverse."""

    values: np.ndarray
    vectors: ComplexMatrix
    inverse: ComplexMatrix
    condition_number: float

    def reconstruct(self) -> ComplexMatrix:
        """S diag(lambda) S^-1."""
        return (self.vectors * self.values) @ self.inverse


def eig(matrix: MatrixLike, condition_limit: Optional[float] = None) -> Eigensystem:
    """Eigendecomposition with near-defective detection."""
    matrix = as_complex_matrix(matrix)
    _require_square(matrix)
    limit = settings.eig_condition_limit if condition_limit is None else condition_limit

    values, vectors = scipy.linalg.eig(matrix)
    condition_number = float(np.linalg.cond(vectors))
    if not np.isfinite(condition_number) or condition_number > limit:
        raise NearDefectiveError(condition_number)

    inverse = np.linalg.inv(vectors)
    system = Eigensystem(
        values=np.asarray(values, dtype=np.complex128),
        vectors=np.asarray(vectors, dtype=np.complex128),
        inverse=inverse,
        condition_number=condition_number,
    )

    scale = max(float(np.linalg.norm(matrix, 2)), 1.0)
    residual = float(np.linalg.norm(system.reconstruct() - matrix, 2))
    if residual > settings.eig_residual_tol * scale:
        raise NearDefectiveError(condition_number)

    return system


def trace_distance(rho: MatrixLike, sigma: MatrixLike) -> float:
    """Half the trace norm of rho - sigma."""
    a = as_complex_matrix(rho)
    b = as_complex_matrix(sigma)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"Cannot compare {a.shape} with {b.shape}")
    diff = a - b
    eigenvalues = np.linalg.eigvalsh((diff + diff.conj().T) / 2)
    return float(min(1.0, 0.5 * np.sum(np.abs(eigenvalues))))


def min_eigenvalue(matrix: MatrixLike) -> float:
    """Smallest eigenvalue of the Hermitian part."""
    matrix = as_complex_matrix(matrix)
    return float(np.min(np.linalg.eigvalsh((matrix + matrix.conj().T) / 2)))


def repair_density(matrix: ComplexMatrix) -> Tuple[ComplexMatrix, float]:
    """Repaired matrix and the smallest eigenvalue of the Hermitian part before clipping."""
    hermitian = (matrix + matrix.conj().T) / 2
    eigenvalues, eigenvectors = np.linalg.eigh(hermitian)
    clipped = np.clip(eigenvalues, 0.0, None)
    total = float(np.sum(clipped))
    if total <= settings.degenerate_trace:
        raise DegenerateStateError(f"Clipped trace {total:.3e} is not positive")
    repaired = (eigenvectors * (clipped / total)) @ eigenvectors.conj().T
    # exact Hermiticity after rounding
    repaired = (repaired + repaired.conj().T) / 2
    return repaired, float(eigenvalues[0])


def project_density(matrix: MatrixLike) -> DensityMatrix:
    """Hermitize, clip negative eigenvalues and renormalize to a density matrix."""
    matrix = as_complex_matrix(matrix)
    _require_square(matrix)
    return DensityMatrix(repair_density(matrix)[0])


def operator_norm(matrix: MatrixLike) -> float:
    """Spectral norm."""
    return float(np.linalg.norm(as_complex_matrix(matrix), 2))


@dataclass(frozen=True, eq=False)
class Superoperator:
    """d^2 x d^2 matrix acting on column-stacked d x d operators."""

    matrix: ComplexMatrix
    dim: int = field(default=0)

    def __post_init__(self):
        matrix = as_complex_matrix(self.matrix)
        size = _require_square(matrix)
        dim = self.dim or int(round(np.sqrt(size)))
        if dim * dim != size:
            raise DimensionMismatchError(f"Superoperator of size {size} does not act on {dim}x{dim} operators")
        object.__setattr__(self, "matrix", _frozen(matrix))
        object.__setattr__(self, "dim", dim)

    def apply(self, operator: MatrixLike) -> ComplexMatrix:
        """S(X) as a d x d matrix."""
        operator = as_complex_matrix(operator)
        if operator.shape != (self.dim, self.dim):
            raise DimensionMismatchError(f"Operator of shape {operator.shape} for a d={self.dim} superoperator")
        return devectorize(self.matrix @ vectorize(operator), self.dim)

    def trace_of(self, operator: MatrixLike) -> float:
        """Real part of tr S(X)."""
        return float(np.real(np.trace(self.apply(operator))))

    def compose(self, other: "Superoperator") -> "Superoperator":
        """self after other."""
        self._check(other)
        return Superoperator(self.matrix @ other.matrix, self.dim)

    def __add__(self, other: "Superoperator") -> "Superoperator":
        self._check(other)
        return Superoperator(self.matrix + other.matrix, self.dim)

    def __sub__(self, other: "Superoperator") -> "Superoperator":
        self._check(other)
        return Superoperator(self.matrix - other.matrix, self.dim)

    def __matmul__(self, other: "Superoperator") -> "Superoperator":
        return self.compose(other)

    def _check(self, other: "Superoperator"):
        if self.dim != other.dim:
            raise DimensionMismatchError(f"Superoperators act on d={self.dim} and d={other.dim}")

    @classmethod
    def identity(cls, dim: int) -> "Superoperator":
        """Identity map."""
        return cls(np.eye(dim * dim, dtype=np.complex128), dim)

    @classmethod
    def zero(cls, dim: int) -> "Superoperator":
        """Zero map."""
        return cls(np.zeros((dim * dim, dim * dim), dtype=np.complex128), dim)

    @classmethod
    def sandwich(cls, left: MatrixLike, right: MatrixLike) -> "Superoperator":
        """X -> left X right."""
        left = as_complex_matrix(left)
        right = as_complex_matrix(right)
        return cls(np.kron(right.T, left), left.shape[0])

    @classmethod
    def conjugation(cls, operator: MatrixLike) -> "Superoperator":
        """X -> V X V*."""
        operator = as_complex_matrix(operator)
        return cls(np.kron(operator.conj(), operator), operator.shape[0])

    @classmethod
    def from_kraus(cls, operators: Sequence[MatrixLike]) -> "Superoperator":
        """X -> sum_i V_i X V_i*."""
        operators = [as_complex_matrix(v) for v in operators]
        if not operators:
            raise DimensionMismatchError("At least one Kraus operator is required")
        total = sum(np.kron(v.conj(), v) for v in operators)
        return cls(total, operators[0].shape[0])

    @classmethod
    def sum(cls, terms: Iterable["Superoperator"], dim: int) -> "Superoperator":
        """Sum of superoperators on d x d operators (zero map for no terms)."""
        total = np.zeros((dim * dim, dim * dim), dtype=np.complex128)
        for term in terms:
            if term.dim != dim:
                raise DimensionMismatchError(f"Superoperator acts on d={term.dim}, expected {dim}")
            total = total + term.matrix
        return cls(total, dim)


def trace_functional(dim: int) -> np.ndarray:
    """Row vector r with r @ vec(X) = tr X."""
    return vectorize(np.eye(dim, dtype=np.complex128))
