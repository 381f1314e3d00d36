"""Model file schemas: Lindblad models and Kraus channels."""

from typing import List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator

# a complex entry is either a real number or an [re, im] pair
Entry = Union[float, Tuple[float, float]]
MatrixData = List[List[Entry]]


def complex_matrix_from_pairs(data: MatrixData) -> np.ndarray:
    """Nested rows of real numbers or [re, im] pairs to a complex array."""
    rows = []
    for row in data:
        rows.append([complex(e[0], e[1]) if isinstance(e, (list, tuple)) else complex(e) for e in row])
    matrix = np.array(rows, dtype=np.complex128)
    if matrix.ndim != 2:
        raise ValueError("Matrix rows must all have the same length")
    return matrix


def complex_matrix_to_pairs(matrix: np.ndarray) -> List[List[List[float]]]:
    """Complex array to nested rows of [re, im] pairs."""
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(matrix)]


def _check_square(data: MatrixData, name: str) -> MatrixData:
    if not data or any(len(row) != len(data) for row in data):
        raise ValueError(f"{name} must be a non-empty square matrix")
    return data


def _check_dim(declared: Optional[int], operator: Optional[MatrixData]) -> Optional[int]:
    if declared is not None and operator is not None and declared != len(operator):
        raise ValueError(f"dim is {declared} but the operators are {len(operator)} x {len(operator)}")
    return declared


class DecompositionFile(BaseModel):
    """Explicit unraveling superoperators in column-stacking convention."""

    model_config = ConfigDict(populate_by_name=True)

    l0: MatrixData = Field(..., alias="L0", description="d^2 x d^2 matrix of L0")
    jumps: List[MatrixData] = Field(..., alias="J", min_length=1, description="d^2 x d^2 matrices of J_i")

    @field_validator("l0")
    @classmethod
    def validate_l0(cls, v):
        """L0 must be square."""
        return _check_square(v, "L0")

    @field_validator("jumps")
    @classmethod
    def validate_jumps(cls, v):
        """Every J_i must be square."""
        return [_check_square(m, f"J[{i}]") for i, m in enumerate(v)]


class LindbladModelFile(BaseModel):
    """Hamiltonian, jump operators and an optional explicit decomposition."""

    kind: Literal["lindblad"] = "lindblad"
    hamiltonian: MatrixData = Field(..., description="d x d Hamiltonian")
    jump_operators: List[MatrixData] = Field(..., min_length=1, description="d x d operators V_i")
    decomposition: Optional[DecompositionFile] = Field(default=None, description="Explicit L0 and J_i")
    dim: Optional[int] = Field(default=None, ge=1, description="Hilbert space dimension d (inferred when absent)")

    @field_validator("hamiltonian")
    @classmethod
    def validate_hamiltonian(cls, v):
        """H must be square."""
        return _check_square(v, "hamiltonian")

    @field_validator("jump_operators")
    @classmethod
    def validate_jump_operators(cls, v):
        """Every V_i must be square."""
        return [_check_square(m, f"jump_operators[{i}]") for i, m in enumerate(v)]

    @field_validator("dim")
    @classmethod
    def validate_dim(cls, v, info: ValidationInfo):
        """A declared dim must match the Hamiltonian."""
        return _check_dim(v, info.data.get("hamiltonian"))

    @model_validator(mode="after")
    def validate_dimensions(self):
        """Operators share the Hamiltonian's dimension; decomposition blocks are d^2 x d^2."""
        dim = len(self.hamiltonian)
        for i, operator in enumerate(self.jump_operators):
            if len(operator) != dim:
                raise ValueError(f"jump_operators[{i}] has dimension {len(operator)}, expected {dim}")
        if self.decomposition is not None:
            blocks = [self.decomposition.l0, *self.decomposition.jumps]
            if any(len(block) != dim * dim for block in blocks):
                raise ValueError(f"decomposition blocks must be {dim * dim} x {dim * dim}")
        self.dim = dim
        return self

    def to_dict(self) -> dict:
        """Plain dictionary with aliases, as written to disk."""
        return self.model_dump(by_alias=True, exclude_none=True)


class KrausModelFile(BaseModel):
    """Kraus operators of a repeated measurement."""

    kind: Literal["kraus"] = "kraus"
    kraus_operators: List[MatrixData] = Field(..., min_length=1, description="d x d operators V_i")
    dim: Optional[int] = Field(default=None, ge=1, description="Hilbert space dimension d (inferred when absent)")

    @field_validator("kraus_operators")
    @classmethod
    def validate_kraus_operators(cls, v):
        """Operators are square and share one dimension."""
        checked = [_check_square(m, f"kraus_operators[{i}]") for i, m in enumerate(v)]
        if len({len(m) for m in checked}) != 1:
            raise ValueError("All Kraus operators must have the same dimension")
        return checked

    @field_validator("dim")
    @classmethod
    def validate_dim(cls, v, info: ValidationInfo):
        """A declared dim must match the operators."""
        operators = info.data.get("kraus_operators")
        return _check_dim(v, operators[0] if operators else None)

    @model_validator(mode="after")
    def fill_dim(self):
        """Infer dim when the file omits it."""
        self.dim = len(self.kraus_operators[0])
        return self

    def to_dict(self) -> dict:
        """Plain dictionary, as written to disk."""
        return self.model_dump()


ModelFile = Union[LindbladModelFile, KrausModelFile]
