"""Shared model fixtures."""

import json
from pathlib import Path
from typing import Callable, List

import numpy as np
import pytest

from app.core.discrete import KrausModel
from app.core.model import LindbladModel
from app.core.numlin import DensityMatrix
from app.models.model_file import complex_matrix_to_pairs

SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=np.complex128)
P0 = np.diag([1.0, 0.0]).astype(np.complex128)
P1 = np.diag([0.0, 1.0]).astype(np.complex128)
ZERO2 = np.zeros((2, 2), dtype=np.complex128)


def random_model(rng: np.random.Generator, dim: int, num_jumps: int) -> LindbladModel:
    """Random Hermitian H and Gaussian jump operators."""
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    hamiltonian = (a + a.conj().T) / 2
    operators = tuple(
        (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2 * dim)
        for _ in range(num_jumps)
    )
    return LindbladModel(hamiltonian, operators)


def random_state(rng: np.random.Generator, dim: int) -> DensityMatrix:
    """Random full-rank density matrix."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return DensityMatrix(rho / np.trace(rho))


@pytest.fixture
def amplitude_damping() -> LindbladModel:
    """Decay |1> -> |0> at rate 1."""
    return LindbladModel(ZERO2, (SIGMA_MINUS,))


@pytest.fixture
def dephasing() -> LindbladModel:
    """Projective dephasing V1 = |0><0|, V2 = |1><1|."""
    return LindbladModel(ZERO2, (P0, P1))


@pytest.fixture
def zero_model() -> LindbladModel:
    """H = 0, V = 0: the generator vanishes."""
    return LindbladModel(ZERO2, (ZERO2,))


@pytest.fixture
def projective_pair() -> KrausModel:
    """Repeated measurement in the computational basis."""
    return KrausModel((P0, P1))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def random_models() -> List[LindbladModel]:
    """Twenty random models with d in {2, 3, 4} and k in {1, 2, 3}."""
    generator = np.random.default_rng(7)
    return [random_model(generator, 2 + i % 3, 1 + (i // 3) % 3) for i in range(20)]


@pytest.fixture
def write_model(tmp_path: Path) -> Callable[..., Path]:
    """Write a model dictionary (matrices as arrays) to a JSON file."""

    def _write(data: dict, name: str = "model.json") -> Path:
        def encode(value):
            if isinstance(value, np.ndarray):
                return complex_matrix_to_pairs(value)
            if isinstance(value, (list, tuple)):
                return [encode(v) for v in value]
            if isinstance(value, dict):
                return {k: encode(v) for k, v in value.items()}
            return value

        path = tmp_path / name
        path.write_text(json.dumps(encode(data), indent=2), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def amplitude_damping_file(write_model) -> Path:
    return write_model({"hamiltonian": ZERO2, "jump_operators": [SIGMA_MINUS]}, "amplitude_damping.json")


@pytest.fixture
def dephasing_file(write_model) -> Path:
    return write_model({"hamiltonian": ZERO2, "jump_operators": [P0, P1]}, "dephasing.json")


@pytest.fixture
def projective_file(write_model) -> Path:
    return write_model({"kind": "kraus", "kraus_operators": [P0, P1]}, "projective.json")
