"""Tests for dense linear algebra helpers."""

import numpy as np
import pytest

from app.core.numlin import (
    DegenerateStateError,
    DensityMatrix,
    DimensionMismatchError,
    InvalidDensityMatrixError,
    MatrixExponentialOverflowError,
    NearDefectiveError,
    Superoperator,
    devectorize,
    eig,
    matrix_exp,
    min_eigenvalue,
    project_density,
    repair_density,
    trace_distance,
    trace_functional,
    vectorize,
)

from .conftest import random_state


def test_vectorize_stacks_columns():
    matrix = np.array([[1, 2], [3, 4]], dtype=complex)
    assert np.array_equal(vectorize(matrix), np.array([1, 3, 2, 4], dtype=complex))
    assert np.array_equal(devectorize(vectorize(matrix)), matrix)


@pytest.mark.parametrize("dim", range(1, 9))
def test_devectorize_inverts_vectorize(rng, dim):
    matrix = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    assert np.array_equal(devectorize(vectorize(matrix)), matrix)
    assert np.array_equal(devectorize(vectorize(matrix), dim), matrix)


def test_devectorize_rejects_non_square_length():
    with pytest.raises(DimensionMismatchError):
        devectorize(np.ones(5))


def test_sandwich_matches_matrix_product(rng):
    a, x, b = (rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)) for _ in range(3))
    assert np.allclose(Superoperator.sandwich(a, b).apply(x), a @ x @ b)
    assert np.allclose(Superoperator.sandwich(a, b).matrix @ vectorize(x), np.kron(b.T, a) @ vectorize(x))


def test_conjugation_and_kraus_sum(rng):
    v = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    w = rng.normal(size=(2, 2))
    x = random_state(rng, 2).matrix
    assert np.allclose(Superoperator.conjugation(v).apply(x), v @ x @ v.conj().T)
    total = Superoperator.from_kraus([v, w])
    assert np.allclose(total.apply(x), v @ x @ v.conj().T + w @ x @ w.conj().T)


def test_superoperator_algebra():
    identity = Superoperator.identity(2)
    zero = Superoperator.zero(2)
    assert np.array_equal((identity + zero).matrix, identity.matrix)
    assert np.array_equal((identity - identity).matrix, zero.matrix)
    assert np.array_equal((identity @ identity).matrix, identity.matrix)
    with pytest.raises(DimensionMismatchError):
        identity + Superoperator.identity(3)


def test_superoperator_rejects_wrong_operator_shape():
    with pytest.raises(DimensionMismatchError):
        Superoperator.identity(2).apply(np.eye(3))


def test_trace_functional(rng):
    x = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    assert np.isclose(trace_functional(3) @ vectorize(x), np.trace(x))


class TestMatrixExp:
    def test_zero_matrix_gives_identity(self):
        assert np.allclose(matrix_exp(np.zeros((3, 3))), np.eye(3))

    def test_diagonal(self):
        result = matrix_exp(np.diag([0.0, -1.0, 2.0]), t=0.5)
        assert np.allclose(result, np.diag(np.exp([0.0, -0.5, 1.0])))

    def test_nilpotent(self):
        n = np.array([[0.0, 1.0], [0.0, 0.0]])
        assert np.allclose(matrix_exp(n, t=3.0), np.eye(2) + 3.0 * n)

    def test_rotation(self):
        generator = np.array([[0.0, -1.0], [1.0, 0.0]])
        expected = np.array([[np.cos(1.0), -np.sin(1.0)], [np.sin(1.0), np.cos(1.0)]])
        assert np.allclose(matrix_exp(generator), expected)

    def test_semigroup(self, rng):
        a = (rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))) / 2
        for s, t in ((0.3, 0.7), (1.0, 2.5), (0.0, 1.2)):
            assert np.allclose(matrix_exp(a, s + t), matrix_exp(a, s) @ matrix_exp(a, t), atol=1e-10)

    def test_overflow(self):
        with pytest.raises(MatrixExponentialOverflowError):
            matrix_exp(np.eye(2) * 1e4)


class TestEig:
    def test_reconstructs_diagonalizable_matrix(self, rng):
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        system = eig(a)
        assert np.allclose(system.reconstruct(), a)
        assert system.condition_number >= 1.0

    def test_jordan_block_is_near_defective(self):
        with pytest.raises(NearDefectiveError):
            eig(np.array([[1.0, 1.0], [0.0, 1.0]]))


class TestDensityMatrix:
    def test_basis_and_mixed(self):
        assert np.isclose(DensityMatrix.basis(3, 1).purity, 1.0)
        assert np.isclose(DensityMatrix.maximally_mixed(4).purity, 0.25)
        assert np.allclose(DensityMatrix.maximally_mixed(2).populations(), [0.5, 0.5])

    def test_pure_normalizes(self):
        rho = DensityMatrix.pure([1.0, 1.0])
        assert np.allclose(rho.matrix, 0.5 * np.ones((2, 2)))
        with pytest.raises(DegenerateStateError):
            DensityMatrix.pure([0.0, 0.0])

    def test_matrix_is_read_only(self):
        rho = DensityMatrix.basis(2, 0)
        with pytest.raises(ValueError):
            rho.matrix[0, 0] = 2.0

    @pytest.mark.parametrize(
        "matrix, invariant",
        [
            (np.array([[1.0, 1.0], [0.0, 0.0]]), "hermitian"),
            (np.diag([0.6, 0.6]), "unit_trace"),
            (np.diag([1.5, -0.5]), "positive_semidefinite"),
        ],
    )
    def test_invariants(self, matrix, invariant):
        with pytest.raises(InvalidDensityMatrixError) as excinfo:
            DensityMatrix(matrix)
        assert excinfo.value.invariant == invariant

    def test_expectation(self):
        sigma_z = np.diag([1.0, -1.0])
        assert np.isclose(DensityMatrix.basis(2, 1).expectation(sigma_z), -1.0)


class TestRepair:
    def test_clips_negative_eigenvalues(self):
        repaired, smallest = repair_density(np.diag([1.1, -0.1]).astype(complex))
        assert np.isclose(smallest, -0.1)
        assert np.allclose(repaired, np.diag([1.0, 0.0]))

    def test_project_density_of_valid_state_is_identity(self, rng):
        rho = random_state(rng, 3)
        assert np.allclose(project_density(rho.matrix).matrix, rho.matrix)

    def test_project_density_of_perturbed_states(self, rng):
        for dim in (2, 3, 4):
            for _ in range(10):
                noise = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
                perturbed = random_state(rng, dim).matrix + 0.2 * noise
                rho = project_density(perturbed).matrix
                assert np.allclose(rho, rho.conj().T, atol=1e-14)
                assert abs(np.trace(rho) - 1.0) <= 1e-12
                assert min_eigenvalue(rho) >= -1e-12

    def test_min_eigenvalue_uses_hermitian_part(self):
        assert min_eigenvalue(np.array([[1.0, 2.0], [0.0, 1.0]])) == pytest.approx(0.0)
        assert min_eigenvalue(np.diag([0.5, -0.25])) == pytest.approx(-0.25)

    def test_degenerate(self):
        with pytest.raises(DegenerateStateError):
            project_density(-np.eye(2))


def test_trace_distance():
    zero, one = DensityMatrix.basis(2, 0), DensityMatrix.basis(2, 1)
    assert np.isclose(trace_distance(zero, one), 1.0)
    assert np.isclose(trace_distance(zero, DensityMatrix.maximally_mixed(2)), 0.5)
    assert trace_distance(zero, zero) == 0.0


def test_trace_distance_is_a_metric(rng):
    for dim in (2, 3, 5):
        for _ in range(10):
            rho, sigma, tau = (random_state(rng, dim) for _ in range(3))
            assert trace_distance(rho, sigma) == pytest.approx(trace_distance(sigma, rho), abs=1e-14)
            assert 0.0 <= trace_distance(rho, sigma) <= 1.0
            assert trace_distance(rho, tau) <= trace_distance(rho, sigma) + trace_distance(sigma, tau) + 1e-12
