"""Mean projector, equilibrium states and ensemble statistics of the pathwise ergodic theorem."""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..models.report import EquilibriumReport, Statistic, VerificationThresholds
from .config import settings
from .discrete import DiscreteChain, cesaro, channel_power
from .jump import SampledPath, counting_diagnostics, residual_martingale
from .logger import get_logger
from .model import propagator
from .numlin import (
    ComplexMatrix,
    DensityMatrix,
    MatrixLike,
    NearDefectiveError,
    Superoperator,
    eig,
    matrix_exp,
    operator_norm,
    project_density,
    trace_distance,
)

logger = get_logger(__name__)

# non-zero singular values of a projector are at least 1
PROJECTOR_RANK_TOL = 0.5
INVARIANCE_CHECK_TIMES = (0.5, 1.0, 2.0)

Trajectory = Union[SampledPath, DiscreteChain]


class ErgodicError(Exception):
    """Base ergodic analysis error."""
    pass


class ProjectorError(ErgodicError):
    """Mean projector violates its invariants."""
    pass


class HorizonError(ErgodicError):
    """Requested time lies beyond the simulated horizon."""
    pass


class EmptyEnsembleError(ErgodicError):
    """No trajectories to aggregate."""
    pass


@dataclass(frozen=True, eq=False)
class MeanProjector:
    """Cesaro limit of the semigroup (or of the powers of a channel)."""

    projector: Superoperator
    method: str
    kind: str
    idempotence_residual: float
    invariance_residual: float
    spectral_gap: Optional[float] = None

    @property
    def dim(self) -> int:
        """Hilbert space dimension."""
        return self.projector.dim

    def apply(self, rho: MatrixLike) -> ComplexMatrix:
        """P(rho)."""
        return self.projector.apply(rho)


@dataclass(frozen=True, eq=False)
class EquilibriumSpace:
    """Density matrices spanning the equilibrium space and the uniqueness flag."""

    states: Tuple[DensityMatrix, ...]
    dimension: int
    unique: bool


def _spectral_projector(matrix: ComplexMatrix, selected) -> ComplexMatrix:
    system = eig(matrix)
    mask = selected(system.values)
    return system.vectors[:, mask] @ system.inverse[mask, :]


def _spectral_gap(distances: np.ndarray, tolerance: float) -> Optional[float]:
    outside = distances[distances > tolerance]
    return float(np.min(outside)) if outside.size else None


def _quadrature_projector(generator: Superoperator, horizon: float) -> ComplexMatrix:
    size = generator.matrix.shape[0]
    block = np.zeros((2 * size, 2 * size), dtype=np.complex128)
    block[:size, :size] = generator.matrix
    block[:size, size:] = np.eye(size)
    # exp(t [[L, I], [0, 0]]) = [[exp(tL), int_0^t exp(sL) ds], [0, I]]
    return matrix_exp(block, horizon)[:size, size:] / horizon


def _residuals(projector: ComplexMatrix, maps: Sequence[ComplexMatrix]) -> Tuple[float, float]:
    idempotence = float(np.max(np.abs(projector @ projector - projector)))
    invariance = 0.0
    for step in maps:
        invariance = max(
            invariance,
            float(np.max(np.abs(projector @ step - projector))),
            float(np.max(np.abs(step @ projector - projector))),
        )
    return idempotence, invariance


def mean_projector(generator: Superoperator, method: str = "spectral") -> MeanProjector:
    """P = lim (1/t) int_0^t exp(sL) ds, by spectral projection or block-exponential quadrature."""
    if method not in ("spectral", "quadrature"):
        raise ValueError(f"Unknown mean projector method: {method}")

    tolerance = settings.zero_eigenvalue_tol * max(1.0, operator_norm(generator.matrix))
    eigenvalues = np.linalg.eigvals(generator.matrix)
    gap = _spectral_gap(np.abs(eigenvalues), tolerance)

    matrix = None
    if method == "spectral":
        try:
            matrix = _spectral_projector(generator.matrix, lambda values: np.abs(values) < tolerance)
        except NearDefectiveError as e:
            logger.warning(f"Spectral mean projector unavailable ({e}); using quadrature")
            method = "quadrature"
    if matrix is None:
        matrix = _quadrature_projector(generator, settings.quadrature_horizon)

    maps = [matrix_exp(generator.matrix, s) for s in INVARIANCE_CHECK_TIMES]
    idempotence, invariance = _residuals(matrix, maps)
    if method == "spectral" and max(idempotence, invariance) > settings.projector_tol:
        raise ProjectorError(
            f"Spectral projector residuals too large: idempotence {idempotence:.3e}, invariance {invariance:.3e}"
        )
    if method == "quadrature" and max(idempotence, invariance) > settings.projector_tol:
        logger.warning(
            f"Quadrature projector at t={settings.quadrature_horizon:g}: "
            f"idempotence {idempotence:.3e}, invariance {invariance:.3e}"
        )

    return MeanProjector(
        projector=Superoperator(matrix, generator.dim),
        method=method,
        kind="continuous",
        idempotence_residual=idempotence,
        invariance_residual=invariance,
        spectral_gap=gap,
    )


def _power_average(matrix: ComplexMatrix, steps: int) -> ComplexMatrix:
    """(1/N) sum_{n<N} T^n by binary doubling."""
    size = matrix.shape[0]
    total = np.zeros((size, size), dtype=np.complex128)
    total_power = np.eye(size, dtype=np.complex128)
    block = np.eye(size, dtype=np.complex128)
    block_power = matrix.astype(np.complex128)
    remaining = steps
    while remaining:
        if remaining & 1:
            total = total + total_power @ block
            total_power = total_power @ block_power
        block = block + block_power @ block
        block_power = block_power @ block_power
        remaining >>= 1
    return total / steps


def discrete_mean_projector(channel: Superoperator, method: str = "spectral") -> MeanProjector:
    """P = lim (1/N) sum_{n<N} T^n for a channel T."""
    if method not in ("spectral", "cesaro"):
        raise ValueError(f"Unknown discrete projector method: {method}")

    tolerance = settings.zero_eigenvalue_tol * max(1.0, operator_norm(channel.matrix))
    eigenvalues = np.linalg.eigvals(channel.matrix)
    gap = _spectral_gap(np.abs(eigenvalues - 1.0), tolerance)

    matrix = None
    if method == "spectral":
        try:
            # peripheral eigenvalues other than 1 average out
            matrix = _spectral_projector(channel.matrix, lambda values: np.abs(values - 1.0) < tolerance)
        except NearDefectiveError as e:
            logger.warning(f"Spectral discrete projector unavailable ({e}); using Cesaro average")
            method = "cesaro"
    if matrix is None:
        matrix = _power_average(channel.matrix, settings.cesaro_steps)

    idempotence, invariance = _residuals(matrix, [channel.matrix])
    if method == "spectral" and max(idempotence, invariance) > settings.projector_tol:
        raise ProjectorError(
            f"Spectral projector residuals too large: idempotence {idempotence:.3e}, invariance {invariance:.3e}"
        )
    if method == "cesaro" and max(idempotence, invariance) > settings.projector_tol:
        logger.warning(
            f"Cesaro projector at N={settings.cesaro_steps}: "
            f"idempotence {idempotence:.3e}, invariance {invariance:.3e}"
        )

    return MeanProjector(
        projector=Superoperator(matrix, channel.dim),
        method=method,
        kind="discrete",
        idempotence_residual=idempotence,
        invariance_residual=invariance,
        spectral_gap=gap,
    )


def _spanning_states(dim: int) -> List[np.ndarray]:
    """d^2 pure states whose projectors span all d x d matrices."""
    candidates = [np.eye(dim, dtype=np.complex128)[i] for i in range(dim)]
    for i in range(dim):
        for j in range(i + 1, dim):
            for phase in (1.0, 1j):
                psi = np.zeros(dim, dtype=np.complex128)
                psi[i], psi[j] = 1.0, phase
                candidates.append(psi / np.sqrt(2))
    return candidates


def equilibrium_basis(projector: MeanProjector) -> EquilibriumSpace:
    """Equilibrium states P(rho) spanning the range of P, and whether the equilibrium is unique."""
    dim = projector.dim
    singular_values = np.linalg.svd(projector.projector.matrix, compute_uv=False)
    rank = int(np.sum(singular_values > PROJECTOR_RANK_TOL))
    if rank == 0:
        raise ProjectorError("Mean projector has an empty range")

    chosen: List[DensityMatrix] = []
    stack: List[np.ndarray] = []
    for psi in _spanning_states(dim):
        image = project_density(projector.apply(np.outer(psi, psi.conj())))
        candidate = stack + [image.matrix.ravel()]
        if np.linalg.matrix_rank(np.array(candidate), tol=1e-6) == len(candidate):
            chosen.append(image)
            stack = candidate
        if len(chosen) == rank:
            break

    return EquilibriumSpace(states=tuple(chosen), dimension=rank, unique=rank == 1)


def _check_horizon(t: float, horizon: float):
    if t < 0 or t > horizon * (1 + 1e-12):
        raise HorizonError(f"Time {t} outside the simulated horizon [0, {horizon}]")


def time_average(path: SampledPath, t: float) -> DensityMatrix:
    """(1/t) int_0^t Theta_s ds by trapezoidal quadrature."""
    _check_horizon(t, path.horizon)
    t = min(t, path.horizon)
    if t == 0:
        return project_density(path.states[0])
    return project_density(path.integral(t) / t)


def theta_infinity(trajectory: Trajectory, projector: MeanProjector) -> DensityMatrix:
    """Finite-horizon estimate P(Theta_T) of the limit of the martingale P(Theta_t)."""
    return project_density(projector.apply(trajectory.states[-1]))


def projected_path(trajectory: Trajectory, projector: MeanProjector) -> np.ndarray:
    """P(Theta) at every node of a path or chain."""
    states = trajectory.states
    count, dim = states.shape[0], states.shape[1]
    vectors = states.transpose(0, 2, 1).reshape(count, -1)
    images = vectors @ projector.projector.matrix.T
    return images.reshape(count, dim, dim).transpose(0, 2, 1)


def averaged_generator_residual(path: SampledPath, generator: Superoperator, t: float) -> float:
    """Operator norm of (1/t) int_0^t L(Theta_s) ds, computed as L applied to the integral."""
    _check_horizon(t, path.horizon)
    if t <= 0:
        raise HorizonError("Residual needs a positive time")
    return operator_norm(generator.apply(path.integral(min(t, path.horizon)) / t))


def discrete_residual(chain: DiscreteChain, channel: Superoperator, steps: int) -> float:
    """Operator norm of T(avg) - avg for the Cesaro average of the first ``steps`` states."""
    average = cesaro(chain, steps).matrix
    return operator_norm(channel.apply(average) - average)


def convergence_profile(path: SampledPath, projector: MeanProjector, times: Sequence[float]) -> np.ndarray:
    """Trace distance of the time average at each horizon to Theta_inf."""
    limit = theta_infinity(path, projector)
    return np.array([trace_distance(time_average(path, t), limit) for t in times])


def _real_components(matrices: np.ndarray) -> np.ndarray:
    count = matrices.shape[0]
    return np.concatenate([matrices.real.reshape(count, -1), matrices.imag.reshape(count, -1)], axis=1)


def _zero_mean_statistic(name: str, samples: np.ndarray, thresholds: VerificationThresholds) -> Statistic:
    """Largest |mean| / standard error over the columns of ``samples``."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float).T).T
    count = samples.shape[0]
    means = samples.mean(axis=0)
    if count < 2:
        return Statistic(name=name, value=float(np.max(np.abs(means))), threshold=thresholds.z_max, samples=count)

    errors = samples.std(axis=0, ddof=1) / np.sqrt(count)
    # deviations at rounding level pass even when the standard error vanishes
    negligible = np.abs(means) <= thresholds.zero_se_tolerance
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(negligible, 0.0, np.where(errors > 0.0, np.abs(means) / errors, np.inf))
    worst = int(np.argmax(z))
    return Statistic(
        name=name,
        value=float(z[worst]),
        standard_error=float(errors[worst]),
        threshold=thresholds.z_max,
        passed=bool(z[worst] <= thresholds.z_max),
        samples=count,
    )


def _fraction_statistic(name: str, values: np.ndarray, tolerance: float, thresholds: VerificationThresholds) -> Statistic:
    count = len(values)
    fraction = float(np.mean(values <= tolerance))
    return Statistic(
        name=name,
        value=fraction,
        standard_error=float(np.sqrt(fraction * (1 - fraction) / count)),
        threshold=thresholds.min_fraction,
        passed=fraction >= thresholds.min_fraction,
        samples=count,
    )


def _node_at(trajectory: Trajectory, t: float) -> int:
    if isinstance(trajectory, DiscreteChain):
        return int(round(t))
    return int(np.searchsorted(trajectory.times, t * (1 + 1e-12), side="right")) - 1


def evolved_mean(generator: Superoperator, theta0: DensityMatrix, trajectory: Trajectory, node: int) -> ComplexMatrix:
    """Ensemble mean predicted at a node: T^n(theta0) for chains, T_t(theta0) for paths."""
    if isinstance(trajectory, DiscreteChain):
        return channel_power(generator, node).apply(theta0)
    return propagator(generator, float(trajectory.times[node])).apply(theta0)


def ergodic_report(
    ensemble: Sequence[Trajectory],
    projector: MeanProjector,
    theta0: DensityMatrix,
    thresholds: Optional[VerificationThresholds] = None,
    generator: Optional[Superoperator] = None,
    jumps: Optional[Sequence[Superoperator]] = None,
) -> EquilibriumReport:
    """Aggregate pathwise-convergence, mean-limit, residual and martingale statistics.

    For Kraus chains ``generator`` is the channel T and ``jumps`` is ignored.
    """
    if not ensemble:
        raise EmptyEnsembleError("Cannot report on an empty ensemble")
    thresholds = thresholds or VerificationThresholds()
    discrete = isinstance(ensemble[0], DiscreteChain)
    count = len(ensemble)
    horizon = float(ensemble[0].steps if discrete else ensemble[0].horizon)
    unraveling = "discrete" if discrete else ensemble[0].unraveling
    logger.info(f"Aggregating {count} {unraveling} trajectories (horizon {horizon:g})")

    space = equilibrium_basis(projector)
    target = projector.apply(theta0)
    statistics: List[Statistic] = []

    averages = [cesaro(c, c.steps) if discrete else time_average(c, c.horizon) for c in ensemble]
    limits = [theta_infinity(c, projector) for c in ensemble]
    distances = np.array([trace_distance(a, b) for a, b in zip(averages, limits)])
    statistics.append(_fraction_statistic("pathwise_convergence", distances, thresholds.distance_tolerance, thresholds))
    statistics.append(Statistic(name="median_distance", value=float(np.median(distances)), samples=count))

    limit_stack = np.array([limit.matrix for limit in limits]) - target
    statistics.append(_zero_mean_statistic("mean_theta_infinity", _real_components(limit_stack), thresholds))
    statistics.append(Statistic(
        name="mean_theta_infinity_distance",
        value=trace_distance(project_density(np.mean([limit.matrix for limit in limits], axis=0)), project_density(target)),
        samples=count,
    ))

    if discrete:
        if generator is not None:
            residuals = np.array([discrete_residual(c, generator, c.steps) for c in ensemble])
            statistics.append(_fraction_statistic("averaged_residual", residuals, thresholds.residual_tolerance, thresholds))
    elif generator is not None:
        residuals = np.array([averaged_generator_residual(p, generator, p.horizon) for p in ensemble])
        statistics.append(_fraction_statistic("averaged_residual", residuals, thresholds.residual_tolerance, thresholds))

    checkpoints = [t for t in thresholds.checkpoint_times if t <= horizon]
    projected = [projected_path(c, projector) for c in ensemble]
    p_theta0 = projector.apply(theta0)
    diagnostics = None
    martingales = None
    if not discrete and generator is not None:
        if unraveling == "jump" and jumps:
            diagnostics = [counting_diagnostics(p, generator, jumps) for p in ensemble]
            martingales = [d.martingale for d in diagnostics]
        else:
            martingales = [residual_martingale(p, generator) for p in ensemble]

    for t in checkpoints:
        nodes = [_node_at(c, t) for c in ensemble]
        increments = np.array([proj[node] for proj, node in zip(projected, nodes)]) - p_theta0
        statistics.append(_zero_mean_statistic(f"projected_martingale_t={t:g}", _real_components(increments), thresholds))

        if diagnostics is not None:
            compensated = np.array([d.compensated[d.index_at(t)] for d in diagnostics])
            for detector in range(compensated.shape[1]):
                statistics.append(_zero_mean_statistic(
                    f"compensated_counts_t={t:g}_detector={detector + 1}", compensated[:, detector], thresholds
                ))
        if martingales is not None:
            residual = np.array([m[node] for m, node in zip(martingales, nodes)])
            statistics.append(_zero_mean_statistic(f"residual_martingale_t={t:g}", _real_components(residual), thresholds))
        if generator is not None:
            # all trajectories of one run share the output grid
            expected = evolved_mean(generator, theta0, ensemble[0], nodes[0])
            mean = np.mean([c.states[node] for c, node in zip(ensemble, nodes)], axis=0)
            statistics.append(Statistic(
                name=f"mean_state_distance_t={t:g}",
                value=trace_distance(project_density(mean), project_density(expected)),
                samples=count,
            ))

    profile_times = [t for t in thresholds.profile_times if t <= horizon]
    if profile_times and not discrete:
        profiles = np.array([convergence_profile(p, projector, profile_times) for p in ensemble])
        medians = np.median(profiles, axis=0)
        for t, median in zip(profile_times, medians):
            statistics.append(Statistic(name=f"median_distance_t={t:g}", value=float(median), samples=count))
        increase = float(np.max(np.diff(medians))) if len(medians) > 1 else 0.0
        statistics.append(Statistic(
            name="profile_nonincreasing", value=max(0.0, increase), threshold=0.0, passed=increase <= 0.0, samples=count
        ))

    passed = all(entry.passed for entry in statistics if entry.passed is not None)
    report = EquilibriumReport(
        unraveling=unraveling,
        trajectories=count,
        horizon=horizon,
        projector_method=projector.method,
        spectral_gap=projector.spectral_gap,
        unique_equilibrium=space.unique,
        statistics=statistics,
        passed=passed,
    )
    logger.info(f"Report: passed={passed}, failures={[s.name for s in report.failures()]}")
    return report
