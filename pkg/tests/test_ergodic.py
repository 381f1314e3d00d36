"""Tests for the mean projector, equilibrium space and ensemble report."""

import numpy as np
import pytest

from app.core import ergodic, jump
from app.core.config import settings
from app.core.diffusive import DiffusiveStepConfig
from app.core.diffusive import simulate as simulate_diffusive
from app.core.discrete import KrausModel, simulate_chain
from app.core.ergodic import (
    EmptyEnsembleError,
    HorizonError,
    convergence_profile,
    discrete_mean_projector,
    equilibrium_basis,
    ergodic_report,
    evolved_mean,
    mean_projector,
    projected_path,
    averaged_generator_residual,
    theta_infinity,
    time_average,
)
from app.core.model import LindbladModel, build_decomposition, build_generator, propagator
from app.core.numlin import DensityMatrix, Superoperator, trace_distance
from app.core.sampling import trajectory_stream
from app.models import VerificationThresholds

from .conftest import ZERO2, random_state

GROUND = DensityMatrix.basis(2, 0)
EXCITED = DensityMatrix.basis(2, 1)
PLUS = DensityMatrix.pure([1.0, 1.0])
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


def constant_path(rho: DensityMatrix, horizon: float = 2.0) -> jump.SampledPath:
    return jump.SampledPath.from_states([0.0, horizon / 2, horizon], [rho.matrix] * 3)


class TestMeanProjector:
    @pytest.mark.parametrize("method", ["spectral", "quadrature"])
    def test_amplitude_damping(self, amplitude_damping, rng, method):
        projector = mean_projector(build_generator(amplitude_damping), method)
        assert projector.method == method
        rho = random_state(rng, 2)
        assert np.allclose(projector.apply(rho), GROUND.matrix, atol=5e-3)

    def test_zero_generator_gives_identity(self, zero_model):
        projector = mean_projector(build_generator(zero_model))
        assert np.allclose(projector.projector.matrix, np.eye(4))
        assert projector.spectral_gap is None

    def test_dephasing_keeps_diagonal(self, dephasing):
        projector = mean_projector(build_generator(dephasing))
        rho = np.array([[0.3, 0.2 - 0.1j], [0.2 + 0.1j, 0.7]])
        assert np.allclose(projector.apply(rho), np.diag([0.3, 0.7]))
        assert projector.spectral_gap == pytest.approx(1.0)

    @pytest.mark.parametrize("fixture", ["amplitude_damping", "dephasing"])
    def test_methods_agree(self, fixture, request):
        generator = build_generator(request.getfixturevalue(fixture))
        spectral = mean_projector(generator, "spectral").projector.matrix
        quadrature = mean_projector(generator, "quadrature").projector.matrix
        assert np.max(np.abs(spectral - quadrature)) <= 5e-3

    def test_structural_properties_on_random_models(self, random_models, rng):
        for model in random_models:
            generator = build_generator(model)
            projector = mean_projector(generator)
            p = projector.projector.matrix
            assert np.max(np.abs(p @ p - p)) <= 1e-8
            for s in (0.3, 1.7):
                t_s = propagator(generator, s).matrix
                assert np.max(np.abs(p @ t_s - p)) <= 1e-8
                assert np.max(np.abs(t_s @ p - p)) <= 1e-8
            rho = random_state(rng, model.dim)
            assert abs(np.trace(projector.apply(rho)) - 1.0) <= 1e-9

    def test_methods_agree_on_gapped_random_models(self, random_models):
        checked = 0
        for model in random_models:
            generator = build_generator(model)
            spectral = mean_projector(generator, "spectral")
            if spectral.spectral_gap is None or spectral.spectral_gap < 0.5:
                continue
            quadrature = mean_projector(generator, "quadrature")
            bound = max(5e-3, 20.0 / (settings.quadrature_horizon * spectral.spectral_gap))
            assert np.max(np.abs(spectral.projector.matrix - quadrature.projector.matrix)) <= bound
            checked += 1
        assert checked > 0

    def test_near_defective_falls_back_to_quadrature(self, amplitude_damping, mocker):
        mocker.patch.object(settings, "eig_condition_limit", 0.5)
        projector = mean_projector(build_generator(amplitude_damping), "spectral")
        assert projector.method == "quadrature"

    def test_quadrature_residuals_above_tolerance_warn(self, amplitude_damping, mocker):
        mocker.patch.object(settings, "quadrature_horizon", 10.0)
        warning = mocker.patch.object(ergodic.logger, "warning")
        projector = mean_projector(build_generator(amplitude_damping), "quadrature")
        assert projector.idempotence_residual > settings.projector_tol
        warning.assert_called_once()

    def test_unknown_method(self, dephasing):
        with pytest.raises(ValueError):
            mean_projector(build_generator(dephasing), "power")


class TestDiscreteProjector:
    def test_projective_pair(self, projective_pair):
        channel = projective_pair.channel()
        spectral = discrete_mean_projector(channel, "spectral")
        assert np.allclose(spectral.projector.matrix, channel.matrix)
        averaged = discrete_mean_projector(channel, "cesaro")
        assert np.max(np.abs(averaged.projector.matrix - channel.matrix)) <= 1e-4

    def test_peripheral_eigenvalue_averages_out(self):
        flip = KrausModel((SIGMA_X,)).channel()
        projector = discrete_mean_projector(flip)
        assert np.allclose(projector.apply(GROUND), np.eye(2) / 2)
        space = equilibrium_basis(projector)
        assert not space.unique
        assert space.dimension == 2

    def test_cesaro_power_average(self, mocker):
        mocker.patch.object(settings, "cesaro_steps", 7)
        rotating = Superoperator(np.diag(np.exp(1j * np.array([0.0, 0.4, -0.4, 0.0]))), 2)
        expected = sum(np.linalg.matrix_power(rotating.matrix, n) for n in range(7)) / 7
        projector = discrete_mean_projector(rotating, "cesaro")
        assert np.allclose(projector.projector.matrix, expected)


class TestEquilibriumBasis:
    def test_unique(self, amplitude_damping):
        space = equilibrium_basis(mean_projector(build_generator(amplitude_damping)))
        assert space.unique
        assert space.dimension == 1
        assert np.allclose(space.states[0].matrix, GROUND.matrix)

    def test_dephasing(self, dephasing):
        space = equilibrium_basis(mean_projector(build_generator(dephasing)))
        assert not space.unique
        assert space.dimension == 2
        for state in space.states:
            assert np.allclose(state.matrix, np.diag(np.diag(state.matrix)))

    def test_full_space(self, zero_model):
        space = equilibrium_basis(mean_projector(build_generator(zero_model)))
        assert not space.unique
        assert space.dimension == 4
        assert len(space.states) == 4


class TestTimeAverages:
    def test_constant_path(self):
        assert np.allclose(time_average(constant_path(PLUS), 2.0).matrix, PLUS.matrix)

    def test_two_segment_path(self):
        path = jump.SampledPath(
            times=[0.0, 1.0, 2.0],
            states=[GROUND.matrix, EXCITED.matrix, EXCITED.matrix],
            left_states=[GROUND.matrix, GROUND.matrix, EXCITED.matrix],
        )
        assert np.allclose(time_average(path, 2.0).matrix, np.eye(2) / 2)

    def test_at_time_zero(self):
        assert np.allclose(time_average(constant_path(PLUS), 0.0).matrix, PLUS.matrix)

    def test_beyond_horizon(self):
        with pytest.raises(HorizonError):
            time_average(constant_path(PLUS), 3.0)


class TestThetaInfinity:
    def test_unique_equilibrium(self, amplitude_damping):
        projector = mean_projector(build_generator(amplitude_damping))
        assert np.allclose(theta_infinity(constant_path(PLUS), projector).matrix, GROUND.matrix)

    def test_absorbed_dephasing_path(self, dephasing):
        projector = mean_projector(build_generator(dephasing))
        assert np.allclose(theta_infinity(constant_path(EXCITED), projector).matrix, EXCITED.matrix)

    def test_initial_value(self, dephasing):
        projector = mean_projector(build_generator(dephasing))
        path = jump.SampledPath.from_states([0.0], [PLUS.matrix])
        assert np.allclose(theta_infinity(path, projector).matrix, np.eye(2) / 2)

    def test_projected_path(self, dephasing):
        projector = mean_projector(build_generator(dephasing))
        projected = projected_path(constant_path(PLUS), projector)
        assert projected.shape == (3, 2, 2)
        assert np.allclose(projected, np.eye(2) / 2)


class TestResidual:
    def test_equilibrium_path(self, amplitude_damping):
        generator = build_generator(amplitude_damping)
        assert averaged_generator_residual(constant_path(GROUND, 10.0), generator, 10.0) <= 1e-12

    def test_unitary_orbit_telescopes(self):
        model = LindbladModel(SIGMA_X, (ZERO2,))
        generator = build_generator(model)
        times = np.linspace(0.0, 10.0, 10_001)
        states = [propagator(generator, t).apply(GROUND) for t in times]
        path = jump.SampledPath.from_states(times, states)
        expected = np.linalg.norm((states[-1] - states[0]) / 10.0, 2)
        assert averaged_generator_residual(path, generator, 10.0) == pytest.approx(expected, abs=1e-4)

    def test_needs_positive_time(self, amplitude_damping):
        with pytest.raises(HorizonError):
            averaged_generator_residual(constant_path(GROUND), build_generator(amplitude_damping), 0.0)


def damping_paths(model, count: int, horizon: float, seed: int = 99):
    decomposition = build_decomposition(model)
    return decomposition, [
        jump.simulate(decomposition, EXCITED, horizon, 0.5, trajectory_stream(seed, i)) for i in range(count)
    ]


def test_convergence_profile_of_damping_path(amplitude_damping):
    decomposition, (path,) = damping_paths(amplitude_damping, 1, 100.0)
    projector = mean_projector(decomposition.generator)
    profile = convergence_profile(path, projector, [25.0, 50.0, 100.0])
    assert np.all(np.diff(profile) <= 1e-12)
    assert profile[-1] == pytest.approx(trace_distance(time_average(path, 100.0), GROUND))


class TestEvolvedMean:
    def test_path_node_uses_propagator(self, amplitude_damping):
        decomposition, (path,) = damping_paths(amplitude_damping, 1, 2.0)
        node = int(np.argmin(np.abs(path.times - 1.5)))
        expected = propagator(decomposition.generator, 1.5).apply(EXCITED)
        assert path.times[node] == pytest.approx(1.5)
        assert np.allclose(evolved_mean(decomposition.generator, EXCITED, path, node), expected)

    def test_chain_node_uses_channel_power(self, projective_pair):
        chain = simulate_chain(projective_pair, PLUS, 4, 0)
        channel = projective_pair.channel()
        assert np.allclose(evolved_mean(channel, PLUS, chain, 0), PLUS.matrix)
        assert np.allclose(evolved_mean(channel, PLUS, chain, 4), np.eye(2) / 2)


class TestReport:
    def test_amplitude_damping_ensemble(self, amplitude_damping):
        decomposition, paths = damping_paths(amplitude_damping, 40, 200.0)
        projector = mean_projector(decomposition.generator)
        thresholds = VerificationThresholds(z_max=4.0, profile_times=[50.0, 100.0, 200.0])
        report = ergodic_report(paths, projector, EXCITED, thresholds, decomposition.generator, decomposition.jumps)
        assert report.unique_equilibrium
        assert report.trajectories == 40
        assert report.statistic("pathwise_convergence").value >= 0.95
        assert report.statistic("mean_theta_infinity").value == 0.0
        assert report.statistic("averaged_residual").passed
        assert report.statistic("compensated_counts_t=1_detector=1").samples == 40
        assert report.statistic("profile_nonincreasing").passed
        assert report.passed

    def test_single_path(self, amplitude_damping):
        decomposition, paths = damping_paths(amplitude_damping, 1, 50.0)
        projector = mean_projector(decomposition.generator)
        report = ergodic_report(paths, projector, EXCITED, None, decomposition.generator, decomposition.jumps)
        assert report.statistic("projected_martingale_t=1").passed is None
        assert report.statistic("pathwise_convergence").samples == 1

    def test_strict_thresholds_fail_on_short_horizon(self, dephasing):
        decomposition = build_decomposition(dephasing)
        paths = [jump.simulate(decomposition, PLUS, 1.0, 0.1, trajectory_stream(5, i)) for i in range(10)]
        projector = mean_projector(decomposition.generator)
        thresholds = VerificationThresholds(distance_tolerance=1e-3, min_fraction=1.0)
        report = ergodic_report(paths, projector, PLUS, thresholds, decomposition.generator, decomposition.jumps)
        assert not report.passed
        assert "pathwise_convergence" in [s.name for s in report.failures()]

    def test_discrete_chains(self, projective_pair):
        chains = [simulate_chain(projective_pair, PLUS, 100, trajectory_stream(12, i)) for i in range(100)]
        channel = projective_pair.channel()
        projector = discrete_mean_projector(channel)
        thresholds = VerificationThresholds(z_max=4.0, checkpoint_times=[1.0, 10.0])
        report = ergodic_report(chains, projector, PLUS, thresholds, channel)
        assert report.unraveling == "discrete"
        assert not report.unique_equilibrium
        assert report.statistic("pathwise_convergence").value == 1.0
        assert report.statistic("averaged_residual").passed
        assert report.statistic("mean_theta_infinity").passed
        assert "projected_martingale_t=10" in [s.name for s in report.statistics]
        assert report.statistic("mean_state_distance_t=1").passed is None
        assert report.statistic("mean_state_distance_t=1").value <= 0.2

    def test_diffusive_ensemble_tests_residual_martingale(self, amplitude_damping):
        config = DiffusiveStepConfig(dt=0.01, grid_step=0.05)
        paths = [simulate_diffusive(amplitude_damping, EXCITED, 5.0, config, trajectory_stream(8, i)) for i in range(20)]
        generator = build_generator(amplitude_damping)
        report = ergodic_report(paths, mean_projector(generator), EXCITED, None, generator)
        names = [s.name for s in report.statistics]
        assert report.unraveling == "diffusive"
        assert report.statistic("residual_martingale_t=1").samples == 20
        assert report.statistic("residual_martingale_t=5").standard_error is not None
        assert not any(name.startswith("compensated_counts") for name in names)
        assert report.statistic("mean_state_distance_t=5").value <= 0.2

    def test_empty_ensemble(self, amplitude_damping):
        projector = mean_projector(build_generator(amplitude_damping))
        with pytest.raises(EmptyEnsembleError):
            ergodic_report([], projector, EXCITED)

    def test_report_serializes(self, amplitude_damping):
        decomposition, paths = damping_paths(amplitude_damping, 3, 20.0)
        projector = mean_projector(decomposition.generator)
        report = ergodic_report(paths, projector, EXCITED, None, decomposition.generator, decomposition.jumps)
        data = report.model_dump(mode="json")
        assert set(data["statistics"][0]) == {"name", "value", "standard_error", "threshold", "passed", "samples"}


@pytest.mark.slow
class TestAcceptance:
    def test_unique_equilibrium_time_averages(self, amplitude_damping):
        decomposition, paths = damping_paths(amplitude_damping, 100, 200.0, seed=2025)
        close = sum(trace_distance(time_average(p, 200.0), GROUND) <= 0.05 for p in paths)
        residuals = [averaged_generator_residual(p, decomposition.generator, 200.0) for p in paths]
        assert close >= 95
        assert sum(r <= 0.05 for r in residuals) >= 95

    def test_multiple_equilibria(self, dephasing):
        decomposition = build_decomposition(dephasing)
        projector = mean_projector(decomposition.generator)
        paths = [jump.simulate(decomposition, PLUS, 50.0, 0.05, trajectory_stream(31, i)) for i in range(1000)]
        report = ergodic_report(paths, projector, PLUS, VerificationThresholds(),
                                decomposition.generator, decomposition.jumps)
        assert report.statistic("pathwise_convergence").passed
        assert report.statistic("mean_theta_infinity").passed

    def test_martingales(self, amplitude_damping):
        decomposition, paths = damping_paths(amplitude_damping, 2000, 5.0, seed=4242)
        projector = mean_projector(decomposition.generator)
        report = ergodic_report(paths, projector, EXCITED, VerificationThresholds(checkpoint_times=[1.0, 5.0]),
                                decomposition.generator, decomposition.jumps)
        for t in ("1", "5"):
            assert report.statistic(f"compensated_counts_t={t}_detector=1").passed
            assert report.statistic(f"projected_martingale_t={t}").passed
