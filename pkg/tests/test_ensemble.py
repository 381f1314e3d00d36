"""Tests for seeded ensembles and worker independence."""

import pickle

import numpy as np
import pytest

from app.core.discrete import KrausModel
from app.core.ensemble import TrajectoryFailure, discrete_runner, jump_runner, run_ensemble, run_trajectory
from app.core.model import build_decomposition
from app.core.numlin import DensityMatrix
from app.core.sampling import make_rng, sample_index, trajectory_stream

from .conftest import P0, P1

PLUS = DensityMatrix.pure([1.0, 1.0])


def failing_runner(stream):
    raise RuntimeError("boom")


class TestStreams:
    def test_streams_depend_on_seed_and_index(self):
        draws = [make_rng(trajectory_stream(1, i)).random() for i in range(3)]
        assert len(set(draws)) == 3
        assert make_rng(trajectory_stream(1, 2)).random() == draws[2]
        assert make_rng(trajectory_stream(2, 2)).random() != draws[2]

    def test_negative_seed(self):
        with pytest.raises(ValueError):
            trajectory_stream(-1, 0)

    def test_sample_index_skips_zero_weights(self):
        assert sample_index([0.0, 1.0, 0.0], 0.0) == 1
        assert sample_index([0.0, 1.0, 0.0], 0.999999) == 1
        assert sample_index([0.5, 0.5], 0.25) == 0
        assert sample_index([0.5, 0.5], 0.75) == 1


def test_failure_carries_index_and_seed():
    with pytest.raises(TrajectoryFailure) as excinfo:
        run_trajectory(failing_runner, 17, 4)
    assert excinfo.value.index == 4
    assert excinfo.value.seed == 17
    assert "RuntimeError: boom" in str(excinfo.value)


def test_failure_survives_pickling():
    failure = TrajectoryFailure(3, 9, "EigenvalueGuardError: step too large")
    restored = pickle.loads(pickle.dumps(failure))
    assert (restored.index, restored.seed, restored.reason) == (3, 9, failure.reason)


@pytest.mark.asyncio
async def test_inline_ensemble_is_ordered(projective_pair):
    runner = discrete_runner(projective_pair, PLUS, 5)
    chains = await run_ensemble(runner, 4, seed=11, workers=1)
    for index, chain in enumerate(chains):
        expected = runner(trajectory_stream(11, index))
        assert np.array_equal(chain.outcomes, expected.outcomes)


@pytest.mark.asyncio
async def test_worker_count_does_not_change_results(dephasing):
    runner = jump_runner(build_decomposition(dephasing), PLUS, 5.0, 0.5)
    inline = await run_ensemble(runner, 6, seed=5, workers=1)
    pooled = await run_ensemble(runner, 6, seed=5, workers=4)
    for a, b in zip(inline, pooled):
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.states, b.states)


@pytest.mark.asyncio
async def test_pool_failure_is_wrapped():
    with pytest.raises(TrajectoryFailure) as excinfo:
        await run_ensemble(failing_runner, 2, seed=3, workers=2)
    assert excinfo.value.seed == 3


@pytest.mark.asyncio
async def test_ensemble_needs_trajectories():
    with pytest.raises(ValueError):
        await run_ensemble(discrete_runner(KrausModel((P0, P1)), PLUS, 1), 0, seed=0)
