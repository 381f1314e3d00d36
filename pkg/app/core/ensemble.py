"""Seeded trajectory ensembles fanned out over a process pool."""

import asyncio
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Callable, List, Optional, TypeVar

import numpy as np

from . import diffusive, discrete, jump
from .config import settings
from .logger import get_logger
from .model import LindbladModel, UnravelingDecomposition
from .numlin import DensityMatrix
from .sampling import trajectory_stream

logger = get_logger(__name__)

T = TypeVar("T")
TrajectoryRunner = Callable[[np.random.SeedSequence], T]


class TrajectoryFailure(Exception):
    """A trajectory aborted; carries what is needed to replay it."""

    def __init__(self, index: int, seed: int, reason: str):
        super().__init__(index, seed, reason)
        self.index = index
        self.seed = seed
        self.reason = reason

    def __str__(self) -> str:
        return f"Trajectory {self.index} (seed {self.seed}) failed: {self.reason}"


def run_trajectory(runner: TrajectoryRunner, seed: int, index: int) -> T:
    """Run one trajectory on its own stream, wrapping any failure."""
    try:
        return runner(trajectory_stream(seed, index))
    except Exception as e:
        raise TrajectoryFailure(index, seed, f"{type(e).__name__}: {e}") from e


async def run_ensemble(
    runner: TrajectoryRunner, count: int, seed: int, workers: Optional[int] = None
) -> List[T]:
    """Trajectories 0..count-1 in index order; results do not depend on ``workers``."""
    if count < 1:
        raise ValueError("Ensemble needs at least one trajectory")
    workers = workers or settings.default_workers
    logger.info(f"Running {count} trajectories (seed {seed}, workers {workers})")

    if workers == 1:
        results = [run_trajectory(runner, seed, index) for index in range(count)]
    else:
        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                loop.run_in_executor(pool, run_trajectory, runner, seed, index)
                for index in range(count)
            ]
            results = list(await asyncio.gather(*futures))

    logger.info(f"Finished {count} trajectories")
    return results


def _jump_trajectory(
    decomposition: UnravelingDecomposition,
    theta0: DensityMatrix,
    horizon: float,
    grid_step: float,
    stream: np.random.SeedSequence,
) -> jump.SampledPath:
    return jump.simulate(decomposition, theta0, horizon, grid_step, stream)


def _diffusive_trajectory(
    model: LindbladModel,
    theta0: DensityMatrix,
    horizon: float,
    config: diffusive.DiffusiveStepConfig,
    stream: np.random.SeedSequence,
) -> jump.SampledPath:
    return diffusive.simulate(model, theta0, horizon, config, stream)


def _discrete_trajectory(
    model: discrete.KrausModel,
    theta0: DensityMatrix,
    steps: int,
    stream: np.random.SeedSequence,
) -> discrete.DiscreteChain:
    return discrete.simulate_chain(model, theta0, steps, stream)


def jump_runner(
    decomposition: UnravelingDecomposition, theta0: DensityMatrix, horizon: float, grid_step: float
) -> TrajectoryRunner:
    """Picklable runner for jump trajectories."""
    return partial(_jump_trajectory, decomposition, theta0, horizon, grid_step)


def diffusive_runner(
    model: LindbladModel, theta0: DensityMatrix, horizon: float, config: diffusive.DiffusiveStepConfig
) -> TrajectoryRunner:
    """Picklable runner for diffusive trajectories."""
    return partial(_diffusive_trajectory, model, theta0, horizon, config)


def discrete_runner(model: discrete.KrausModel, theta0: DensityMatrix, steps: int) -> TrajectoryRunner:
    """Picklable runner for Kraus chains."""
    return partial(_discrete_trajectory, model, theta0, steps)
