"""Random streams and discrete draws shared by the simulators.

Every trajectory owns a numpy ``Generator`` (PCG64, 64-bit state) seeded from
``SeedSequence(seed, spawn_key=(index,))``, so a trajectory's randomness depends only
on the run seed and its index, never on worker scheduling.
"""

from typing import Union

import numpy as np
import numpy.typing as npt

Seed = Union[int, np.random.SeedSequence]


def trajectory_stream(seed: int, index: int) -> np.random.SeedSequence:
    """Independent stream for trajectory ``index`` of a run seeded with ``seed``."""
    if seed < 0 or index < 0:
        raise ValueError("Seed and trajectory index must be non-negative")
    return np.random.SeedSequence(entropy=seed, spawn_key=(index,))


def make_rng(seed: Seed) -> np.random.Generator:
    """PCG64 generator for an integer seed or a SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=int(seed))))


def open_unit_draw(rng: np.random.Generator) -> float:
    """Uniform draw from the open interval (0, 1)."""
    while True:
        u = float(rng.random())
        if u > 0.0:
            return u


def sample_index(probabilities: npt.ArrayLike, u: float) -> int:
    """Inverse-CDF draw; zero-probability entries are never selected for u in [0, 1)."""
    weights = np.asarray(probabilities, dtype=float).tolist()
    threshold = u * sum(weights)
    cumulative = 0.0
    index = len(weights) - 1
    for position, weight in enumerate(weights):
        cumulative += weight
        if cumulative > threshold:
            index = position
            break
    # u * total can round onto the last cumulative value
    while weights[index] <= 0.0:
        index -= 1
    return index
