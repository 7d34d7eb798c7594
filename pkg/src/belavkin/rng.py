"""Deterministic per-trajectory random streams.

Trajectory ``i`` of a run with master seed ``s`` draws from a Philox4x64-10
counter-based generator keyed by ``(i << 64) | s``. Streams are therefore
independent of how trajectories are distributed over workers.
"""

import numpy as np

from .errors import InvalidInputError

RNG_ALGORITHM = "philox4x64-10 key=(index<<64)|seed, numpy.random.Generator"
_MASK64 = (1 << 64) - 1


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed <= _MASK64:
        raise InvalidInputError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def trajectory_stream(seed: int, index: int) -> np.random.Generator:
    """Generator for trajectory ``index`` under master ``seed``."""
    seed = check_seed(seed)
    if index < 0 or index > _MASK64:
        raise InvalidInputError(f"trajectory index out of range: {index}")
    return np.random.Generator(np.random.Philox(key=(int(index) << 64) | seed))


def block_streams(seed: int, start: int, stop: int):
    return [trajectory_stream(seed, i) for i in range(start, stop)]
