"""
Euler simulation of state paths and block fan-out across workers.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, TypeVar

import numpy as np

from app.models.surface import MarkovModel
from app.utils.rng import Block, StreamTag, block_generator, block_layout

logger = logging.getLogger(__name__)

T = TypeVar("T")


def euler_paths(model: MarkovModel, times: np.ndarray, n_paths: int, gen: np.random.Generator) -> np.ndarray:
    """
    Euler-Maruyama paths on `times`.

    Shape is (n_paths, n_times) in one dimension and (n_paths, n_times, d) otherwise;
    coordinates are driven by independent Brownian motions.
    """
    d = model.dimension
    shape = (n_paths,) if d == 1 else (n_paths, d)
    x = np.array(np.broadcast_to(model.initial_state, shape), dtype=float)
    paths = np.empty((n_paths, times.size) + shape[1:])
    paths[:, 0] = x
    for k in range(times.size - 1):
        dt = times[k + 1] - times[k]
        mu = np.broadcast_to(np.asarray(model.drift(times[k], x), dtype=float), shape)
        sig = np.broadcast_to(np.asarray(model.volatility(times[k], x), dtype=float), shape)
        dw = gen.standard_normal(shape) * np.sqrt(dt)
        x = x + mu * dt + sig * dw
        paths[:, k + 1] = x
    return paths


def run_blocks(task: Callable[[Block], T], n_paths: int, jobs: int = 1, block_size: int = None) -> List[T]:
    """Apply `task` to every path block; results come back in block order."""
    blocks = block_layout(n_paths, block_size)
    if jobs <= 1 or len(blocks) == 1:
        return [task(block) for block in blocks]
    logger.debug(f"Running {len(blocks)} blocks on {jobs} workers")
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(task, blocks))


def simulate_states(
    model: MarkovModel,
    times: np.ndarray,
    n_paths: int,
    seed: int,
    jobs: int = 1,
    block_size: int = None,
) -> np.ndarray:
    def task(block: Block) -> np.ndarray:
        gen = block_generator(seed, block.index, StreamTag.BROWNIAN)
        return euler_paths(model, times, block.count, gen)

    return np.concatenate(run_blocks(task, n_paths, jobs, block_size), axis=0)
