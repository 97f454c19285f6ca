"""
Seed derivation for reproducible Monte Carlo.

Every random draw belongs to a fixed-size block of paths. A block's generator is
seeded from (master seed, block index, stream tag), so results never depend on how
blocks are scheduled across workers.
"""
from enum import IntEnum
from typing import List, NamedTuple

import numpy as np

from app.config import settings


class StreamTag(IntEnum):
    """Independent randomness sources of one path block."""
    BROWNIAN = 0
    SIGNAL_MIN = 1
    SIGNAL_MAX = 2
    DEVIATION = 3


class Block(NamedTuple):
    index: int
    start: int
    count: int


def block_generator(master_seed: int, block: int, tag: int) -> np.random.Generator:
    return np.random.default_rng([int(master_seed), int(block), int(tag)])


def stream_generator(master_seed: int, stream_id: int) -> np.random.Generator:
    """Generator for a single signal stream; the stream id is mixed into the seed."""
    return np.random.default_rng([int(master_seed), int(stream_id)])


def block_layout(n_paths: int, block_size: int = None) -> List[Block]:
    size = block_size or settings.path_block_size
    blocks = []
    start = 0
    index = 0
    while start < n_paths:
        count = min(size, n_paths - start)
        blocks.append(Block(index, start, count))
        start += count
        index += 1
    return blocks
