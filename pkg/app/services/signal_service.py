"""
Poisson signal streams: sampling, merging and index lookups.
"""
import logging
import math
from typing import Sequence, Tuple

import numpy as np

from app.core.exceptions import ParameterError, StreamTruncatedError
from app.models.enums import Label
from app.models.signals import SENTINEL_TIME, MergedSequence, SignalStream
from app.utils.report_writer import ReportWriter
from app.utils.rng import Block, StreamTag, block_generator, stream_generator
from app.utils.simulation import run_blocks

logger = logging.getLogger(__name__)


class SignalService:
    """
    Sampling and bookkeeping for the two players' signal streams.

    A sampled stream keeps exactly one arrival past its horizon cap so that the
    first arrival after the horizon always exists.
    """

    @staticmethod
    def _chunk_size(intensity: float, horizon: float) -> int:
        mean = intensity * horizon
        return int(mean + 6.0 * math.sqrt(mean) + 8)

    @classmethod
    def sample_stream(
        cls,
        intensity: float,
        horizon_cap: float,
        rng_seed: int,
        stream_id: int = Label.MIN_PLAYER,
    ) -> SignalStream:
        if intensity < 0 or not math.isfinite(intensity):
            raise ParameterError(f"intensity must be >= 0, got {intensity!r}")
        if horizon_cap <= 0:
            raise ParameterError(f"horizon_cap must be > 0, got {horizon_cap!r}")

        if intensity == 0:
            arrivals = np.array([SENTINEL_TIME])
        else:
            gen = stream_generator(rng_seed, int(stream_id))
            chunk = cls._chunk_size(intensity, horizon_cap)
            arrivals = np.cumsum(gen.exponential(1.0 / intensity, chunk))
            while arrivals[-1] <= horizon_cap:
                more = arrivals[-1] + np.cumsum(gen.exponential(1.0 / intensity, chunk))
                arrivals = np.concatenate([arrivals, more])
            past_cap = int(np.searchsorted(arrivals, horizon_cap, side="right"))
            arrivals = arrivals[: past_cap + 1]

        logger.debug(f"Sampled stream {int(stream_id)}: {arrivals.size} arrivals, lambda={intensity}")
        return SignalStream(
            stream_id=Label(stream_id), intensity=intensity, arrivals=arrivals, horizon_cap=horizon_cap
        )

    @classmethod
    def sample_arrival_matrix(
        cls,
        intensity: float,
        horizon: float,
        gen: np.random.Generator,
        n_paths: int,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Arrival times for a block of paths.

        Returns (arrivals, cap_column): row i holds that path's arrivals up to and
        including the first one strictly after `horizon`, padded with the sentinel;
        cap_column[i] is the 0-based column of that first post-horizon arrival.
        """
        if intensity < 0:
            raise ParameterError(f"intensity must be >= 0, got {intensity!r}")
        if intensity == 0:
            return np.full((n_paths, 1), SENTINEL_TIME), np.zeros(n_paths, dtype=int)

        chunk = cls._chunk_size(intensity, horizon)
        arrivals = np.cumsum(gen.exponential(1.0 / intensity, (n_paths, chunk)), axis=1)
        while np.any(arrivals[:, -1] <= horizon):
            more = arrivals[:, -1:] + np.cumsum(gen.exponential(1.0 / intensity, (n_paths, chunk)), axis=1)
            arrivals = np.hstack([arrivals, more])

        cap_column = np.argmax(arrivals > horizon, axis=1)
        columns = np.arange(arrivals.shape[1])
        arrivals = np.where(columns[None, :] > cap_column[:, None], SENTINEL_TIME, arrivals)
        return arrivals[:, : int(cap_column.max()) + 1], cap_column

    @staticmethod
    def merge(s1: SignalStream, s2: SignalStream) -> MergedSequence:
        """Two-way merge with labels; on equal times the max player's signal comes first."""
        t1 = s1.finite_arrivals
        t2 = s2.finite_arrivals
        times = np.concatenate([t1, t2])
        labels = np.concatenate([
            np.full(t1.size, int(Label.MIN_PLAYER), dtype=int),
            np.full(t2.size, int(Label.MAX_PLAYER), dtype=int),
        ])
        tie_rank = (labels != int(Label.MAX_PLAYER)).astype(int)
        order = np.lexsort((tie_rank, times))
        return MergedSequence(times=times[order], labels=labels[order])

    @staticmethod
    def next_arrival(s: SignalStream, t: float) -> float:
        """First arrival strictly after t, or the sentinel."""
        if t < 0:
            raise ParameterError(f"time must be >= 0, got {t!r}")
        idx = int(np.searchsorted(s.arrivals, t, side="right"))
        if idx >= s.arrivals.size:
            return SENTINEL_TIME
        return float(s.arrivals[idx])

    @staticmethod
    def m_index(s: SignalStream, T: float) -> int:
        """The 1-based n with T_{n−1} ≤ T < T_n (T₀ = 0)."""
        if T < 0:
            raise ParameterError(f"horizon must be >= 0, got {T!r}")
        idx = int(np.searchsorted(s.arrivals, T, side="right"))
        if idx >= s.arrivals.size:
            last = float(s.arrivals[-1]) if s.arrivals.size else 0.0
            raise StreamTruncatedError(T, last)
        return idx + 1

    @classmethod
    def waiting_times(
        cls,
        intensity: float,
        horizon: float,
        times: Sequence[float],
        n_paths: int,
        rng_seed: int,
        stream_id: int,
        jobs: int = 1,
    ) -> np.ndarray:
        """
        Wait from each of `times` to the next signal, one row per sampled stream.

        Streams are drawn per path block from the same generators as the game
        simulations; every time must lie in [0, horizon).
        """
        points = np.asarray(times, dtype=float)
        if points.size == 0 or np.any(points < 0.0) or np.any(points >= horizon):
            raise ParameterError(f"waiting times need times in [0, {horizon}), got {list(times)}")
        tag = StreamTag.SIGNAL_MIN if Label(stream_id) == Label.MIN_PLAYER else StreamTag.SIGNAL_MAX

        def task(block: Block) -> np.ndarray:
            arrivals, caps = cls.sample_arrival_matrix(
                intensity, horizon, block_generator(rng_seed, block.index, tag), block.count
            )
            rows = np.empty((block.count, points.size))
            for i in range(block.count):
                stream = SignalStream.from_times(stream_id, arrivals[i, : caps[i] + 1], intensity, horizon)
                rows[i] = [cls.next_arrival(stream, t) - t for t in points]
            return rows

        return np.concatenate(run_blocks(task, n_paths, jobs), axis=0)

    @classmethod
    def write_streams_csv(cls, path: str, s1: SignalStream, s2: SignalStream) -> str:
        merged = cls.merge(s1, s2)
        return ReportWriter.write_csv(path, ["time", "label"], merged.events)


# Create instance for easy import
signal_service = SignalService()
