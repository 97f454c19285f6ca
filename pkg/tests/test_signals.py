"""
Test cases for Poisson signal streams.
"""
import csv

import numpy as np
import pytest
from scipy import stats

from app.core.exceptions import ParameterError, StreamTruncatedError
from app.models.enums import Label
from app.models.signals import SENTINEL_TIME, SignalStream
from app.services.signal_service import signal_service


class TestSampleStream:
    """Test sampling of one stream."""

    def test_reproducible(self):
        """Test the same seed and stream id give the same arrivals."""
        a = signal_service.sample_stream(2.0, 5.0, rng_seed=11)
        b = signal_service.sample_stream(2.0, 5.0, rng_seed=11)
        np.testing.assert_array_equal(a.arrivals, b.arrivals)

    def test_stream_id_changes_draws(self):
        """Test the two labels draw from different generators."""
        a = signal_service.sample_stream(2.0, 5.0, rng_seed=11, stream_id=Label.MIN_PLAYER)
        b = signal_service.sample_stream(2.0, 5.0, rng_seed=11, stream_id=Label.MAX_PLAYER)
        assert a.arrivals[0] != b.arrivals[0]

    def test_one_arrival_past_cap(self):
        """Test exactly one arrival lies beyond the horizon cap."""
        s = signal_service.sample_stream(3.0, 10.0, rng_seed=5)
        assert s.arrivals[-1] > 10.0
        assert s.arrivals[-2] <= 10.0
        assert np.all(np.diff(s.arrivals) > 0.0)

    def test_zero_intensity_never_signals(self):
        """Test λ = 0 yields the sentinel only."""
        s = signal_service.sample_stream(0.0, 1.0, rng_seed=1)
        assert s.arrivals.tolist() == [SENTINEL_TIME]
        assert s.finite_arrivals.size == 0

    def test_invalid_parameters(self):
        """Test negative intensity and non-positive cap are refused."""
        with pytest.raises(ParameterError):
            signal_service.sample_stream(-1.0, 1.0, rng_seed=1)
        with pytest.raises(ParameterError):
            signal_service.sample_stream(1.0, 0.0, rng_seed=1)

    def test_interarrival_distribution(self):
        """Test gaps are exponential with mean 1/λ."""
        s = signal_service.sample_stream(4.0, 500.0, rng_seed=2024)
        gaps = np.diff(np.concatenate([[0.0], s.arrivals]))
        result = stats.kstest(gaps, "expon", args=(0.0, 0.25))
        assert result.pvalue > 1e-3


class TestStreamLookups:
    """Test next_arrival and m_index."""

    def setup_method(self):
        """Setup a hand-written stream."""
        self.stream = SignalStream.from_times(1, [0.5, 1.2, 3.0], intensity=1.0, horizon_cap=2.0)

    def test_next_arrival(self):
        """Test the first arrival strictly after t."""
        assert signal_service.next_arrival(self.stream, 0.0) == 0.5
        assert signal_service.next_arrival(self.stream, 0.5) == 1.2
        assert signal_service.next_arrival(self.stream, 3.0) == SENTINEL_TIME
        with pytest.raises(ParameterError):
            signal_service.next_arrival(self.stream, -1.0)

    def test_m_index(self):
        """Test T_{M−1} ≤ T < T_M."""
        assert signal_service.m_index(self.stream, 0.2) == 1
        assert signal_service.m_index(self.stream, 0.5) == 2
        assert signal_service.m_index(self.stream, 1.0) == 2
        assert signal_service.m_index(self.stream, 2.9) == 3

    def test_m_index_truncated(self):
        """Test a stream ending before the horizon raises StreamTruncatedError."""
        with pytest.raises(StreamTruncatedError):
            signal_service.m_index(self.stream, 3.5)

    def test_sentinel_stream(self):
        """Test a never-signalling stream has M = 1 for any horizon."""
        never = signal_service.sample_stream(0.0, 1.0, rng_seed=0)
        assert signal_service.m_index(never, 1e6) == 1

    def test_unsorted_arrivals_rejected(self):
        """Test arrivals must be positive and increasing."""
        with pytest.raises(ValueError):
            SignalStream.from_times(1, [1.0, 0.5])
        with pytest.raises(ValueError):
            SignalStream.from_times(1, [0.0, 0.5])


class TestMerge:
    """Test the merged intervention sequence."""

    N_SAMPLES = 10_000
    SIGNIFICANCE = 1e-3

    def test_tie_puts_max_player_first(self):
        """Test equal arrival times order label 2 before label 1."""
        s1 = SignalStream.from_times(1, [1.0, 2.0])
        s2 = SignalStream.from_times(2, [1.0])
        merged = signal_service.merge(s1, s2)
        assert merged.events == [(1.0, 2), (1.0, 1), (2.0, 1)]

    def test_sentinels_are_dropped(self):
        """Test a never-signalling stream contributes no events."""
        s1 = signal_service.sample_stream(0.0, 1.0, rng_seed=0)
        s2 = SignalStream.from_times(2, [0.3, 0.9])
        merged = signal_service.merge(s1, s2)
        assert merged.events == [(0.3, 2), (0.9, 2)]

    def binned_exponential_chisquare(self, gaps: np.ndarray, rate: float, n_bins: int = 20):
        """Chi-square of gap counts over equal-probability bins of Exp(rate)."""
        inner_edges = stats.expon.ppf(np.linspace(0.0, 1.0, n_bins + 1)[1:-1], scale=1.0 / rate)
        counts = np.bincount(np.searchsorted(inner_edges, gaps, side="right"), minlength=n_bins)
        return stats.chisquare(counts, np.full(n_bins, gaps.size / n_bins))

    def test_superposition(self):
        """Test the merged inter-arrival times are Exp(λ1 + λ2)."""
        s1 = signal_service.sample_stream(1.0, 4000.0, rng_seed=77, stream_id=1)
        s2 = signal_service.sample_stream(2.0, 4000.0, rng_seed=77, stream_id=2)
        merged = signal_service.merge(s1, s2)
        inside = merged.times[merged.times <= 4000.0]
        gaps = np.diff(np.concatenate([[0.0], inside]))[: self.N_SAMPLES]
        assert gaps.size == self.N_SAMPLES
        assert self.binned_exponential_chisquare(gaps, 3.0).pvalue > self.SIGNIFICANCE

    def test_thinning(self):
        """Test merged labels are i.i.d. with P(label 1) = λ1/(λ1+λ2)."""
        s1 = signal_service.sample_stream(1.0, 12000.0, rng_seed=78, stream_id=1)
        s2 = signal_service.sample_stream(2.0, 12000.0, rng_seed=78, stream_id=2)
        merged = signal_service.merge(s1, s2)
        labels = merged.labels[merged.times <= 12000.0]

        first = labels[: self.N_SAMPLES]
        counts = [np.count_nonzero(first == 1), np.count_nonzero(first == 2)]
        expected = [self.N_SAMPLES / 3.0, 2.0 * self.N_SAMPLES / 3.0]
        assert stats.chisquare(counts, expected).pvalue > self.SIGNIFICANCE

        # merged events per label-1 event are Geometric(1/3)
        positions = np.flatnonzero(labels == 1)
        runs = np.diff(np.concatenate([[-1], positions]))[: self.N_SAMPLES]
        assert runs.size == self.N_SAMPLES
        n_bins = 8
        observed = np.bincount(np.minimum(runs, n_bins) - 1, minlength=n_bins)
        probabilities = stats.geom.pmf(np.arange(1, n_bins), 1.0 / 3.0)
        probabilities = np.append(probabilities, 1.0 - probabilities.sum())
        assert stats.chisquare(observed, self.N_SAMPLES * probabilities).pvalue > self.SIGNIFICANCE

    def test_write_streams_csv(self, tmp_path):
        """Test the merged events are written as time,label rows."""
        s1 = SignalStream.from_times(1, [0.25])
        s2 = SignalStream.from_times(2, [0.5])
        path = signal_service.write_streams_csv(str(tmp_path / "streams.csv"), s1, s2)
        with open(path, newline="") as handle:
            rows = list(csv.reader(handle))
        assert rows == [["time", "label"], ["0.25", "1"], ["0.5", "2"]]


class TestArrivalMatrix:
    """Test block sampling of arrivals."""

    def test_cap_column(self):
        """Test each row stops at its first arrival after the horizon."""
        gen = np.random.default_rng(3)
        arrivals, cap = signal_service.sample_arrival_matrix(2.0, 1.5, gen, 256)
        rows = np.arange(256)
        assert np.all(arrivals[rows, cap] > 1.5)
        inner = cap > 0
        assert np.all(arrivals[rows[inner], cap[inner] - 1] <= 1.5)
        columns = np.arange(arrivals.shape[1])
        assert np.all(arrivals[columns[None, :] > cap[:, None]] == SENTINEL_TIME)

    def test_zero_intensity(self):
        """Test λ = 0 gives one sentinel column."""
        arrivals, cap = signal_service.sample_arrival_matrix(0.0, 1.0, np.random.default_rng(0), 4)
        assert arrivals.shape == (4, 1)
        assert np.all(arrivals == SENTINEL_TIME)
        assert np.all(cap == 0)

    def test_same_generator_seed_same_matrix(self):
        """Test the matrix depends only on the generator state."""
        a, _ = signal_service.sample_arrival_matrix(1.0, 2.0, np.random.default_rng(9), 10)
        b, _ = signal_service.sample_arrival_matrix(1.0, 2.0, np.random.default_rng(9), 10)
        np.testing.assert_array_equal(a, b)


class TestWaitingTimes:
    """Test waits from fixed times to the next signal."""

    def test_memoryless_waits(self):
        """Test every column has mean 1/λ and the draws repeat under a seed."""
        times = [0.0, 0.3, 0.9]
        waits = signal_service.waiting_times(2.0, 1.0, times, 2000, rng_seed=17, stream_id=Label.MIN_PLAYER)
        assert waits.shape == (2000, 3)
        assert np.all(waits > 0.0)
        assert np.all(waits < SENTINEL_TIME)
        for column in waits.T:
            stderr = column.std(ddof=1) / np.sqrt(column.size)
            assert abs(column.mean() - 0.5) <= 4.0 * stderr
        again = signal_service.waiting_times(2.0, 1.0, times, 2000, rng_seed=17, stream_id=Label.MIN_PLAYER)
        np.testing.assert_array_equal(waits, again)

    def test_times_outside_horizon(self):
        """Test times at or after the horizon and empty time lists are refused."""
        with pytest.raises(ParameterError):
            signal_service.waiting_times(1.0, 1.0, [0.5, 1.0], 10, rng_seed=1, stream_id=Label.MAX_PLAYER)
        with pytest.raises(ParameterError):
            signal_service.waiting_times(1.0, 1.0, [], 10, rng_seed=1, stream_id=Label.MAX_PLAYER)
