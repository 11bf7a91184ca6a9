import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ionhbt.correlator import (
    CorrelationHistogram,
    CorrelatorError,
    correlate,
    correlate_bruteforce,
    correlate_sharded,
    correlate_startstop,
    g2_zero_estimate,
    histogram_to_csv,
    n_half_bins,
    normalize,
)
from ionhbt.streams import PS_PER_S, TimeTagStream

BIN = 2e-9
WINDOW = 600e-9


def poisson_tags(rate, duration, rng):
    n = rng.poisson(rate * duration)
    tags = np.sort(rng.integers(0, int(duration * PS_PER_S), size=n))
    return np.unique(tags).astype(np.int64)


class TestPairCounting:
    def test_single_pair_lands_in_its_bin(self):
        hist = correlate(np.array([0]), np.array([4000]), BIN, WINDOW)
        m = len(hist.bins) // 2
        assert hist.bins.sum() == 1
        assert hist.bins[m + 2] == 1  # tau in [4, 6) ns
        center = hist.tau_centers[m + 2]
        assert 4e-9 <= center - hist.bin_width / 2 < 6e-9

    def test_window_edges_inclusive(self):
        window_ps = int(WINDOW * PS_PER_S)
        b = np.array([0, window_ps, 2 * window_ps])
        hist = correlate(np.array([window_ps]), b, BIN, WINDOW)
        assert hist.bins.sum() == 3  # both edges and the center tag

    def test_autocorrelation_excludes_self_pairs(self):
        tags = np.array([0, 10_000, 25_000])
        hist = correlate(tags, tags, BIN, WINDOW)
        m = len(hist.bins) // 2
        # 6 ordered cross pairs remain, symmetric under reflection
        assert hist.bins.sum() == 6
        assert np.array_equal(hist.bins, hist.bins[::-1])

    def test_autocorrelation_symmetry_random(self):
        rng = np.random.default_rng(5)
        tags = poisson_tags(50e3, 0.01, rng)
        hist = correlate(tags, tags, BIN, WINDOW)
        assert np.array_equal(hist.bins, hist.bins[::-1])

    def test_unsorted_input_rejected(self):
        with pytest.raises(CorrelatorError):
            correlate(np.array([5, 3]), np.array([0, 1]), BIN, WINDOW)

    def test_duplicate_tags_rejected(self):
        with pytest.raises(CorrelatorError):
            correlate(np.array([3, 3]), np.array([0, 1]), BIN, WINDOW)

    def test_bad_bin_and_window(self):
        with pytest.raises(CorrelatorError):
            n_half_bins(0.0, WINDOW)
        with pytest.raises(CorrelatorError):
            n_half_bins(BIN, 1e-9)

    def test_time_translation_invariance(self):
        rng = np.random.default_rng(6)
        a = poisson_tags(20e3, 0.01, rng)
        b = poisson_tags(20e3, 0.01, rng)
        shift = 123_456_789
        h1 = correlate(a, b, BIN, WINDOW)
        h2 = correlate(a + shift, b + shift, BIN, WINDOW)
        assert np.array_equal(h1.bins, h2.bins)

    def test_channel_swap_mirrors_histogram(self):
        rng = np.random.default_rng(7)
        a = poisson_tags(20e3, 0.01, rng)
        b = poisson_tags(20e3, 0.01, rng)
        forward = correlate(a, b, BIN, WINDOW)
        backward = correlate(b, a, BIN, WINDOW)
        assert np.array_equal(forward.bins, backward.bins[::-1])


class TestOracleEquivalence:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 31),
           st.integers(min_value=2, max_value=400),
           st.sampled_from([1e-9, 2e-9, 5e-9]),
           st.sampled_from([100e-9, 600e-9, 3e-6]))
    def test_streaming_equals_bruteforce(self, seed, n, bin_width, window):
        rng = np.random.default_rng(seed)
        a = np.unique(rng.integers(0, 10_000_000, size=n)).astype(np.int64)
        b = np.unique(rng.integers(0, 10_000_000, size=n)).astype(np.int64)
        fast = correlate(a, b, bin_width, window)
        slow = correlate_bruteforce(a, b, bin_width, window)
        assert np.array_equal(fast.bins, slow.bins)

    def test_sharding_invariance(self):
        rng = np.random.default_rng(8)
        a = poisson_tags(100e3, 0.01, rng)
        b = poisson_tags(100e3, 0.01, rng)
        reference = correlate(a, b, BIN, WINDOW)
        for shards in (2, 7, 13):
            sharded = correlate_sharded(a, b, BIN, WINDOW, shards)
            assert np.array_equal(reference.bins, sharded.bins)

    def test_sharded_autocorrelation(self):
        rng = np.random.default_rng(9)
        tags = poisson_tags(50e3, 0.01, rng)
        reference = correlate(tags, tags, BIN, WINDOW)
        sharded = correlate_sharded(tags, tags, BIN, WINDOW, 5)
        assert np.array_equal(reference.bins, sharded.bins)


class TestNormalization:
    def test_poisson_streams_normalize_to_unity(self):
        # sqrt(N_observed) errors bias low-count bins to large pulls, so the
        # 4-sigma check needs well-populated bins (the experiment had ~300)
        rng = np.random.default_rng(10)
        duration = 80.0
        a = TimeTagStream(0, poisson_tags(50e3, duration, rng).astype(np.uint64),
                          duration)
        b = TimeTagStream(1, poisson_tags(50e3, duration, rng).astype(np.uint64),
                          duration)
        norm = normalize(correlate(a, b, BIN, WINDOW))
        counts = norm.histogram.bins
        assert counts.mean() > 300
        pulls = (norm.g2 - 1.0) / np.where(norm.g2_err > 0, norm.g2_err, 1.0)
        assert np.abs(pulls).max() < 4.0

    def test_error_scaling_with_duration(self):
        rng = np.random.default_rng(11)
        rates = 30e3

        def mean_err(duration, seed):
            r = np.random.default_rng(seed)
            a = TimeTagStream(0, poisson_tags(rates, duration, r).astype(np.uint64),
                              duration)
            b = TimeTagStream(1, poisson_tags(rates, duration, r).astype(np.uint64),
                              duration)
            return normalize(correlate(a, b, BIN, WINDOW)).g2_err.mean()

        short = mean_err(5.0, 123)
        long = mean_err(20.0, 124)
        assert long / short == pytest.approx(0.5, rel=0.15)

    def test_zero_singles_rejected(self):
        hist = CorrelationHistogram(BIN, WINDOW, np.zeros(600, dtype=np.int64),
                                    0, 10, 1.0)
        with pytest.raises(CorrelatorError):
            normalize(hist)

    def test_zero_estimate_flat_curve(self):
        rng = np.random.default_rng(12)
        duration = 20.0
        a = TimeTagStream(0, poisson_tags(20e3, duration, rng).astype(np.uint64),
                          duration)
        b = TimeTagStream(1, poisson_tags(20e3, duration, rng).astype(np.uint64),
                          duration)
        norm = normalize(correlate(a, b, BIN, WINDOW))
        value, err = g2_zero_estimate(norm)
        assert err > 0
        assert value == pytest.approx(1.0, abs=4 * err)

    def test_zero_estimate_bin_count_bounds(self):
        hist = CorrelationHistogram(BIN, WINDOW, np.ones(600, dtype=np.int64),
                                    100, 100, 1.0)
        norm = normalize(hist)
        with pytest.raises(CorrelatorError):
            g2_zero_estimate(norm, zero_bin_count=0)
        with pytest.raises(CorrelatorError):
            g2_zero_estimate(norm, zero_bin_count=301)

    def test_histogram_csv(self, tmp_path):
        hist = CorrelationHistogram(BIN, WINDOW, np.ones(600, dtype=np.int64),
                                    100, 100, 1.0)
        path = tmp_path / "hist.csv"
        histogram_to_csv(normalize(hist), path)
        header = path.read_text().splitlines()[0]
        assert header == "tau_ns,counts,g2,g2_err"


class TestStartStopVariant:
    def test_start_stop_counts_subset_of_multistart(self):
        rng = np.random.default_rng(13)
        a = poisson_tags(50e3, 0.01, rng)
        b = poisson_tags(50e3, 0.01, rng)
        multi = correlate(a, b, BIN, WINDOW)
        single = correlate_startstop(a, b, BIN, WINDOW)
        assert single.bins.sum() <= multi.bins.sum()
        assert single.bins.sum() > 0
        # start-stop only ever pairs forward in time
        m = len(single.bins) // 2
        assert single.bins[:m].sum() == 0

    def test_merge_is_associative_add(self):
        h1 = CorrelationHistogram(BIN, WINDOW,
                                  np.arange(600, dtype=np.int64), 10, 10, 1.0)
        h2 = CorrelationHistogram(BIN, WINDOW,
                                  np.ones(600, dtype=np.int64), 5, 7, 1.0)
        merged = h1.merge(h2)
        assert merged.singles_a == 15
        assert np.array_equal(merged.bins, h1.bins + h2.bins)
