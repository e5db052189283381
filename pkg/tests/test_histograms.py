import math

import numpy as np
import pytest

from wtfpad.errors import (
    EmptyHistogram,
    EmptySamples,
    InvalidMeanLength,
    InvalidParams,
    InvalidProbability,
    NegativeTime,
)
from wtfpad.histograms import (
    INFINITY,
    TokenHistogram,
    bin_boundaries,
    build_histogram,
    expected_burst_length,
    set_infinity_tokens_burst,
    set_infinity_tokens_gap,
)


class TestBoundaries:
    def test_worked_example(self):
        assert bin_boundaries(5, 16.0) == [
            (0.0, 2.0), (2.0, 4.0), (4.0, 8.0), (8.0, 16.0), (16.0, math.inf),
        ]

    def test_two_bin_degenerate(self):
        assert bin_boundaries(2, 1.0) == [(0.0, 1.0), (1.0, math.inf)]

    def test_partition_property(self):
        # disjoint and exhaustive: scan every boundary point and random ts
        rng = np.random.default_rng(0)
        for _ in range(25):
            n = int(rng.integers(2, 24))
            max_iat = float(rng.uniform(0.01, 50.0))
            bounds = bin_boundaries(n, max_iat)
            h = TokenHistogram(n, max_iat, [1] * n)
            assert bounds[0][0] == 0.0
            assert bounds[-1] == (max_iat, math.inf)
            for i, (lo, hi) in enumerate(bounds[:-1]):
                assert hi == bounds[i + 1][0]  # contiguous
                assert h.bin_index(lo) == i + 1
                assert h.bin_index(math.nextafter(hi, 0.0)) == i + 1
            for t in rng.uniform(0, 3 * max_iat, size=50):
                idx = h.bin_index(float(t))
                lo, hi = bounds[idx - 1]
                assert lo <= t < hi

    def test_invalid_params(self):
        with pytest.raises(InvalidParams):
            bin_boundaries(1, 1.0)
        with pytest.raises(InvalidParams):
            bin_boundaries(5, 0.0)


class TestBinIndex:
    def test_examples(self):
        h = TokenHistogram(5, 16.0, [0] * 5)
        assert h.bin_index(3.0) == 2
        assert h.bin_index(16.0) == 5  # infinity bin is closed on the left
        assert h.bin_index(0.0) == 1
        assert h.bin_index(INFINITY) == 5

    def test_negative_time(self):
        h = TokenHistogram(5, 16.0, [0] * 5)
        with pytest.raises(NegativeTime):
            h.bin_index(-0.5)


class TestBuild:
    def test_counting(self):
        h = build_histogram(5, 16.0, [3, 3, 9])
        assert h.tokens == [0, 2, 0, 1, 0]
        assert h.initial_tokens == h.tokens

    def test_clamp_beyond_max(self):
        h = build_histogram(5, 16.0, [20, 30])
        assert h.tokens == [0, 0, 0, 2, 0]

    def test_conservation(self):
        rng = np.random.default_rng(3)
        samples = rng.exponential(0.05, size=400)
        h = build_histogram(20, 0.5, samples)
        assert sum(h.tokens[:-1]) == 400
        assert h.tokens[-1] == 0

    def test_empty_samples(self):
        with pytest.raises(EmptySamples):
            build_histogram(5, 16.0, [])


class TestInfinityBins:
    def test_burst_worked_example(self):
        h = TokenHistogram(5, 16.0, [75, 75, 75, 75, 0])  # K = 300
        assert set_infinity_tokens_burst(h, 0.1).tokens[-1] == 33
        assert set_infinity_tokens_burst(h, 0.1, rounding="ceil").tokens[-1] == 34

    def test_burst_boundaries(self):
        h = TokenHistogram(5, 16.0, [75, 75, 75, 75, 0])
        assert set_infinity_tokens_burst(h, 0.0).tokens[-1] == 0
        assert set_infinity_tokens_burst(h, 0.5).tokens[-1] == 300

    def test_burst_invalid(self):
        h = TokenHistogram(5, 16.0, [75, 75, 75, 75, 0])
        with pytest.raises(InvalidProbability):
            set_infinity_tokens_burst(h, 1.0)
        with pytest.raises(InvalidProbability):
            set_infinity_tokens_burst(h, -0.1)

    def test_gap_worked_examples(self):
        h = TokenHistogram(5, 16.0, [75, 75, 75, 75, 0])
        assert set_infinity_tokens_gap(h, 10.0).tokens[-1] == 32
        h2 = TokenHistogram(5, 16.0, [2, 1, 1, 1, 0])  # K = 5
        assert set_infinity_tokens_gap(h2, 2.0).tokens[-1] == 4

    def test_gap_minimum_one_token(self):
        h = TokenHistogram(5, 16.0, [2, 1, 0, 0, 0])  # K = 3, mu close to K
        assert set_infinity_tokens_gap(h, 2.9).tokens[-1] >= 1

    def test_gap_invalid(self):
        h = TokenHistogram(5, 16.0, [75, 75, 75, 75, 0])
        with pytest.raises(InvalidMeanLength):
            set_infinity_tokens_gap(h, 1.0)
        with pytest.raises(InvalidMeanLength):
            set_infinity_tokens_gap(h, 400.0)

    def test_refill_keeps_infinity_tokens(self):
        h = TokenHistogram(5, 16.0, [75, 75, 75, 75, 0])
        set_infinity_tokens_gap(h, 10.0)
        h.tokens = [0] * 5
        h.refill()
        assert h.tokens[-1] == 32

    def test_expected_draws_against_monte_carlo(self):
        # draw without replacement from the pooled tokens until the first
        # infinity token; the closed form is (K + k_n + 1)/(k_n + 1)
        k, k_n = 300, 34
        expected = (k + k_n + 1) / (k_n + 1)
        h = TokenHistogram(5, 16.0, [75, 75, 75, 75, k_n])
        assert expected_burst_length(h) == pytest.approx(expected)
        rng = np.random.default_rng(11)
        trials = 100_000
        draws = np.empty(trials)
        chunk = 2000
        for start in range(0, trials, chunk):
            keys = rng.random((chunk, k + k_n))
            first_inf = keys[:, :k_n].min(axis=1)
            draws[start : start + chunk] = 1 + (keys[:, k_n:] < first_inf[:, None]).sum(axis=1)
        assert abs(draws.mean() - expected) / expected < 0.02


class TestSampling:
    def test_all_infinity(self):
        h = TokenHistogram(5, 16.0, [0, 0, 0, 0, 7])
        rng = np.random.default_rng(0)
        assert all(h.sample_delay(rng) == INFINITY for _ in range(50))

    def test_single_finite_bin(self):
        h = TokenHistogram(5, 16.0, [5, 0, 0, 0, 0])
        rng = np.random.default_rng(0)
        for _ in range(200):
            assert 0.0 <= h.sample_delay(rng) < 2.0

    def test_bin_frequency_oracle(self):
        h = TokenHistogram(5, 16.0, [100, 100, 0, 0, 0])
        rng = np.random.default_rng(5)
        n = 100_000
        hits = sum(1 for _ in range(n) if h.sample_delay(rng) < 2.0)
        assert abs(hits / n - 0.5) < 0.01

    def test_empty_histogram(self):
        h = TokenHistogram(5, 16.0, [0] * 5)
        with pytest.raises(EmptyHistogram):
            h.sample_delay(np.random.default_rng(0))

    def test_probabilities_match_eq(self):
        h = TokenHistogram(5, 16.0, [10, 20, 0, 30, 40])
        probs = h.probabilities()
        assert probs == pytest.approx([0.1, 0.2, 0.0, 0.3, 0.4])


class TestConsume:
    def test_refill_after_exhaustion(self):
        h = TokenHistogram(5, 16.0, [1, 0, 0, 0, 0])
        h.consume_token(1.0)
        assert h.tokens == [0, 0, 0, 0, 0]
        h.consume_token(1.0)  # refill to [1,0,0,0,0] then decrement
        assert h.tokens == [0, 0, 0, 0, 0]

    def test_next_greater_fallback(self):
        h = TokenHistogram(5, 16.0, [0, 3, 0, 0, 0])
        h.consume_token(1.0)  # bin 1 empty -> bin 2 pays
        assert h.tokens == [0, 2, 0, 0, 0]

    def test_smaller_fallback_when_no_greater(self):
        h = TokenHistogram(5, 16.0, [4, 0, 0, 0, 0])
        h.consume_token(INFINITY)  # infinity empty, nothing greater
        assert h.tokens == [3, 0, 0, 0, 0]

    def test_decrements_exactly_one(self):
        rng = np.random.default_rng(8)
        h = TokenHistogram(8, 2.0, list(rng.integers(0, 5, size=8)))
        for _ in range(500):
            before = h.total_tokens
            h.consume_token(float(rng.uniform(0, 4)))
            if before == 0:
                assert h.total_tokens == sum(h.initial_tokens) - 1
            else:
                assert h.total_tokens == before - 1
            assert all(k >= 0 for k in h.tokens)


class TestReturn:
    def test_worked_example(self):
        h = TokenHistogram(5, 16.0, [2, 0, 1, 0, 0])
        # sampled in bin 3 (e.g. 5.0), actual in bin 1 (e.g. 1.0)
        h.return_token(5.0, 1.0)
        assert h.tokens == [1, 0, 2, 0, 0]

    def test_same_bin_identity(self):
        h = TokenHistogram(5, 16.0, [2, 0, 1, 0, 0])
        h.return_token(5.0, 6.0)  # both bin 3
        assert h.tokens == [2, 0, 1, 0, 0]

    def test_total_invariant(self):
        rng = np.random.default_rng(9)
        h = TokenHistogram(8, 2.0, list(rng.integers(1, 6, size=8)))
        for _ in range(300):
            total = h.total_tokens
            sampled = float(rng.uniform(0, 3))
            actual = float(rng.uniform(0, sampled)) if sampled else 0.0
            h.return_token(sampled, actual)
            assert h.total_tokens == total
            assert all(k >= 0 for k in h.tokens)


class TestSerialization:
    def test_round_trip(self):
        h = build_histogram(20, 0.4, np.linspace(0.001, 0.8, 300))
        set_infinity_tokens_burst(h, 0.25, rounding="ceil")
        again = TokenHistogram.from_dict(h.to_dict())
        assert again == h
