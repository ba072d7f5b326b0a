import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyntmoe import drift
from dyntmoe.errors import DataError, ParameterError
from helpers import naive_biased, naive_unbiased


class TestKernel:
    def test_self_similarity(self, rng):
        x = rng.standard_normal(4)
        assert drift.rbf_kernel(x, x, 0.7) == 1.0

    def test_hand_value(self):
        assert drift.rbf_kernel([0.0], [2.0], 1.0) == pytest.approx(0.1353352832366127, abs=1e-15)

    def test_wide_bandwidth_flattens(self):
        assert drift.rbf_kernel([0.0], [2.0], 1e3) > drift.rbf_kernel([0.0], [2.0], 1.0)
        assert drift.rbf_kernel([0.0], [2.0], 1e3) == pytest.approx(1.0, abs=1e-5)

    def test_bad_sigma(self):
        with pytest.raises(ParameterError):
            drift.rbf_kernel([0.0], [1.0], 0.0)


class TestMedianBandwidth:
    def test_hand_enumeration(self):
        assert drift.median_bandwidth([0.0, 1.0, 3.0]) == 2.0

    def test_lower_median(self):
        pts = np.array([0.0, 1.0, 3.0, 6.0])  # distances 1,2,3,3,5,6 -> lower median 3
        assert drift.median_bandwidth(pts) == 3.0

    def test_lower_median_on_even_count(self):
        assert drift.lower_median([4.0, 2.0, 1.0, 3.0]) == 2.0

    def test_identical_samples_fallback(self):
        assert drift.median_bandwidth(np.ones((5, 2))) == 1.0

    def test_duplicate_heavy_uses_smallest_positive(self):
        pts = np.array([0.0, 0.0, 0.0, 0.0, 2.5])
        assert drift.median_bandwidth(pts) == 2.5

    def test_too_few(self):
        with pytest.raises(DataError):
            drift.median_bandwidth([1.0])


class TestMMD:
    def test_identical_windows(self, rng):
        x = rng.standard_normal((20, 3))
        assert abs(drift.mmd_squared_biased(x, x.copy(), 1.3)) <= 1e-12

    def test_hand_value(self):
        got = drift.mmd_squared_biased([0.0, 0.0], [2.0, 2.0], 1.0)
        assert got == pytest.approx(2 - 2 * math.exp(-2), abs=1e-14)
        assert got == pytest.approx(1.72933, abs=1e-5)

    def test_single_sample_rejected(self):
        with pytest.raises(DataError):
            drift.mmd_squared_biased([0.0], [2.0], 1.0)

    @pytest.mark.parametrize("seed", range(10))
    def test_biased_matches_naive(self, seed):
        rng = np.random.default_rng(seed)
        m, n, v = rng.integers(2, 21), rng.integers(2, 21), rng.integers(1, 9)
        X, Y = rng.standard_normal((m, v)), rng.standard_normal((n, v)) + 0.5
        sigma = rng.uniform(0.3, 3.0)
        assert drift.mmd_squared_biased(X, Y, sigma) == pytest.approx(
            naive_biased(X.tolist(), Y.tolist(), sigma), abs=1e-12
        )

    @pytest.mark.parametrize("seed", range(10))
    def test_unbiased_matches_naive(self, seed):
        rng = np.random.default_rng(100 + seed)
        m, n, v = rng.integers(2, 21), rng.integers(2, 21), rng.integers(1, 9)
        X, Y = rng.standard_normal((m, v)), rng.standard_normal((n, v))
        sigma = rng.uniform(0.3, 3.0)
        assert drift.mmd_squared_unbiased(X, Y, sigma) == pytest.approx(
            naive_unbiased(X.tolist(), Y.tolist(), sigma), abs=1e-12
        )

    def test_unbiased_may_be_negative(self):
        x = np.array([[0.0], [1.0], [2.0]])
        assert drift.mmd_squared_unbiased(x, x.copy(), 1.0) < 0

    def test_unbiased_centered_under_null(self):
        rng = np.random.default_rng(3)
        vals = [
            drift.mmd_squared_unbiased(rng.standard_normal((30, 2)), rng.standard_normal((30, 2)), 1.0)
            for _ in range(1000)
        ]
        se = np.std(vals) / np.sqrt(len(vals))
        assert abs(np.mean(vals)) <= 3 * se

    @given(st.integers(0, 10_000), st.floats(0.1, 10.0))
    @settings(max_examples=60, deadline=None)
    def test_nonneg_symmetric(self, seed, sigma):
        rng = np.random.default_rng(seed)
        A, B = rng.standard_normal((7, 2)), rng.standard_normal((9, 2)) * 2
        ab, ba = drift.mmd_squared_biased(A, B, sigma), drift.mmd_squared_biased(B, A, sigma)
        assert ab >= -1e-12
        assert ab == ba

    @pytest.mark.parametrize("scale", [0.01, 7.5, 1e3])
    def test_median_heuristic_scale_invariance(self, rng, scale):
        A, B = rng.standard_normal((30, 2)), rng.standard_normal((30, 2)) + 0.3
        base = drift.mmd_squared_biased(A, B, drift.median_bandwidth(A))
        scaled = drift.mmd_squared_biased(A * scale, B * scale, drift.median_bandwidth(A * scale))
        assert scaled == pytest.approx(base, rel=1e-12, abs=1e-14)

    def test_bound_value(self):
        assert drift.concentration_bound(100, 100, 0.05) == pytest.approx(0.6716, abs=1e-4)


class TestThreshold:
    def hist(self, vals, min_fill=1):
        h = drift.ScoreHistory(capacity=50, min_fill=min_fill)
        for v in vals:
            h.append(v)
        return h

    def test_k_sigma(self):
        got = drift.threshold(self.hist([0.1, 0.2, 0.3]), 3.0)
        assert got == pytest.approx(0.2 + 3 * math.sqrt(0.02 / 3), abs=1e-12)
        assert got == pytest.approx(0.44495, abs=1e-5)

    def test_constant_history(self):
        assert drift.threshold(self.hist([0.7] * 5), 3.0) == pytest.approx(0.7, abs=1e-15)

    def test_not_ready(self):
        assert drift.threshold(self.hist([0.1] * 4, min_fill=5), 3.0) is None

    def test_capacity(self):
        h = self.hist(range(80))
        assert len(h) == 50 and h.snapshot()[0] == 30

    @given(st.lists(st.floats(0, 10), min_size=1, max_size=30), st.floats(0.1, 5), st.floats(0.1, 5))
    def test_monotone_in_lambda(self, vals, l1, l2):
        h = self.hist(vals)
        lo, hi = sorted((l1, l2))
        assert drift.threshold(h, lo) <= drift.threshold(h, hi)


class TestDetector:
    def test_warmup_never_fires(self):
        det = drift.DriftDetector(window=10, min_fill=10)
        x = np.concatenate([np.zeros((10, 1)), np.full((90, 1), 50.0)])
        x[:10] = np.random.default_rng(0).standard_normal((10, 1))
        events = [e for _, e in det.scan(x)]
        assert len(events) == 9 and all(e is None for e in events)

    def test_reference_required(self):
        with pytest.raises(DataError):
            drift.DriftDetector().step(np.zeros((96, 1)), 0)

    def test_stationary_false_alarms(self):
        drifts = evals = 0
        for s in range(10):
            x = np.random.default_rng(s).standard_normal((96 * 201, 1))
            for ev, _ in drift.DriftDetector().scan(x):
                evals += 1
                drifts += ev.drift
        assert evals == 2000
        assert drifts / evals <= 0.05

    def test_detects_mean_shift(self):
        hits = 0
        for s in range(20):
            x = np.random.default_rng(50 + s).standard_normal((4000, 1))
            x[2000:] += 3.0
            first = next(
                (ev.t for ev, e in drift.DriftDetector().scan(x) if e is not None and ev.t >= 2000),
                None,
            )
            hits += first is not None and first - 2000 <= 2 * 96
        assert hits >= 19

    def test_event_fields_and_reanchor(self):
        x = np.random.default_rng(1).standard_normal((96 * 30, 2))
        x[96 * 20 :] += 4.0
        det = drift.DriftDetector()
        events = [e for _, e in det.scan(x) if e is not None]
        e = events[0]
        assert e.mmd2 > e.threshold
        assert e.cur_bounds[1] - e.cur_bounds[0] == 96 and e.t == e.cur_bounds[1] - 1
        assert det.ref_bounds[0] >= e.cur_bounds[0]

    def test_clear_on_drift_option(self):
        x = np.random.default_rng(1).standard_normal((96 * 30, 1))
        x[96 * 20 :] += 4.0
        det = drift.DriftDetector(clear_on_drift=True)
        for _, e in det.scan(x):
            if e is not None:
                assert len(det.history) == 0
                break
