"""Cleaning, standardisation, wavelet smoothing, windowing and labels."""

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from cet.errors import ConfigError, DataError, DataQualityError
from cet.preprocess import (
    EarningsVector,
    MinuteBar,
    Movement,
    ZStats,
    dwt_denoise,
    haar_decompose,
    interpolate_missing,
    label_movement,
    label_returns,
    make_windows,
    window_count,
    zscore_standardize,
)


def _bars(pairs):
    return [MinuteBar("AAA", 0, m, c, 100.0) for m, c in pairs]


class TestInterpolation:
    def test_interior_gap_is_midpoint(self):
        out = interpolate_missing(_bars([(0, 10.0), (2, 12.0)]), minutes=3)
        np.testing.assert_allclose(out[:, 0], [10.0, 11.0, 12.0])

    def test_complete_day_is_unchanged(self, rng):
        closes = rng.uniform(50, 60, size=390)
        out = interpolate_missing(_bars(enumerate(closes)))
        np.testing.assert_array_equal(out[:, 0], closes)
        assert out.shape == (390, 2)

    def test_leading_gap_copies_nearest_value(self):
        out = interpolate_missing(_bars([(1, 10.5), (2, 11.0)]), minutes=3)
        assert out[0, 0] == 10.5

    def test_trailing_gap_copies_last_value(self):
        out = interpolate_missing(_bars([(0, 9.0), (1, 10.0)]), minutes=4)
        np.testing.assert_array_equal(out[2:, 0], [10.0, 10.0])

    def test_unsorted_input_is_accepted(self):
        out = interpolate_missing(_bars([(2, 12.0), (0, 10.0)]), minutes=3)
        np.testing.assert_allclose(out[:, 0], [10.0, 11.0, 12.0])

    def test_duplicate_minute_is_rejected(self):
        with pytest.raises(DataQualityError, match="duplicate"):
            interpolate_missing(_bars([(0, 1.0), (0, 2.0), (1, 3.0)]), minutes=3)

    def test_single_bar_is_rejected(self):
        with pytest.raises(DataQualityError):
            interpolate_missing(_bars([(0, 1.0)]), minutes=3)


class TestZScore:
    def test_three_point_series(self):
        x = np.array([1.0, 2.0, 3.0])
        out = zscore_standardize(x, ZStats.fit(x))
        np.testing.assert_allclose(out, [-1.224744871391589, 0.0, 1.224744871391589], atol=1e-12)

    def test_population_std_is_used(self):
        assert ZStats.fit([1.0, 2.0, 3.0]).std[0] == pytest.approx(math.sqrt(2.0 / 3.0))

    def test_constant_series_maps_to_zero(self):
        x = np.full(5, 7.0)
        np.testing.assert_array_equal(zscore_standardize(x, ZStats.fit(x)), 0.0)

    def test_standard_series_is_unchanged(self, rng):
        x = rng.standard_normal(100)
        x = (x - x.mean()) / x.std()
        np.testing.assert_allclose(zscore_standardize(x, ZStats.fit(x)), x, atol=1e-9)

    def test_per_column_statistics(self, rng):
        rows = rng.standard_normal((200, 2)) * [1.0, 1000.0] + [5.0, -3.0]
        out = zscore_standardize(rows, ZStats.fit(rows))
        np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.std(axis=0), 1.0, atol=1e-12)

    def test_stats_ignore_row_order(self, rng):
        rows = rng.standard_normal((50, 2))
        a, b = ZStats.fit(rows), ZStats.fit(rows[rng.permutation(50)])
        np.testing.assert_allclose(a.mean, b.mean, atol=1e-14)
        np.testing.assert_allclose(a.std, b.std, atol=1e-14)


class TestWavelet:
    def test_disabled_filter_is_identity(self, rng):
        x = rng.standard_normal((3, 50))
        np.testing.assert_allclose(dwt_denoise(x, lam=math.inf), x, atol=1e-9)

    def test_constant_series_is_unchanged(self):
        x = np.full(16, 3.25)
        np.testing.assert_allclose(dwt_denoise(x, 0.7, levels=2), x, atol=1e-12)

    def test_alternating_series_is_flattened(self):
        _, (detail,) = haar_decompose([1.0, -1.0, 1.0, -1.0], 1)
        np.testing.assert_allclose(np.abs(detail), math.sqrt(2.0))
        np.testing.assert_allclose(dwt_denoise([1.0, -1.0, 1.0, -1.0], 0.7, levels=1, mode="above"),
                                   0.0, atol=1e-12)

    def test_below_mode_keeps_large_details(self):
        x = [1.0, -1.0, 1.0, -1.0]
        np.testing.assert_allclose(dwt_denoise(x, 0.7, levels=1, mode="below"), x, atol=1e-12)

    def test_transform_is_orthonormal(self, rng):
        x = rng.standard_normal(64)
        approx, details = haar_decompose(x, 3)
        energy = (approx ** 2).sum() + sum((d ** 2).sum() for d in details)
        assert energy == pytest.approx((x ** 2).sum(), rel=1e-12)

    def test_odd_length_is_padded_and_cropped(self, rng):
        x = rng.standard_normal(50)
        assert dwt_denoise(x, 0.7, levels=2).shape == (50,)

    def test_bad_settings(self):
        with pytest.raises(ConfigError):
            dwt_denoise(np.zeros(8), wavelet="db4")
        with pytest.raises(ConfigError):
            dwt_denoise(np.zeros(8), mode="sideways")
        with pytest.raises(ConfigError):
            dwt_denoise(np.zeros(3), levels=2)


class TestWindows:
    def test_default_day_count(self):
        assert window_count(390, 50, 5) == 336
        assert len(make_windows(np.zeros((390, 2)), 50, 5)) == 336

    def test_whole_day_window(self):
        out = make_windows(np.arange(390.0), omega=390, horizon=0)
        assert len(out) == 1
        assert out[0][0].end_minute == 389

    def test_stride_one_windows_shift_by_one_minute(self):
        day = np.arange(100.0)[:, None] * [1.0, 2.0]
        out = make_windows(day, omega=10, horizon=3)
        for (w0, _), (w1, _) in zip(out, out[1:]):
            np.testing.assert_array_equal(w1.values[:-1], w0.values[1:])

    def test_future_follows_window(self):
        (w, fut), *_ = make_windows(np.arange(20.0), omega=5, horizon=2)
        np.testing.assert_array_equal(w.values[:, 0], [0, 1, 2, 3, 4])
        np.testing.assert_array_equal(fut[:, 0], [5, 6])

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 390), st.integers(0, 40))
    def test_count_formula(self, omega, horizon):
        if omega + horizon > 390:
            with pytest.raises(ConfigError):
                window_count(390, omega, horizon)
        else:
            assert window_count(390, omega, horizon) == 390 - omega - horizon + 1

    def test_stride_count(self):
        assert window_count(390, 50, 5, stride=5) == (390 - 55) // 5 + 1


class TestLabels:
    def test_flat_price_is_hold(self):
        assert label_movement(100.0, 100.0, 1e-9).movement is Movement.HOLD

    def test_up(self):
        lab = label_movement(100.0, 100.05, 2e-4)
        assert lab.movement is Movement.UP
        assert lab.realized_return == pytest.approx(5e-4)

    def test_down(self):
        assert label_movement(100.0, 99.9, 2e-4).movement is Movement.DOWN

    def test_band_edge_is_hold(self):
        assert label_movement(1.0, 1.0 + 2e-4 - 1e-12, 2e-4).movement is Movement.HOLD

    def test_nonpositive_price(self):
        with pytest.raises(DataError):
            label_movement(0.0, 1.0)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(1.0, 1e4), st.floats(-0.01, 0.01), st.floats(0.0, 1e-3))
    def test_reflection_swaps_up_and_down(self, p, r, eps):
        assume(abs(abs(r) - eps) > 1e-12)  # rounding decides exact band edges
        a = label_movement(p, p * (1 + r), eps).movement
        b = label_movement(p, p * (1 - r), eps).movement
        swap = {Movement.UP: Movement.DOWN, Movement.DOWN: Movement.UP, Movement.HOLD: Movement.HOLD}
        assert b is swap[a]

    def test_vectorised_matches_scalar(self, rng):
        r = rng.normal(0, 5e-4, size=200)
        expect = [int(label_movement(100.0, 100.0 * (1 + x)).movement) for x in r]
        np.testing.assert_array_equal(label_returns(r), expect)


class TestEarningsVector:
    def test_dimension_is_enforced(self):
        EarningsVector(np.zeros(38), "AAA", 0, 45, "Energy")
        with pytest.raises(DataError):
            EarningsVector(np.zeros(37), "AAA", 0, 45, "Energy")
