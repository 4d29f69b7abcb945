import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bwpipe.profiling import (
    SummaryStats,
    WeightClass,
    classify_normality,
    profile_table,
    summarize,
    who_bw_class,
)
from bwpipe.tabular import ColumnMeta, Table


class TestSummarize:
    def test_three_point_closed_form(self):
        s = summarize(np.array([1.0, 2.0, 3.0]))
        assert s.mean == pytest.approx(2.0)
        assert s.sd == pytest.approx(1.0)
        assert s.skewness == pytest.approx(0.0)
        assert (s.min, s.max) == (1.0, 3.0)

    def test_symmetric_sample_zero_skew(self):
        for a in (0.5, 3.0, 100.0):
            s = summarize(np.array([-a, 0.0, a]))
            assert s.skewness == pytest.approx(0.0, abs=1e-12)

    def test_all_missing_errors(self):
        vals = np.array([np.nan, np.nan])
        with pytest.raises(ValueError):
            summarize(vals, np.zeros(2, dtype=bool))

    def test_kurtosis_undefined_below_four(self):
        s = summarize(np.array([1.0, 2.0, 3.0]))
        assert np.isnan(s.excess_kurtosis)
        s4 = summarize(np.array([1.0, 2.0, 3.0, 4.0]))
        assert np.isfinite(s4.excess_kurtosis)

    @settings(max_examples=50, deadline=None)
    @given(
        data=st.lists(st.floats(-1e3, 1e3), min_size=5, max_size=40),
        shift=st.floats(-1e3, 1e3),
    )
    def test_location_shift(self, data, shift):
        x = np.asarray(data)
        if np.ptp(x) == 0:
            return
        a = summarize(x)
        b = summarize(x + shift)
        assert b.mean == pytest.approx(a.mean + shift, rel=1e-6, abs=1e-6)
        assert b.min == pytest.approx(a.min + shift, rel=1e-6, abs=1e-6)
        assert b.max == pytest.approx(a.max + shift, rel=1e-6, abs=1e-6)
        assert b.sd == pytest.approx(a.sd, rel=1e-6, abs=1e-9)
        assert b.skewness == pytest.approx(a.skewness, rel=1e-4, abs=1e-5)

    @settings(max_examples=50, deadline=None)
    @given(
        data=st.lists(st.floats(-100, 100), min_size=5, max_size=40),
        scale=st.floats(0.01, 100),
    )
    def test_positive_scale(self, data, scale):
        x = np.asarray(data)
        if np.ptp(x) == 0:
            return
        a = summarize(x)
        b = summarize(x * scale)
        assert b.sd == pytest.approx(a.sd * scale, rel=1e-6)
        assert b.skewness == pytest.approx(a.skewness, rel=1e-4, abs=1e-6)
        c = summarize(x * -scale)
        assert c.skewness == pytest.approx(-a.skewness, rel=1e-4, abs=1e-6)


class TestClassifyNormality:
    def test_zero_moments_normal(self):
        s = SummaryStats(10, 0.0, 1.0, 0.0, 0.0, -1.0, 1.0)
        assert classify_normality(s, 0.01, 0.01) == "normal"

    def test_big_skew_non_normal(self):
        s = SummaryStats(10, 0.0, 1.0, 3.0, 0.0, -1.0, 1.0)
        assert classify_normality(s, 0.5, 1.0) == "non_normal"

    def test_large_standard_normal_sample(self):
        x = np.random.default_rng(2024).standard_normal(10_000)
        assert classify_normality(summarize(x), 0.5, 1.0) == "normal"


class TestWhoBwClass:
    def test_paper_boundaries(self):
        assert who_bw_class(3000) is WeightClass.NORMAL
        assert who_bw_class(2000) is WeightClass.MODERATELY_LOW
        assert who_bw_class(1500) is WeightClass.MODERATELY_LOW

    def test_decided_boundaries(self):
        assert who_bw_class(2500) is WeightClass.NORMAL
        assert who_bw_class(4000) is WeightClass.NORMAL
        assert who_bw_class(4000.01) is WeightClass.HIGH
        assert who_bw_class(1499.99) is WeightClass.VERY_LOW

    def test_non_positive_errors(self):
        for w in (0.0, -10.0):
            with pytest.raises(ValueError):
                who_bw_class(w)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(min_value=1e-3, max_value=1e5))
    def test_total_and_monotone(self, w):
        order = [
            WeightClass.VERY_LOW,
            WeightClass.MODERATELY_LOW,
            WeightClass.NORMAL,
            WeightClass.HIGH,
        ]
        a = who_bw_class(w)
        b = who_bw_class(w + 1.0)
        assert order.index(b) >= order.index(a)


class TestProfileTable:
    def test_constant_column_flagged(self):
        values = np.column_stack([np.ones(6), np.arange(6, dtype=float)])
        table = Table(
            values,
            np.ones_like(values, bool),
            [ColumnMeta(name="const"), ColumnMeta(name="y", role="target")],
        )
        report = profile_table(table)
        const = next(c for c in report.columns if c.name == "const")
        assert const.zero_variance

    def test_empty_feature_set(self):
        values = np.arange(5, dtype=float).reshape(-1, 1)
        table = Table(values, np.ones_like(values, bool), [ColumnMeta(name="y", role="target")])
        report = profile_table(table)
        assert report.n_continuous == 1  # just the target
        assert len(report.columns) == 1

    def test_counts_and_frequencies(self, simple_table):
        report = profile_table(simple_table)
        assert report.n_continuous == 3
        assert report.n_discrete == 1
        disc = next(c for c in report.columns if c.name == "c")
        assert disc.frequencies == {0: 3, 1: 2}
        assert report.dataset_missingness == pytest.approx(1 / 20)
