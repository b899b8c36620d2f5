import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from dftrack.preprocess import (
    alpha_trimmed_mean,
    anova_stream_test,
    anova_two_group,
    f_survival,
    select_streams,
    smooth_frames,
    smooth_stream,
)
from dftrack.types import ModelParams, RssFrame

from conftest import build_toy_fingerprint


class TestAlphaTrimmedMean:
    def test_worked_example(self):
        # ceil(0.2 * 5) = 1 dropped per end; mean(-52, -50, -48) = -50.
        assert alpha_trimmed_mean([-60, -52, -50, -48, -40], 0.2) == -50.0

    def test_zero_alpha_is_plain_mean(self):
        window = [-61.0, -55.0, -49.0, -64.0]
        assert alpha_trimmed_mean(window, 0.0) == pytest.approx(sum(window) / 4)

    def test_default_alpha_value(self):
        assert ModelParams().alpha_trim == 0.2

    def test_median_degeneracy(self):
        # q odd with q - 2*ceil(alpha*q) = 1: exactly the median survives.
        window = [3.0, -7.0, 5.0, 1.0, -2.0]
        assert alpha_trimmed_mean(window, 0.4) == 1.0
        window7 = [3.0, -7.0, 5.0, 1.0, -2.0, 9.0, -4.0]
        assert alpha_trimmed_mean(window7, 0.42) == 1.0

    def test_empty_window_rejected(self):
        with pytest.raises(ValueError):
            alpha_trimmed_mean([], 0.2)

    def test_alpha_out_of_range(self):
        for alpha in (-0.1, 0.5, 0.9):
            with pytest.raises(ValueError):
                alpha_trimmed_mean([1.0, 2.0], alpha)

    def test_overtrimming_rejected(self):
        with pytest.raises(ValueError):
            alpha_trimmed_mean([1.0, 2.0], 0.4)  # ceil(0.8)=1 per end leaves 0

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(-100, 0, allow_nan=False), min_size=1, max_size=30),
        st.floats(0.0, 0.49),
    )
    def test_result_within_retained_range(self, window, alpha):
        q = len(window)
        trim = math.ceil(alpha * q)
        if q - 2 * trim < 1:
            return
        retained = sorted(window)[trim : q - trim]
        value = alpha_trimmed_mean(window, alpha)
        assert min(retained) - 1e-12 <= value <= max(retained) + 1e-12

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(-100, 0, allow_nan=False), min_size=3, max_size=20),
        st.randoms(use_true_random=False),
    )
    def test_permutation_invariance(self, window, rnd):
        shuffled = list(window)
        rnd.shuffle(shuffled)
        assert alpha_trimmed_mean(window, 0.2) == alpha_trimmed_mean(shuffled, 0.2)


class TestSmoothStream:
    def test_constant_input(self):
        assert smooth_stream([-50.0] * 10, 5, 0.2) == [-50.0] * 10

    def test_impulse_removed_at_steady_state(self):
        raw = [-50.0] * 5 + [-90.0] + [-50.0] * 5
        out = smooth_stream(raw, 5, 0.2)
        assert out == [-50.0] * len(raw)

    def test_window_of_one_is_identity(self):
        raw = [-50.0, -60.0, -55.0]
        assert smooth_stream(raw, 1, 0.2) == raw

    def test_output_length(self):
        assert len(smooth_stream(list(range(7)), 4, 0.2)) == 7

    def test_invalid_q(self):
        with pytest.raises(ValueError):
            smooth_stream([1.0], 0, 0.2)


def test_smooth_frames_keeps_missing_streams_missing():
    frames = [
        RssFrame(0.0, {"a": -50.0, "b": -60.0}),
        RssFrame(1.0, {"a": -50.0}),
        RssFrame(2.0, {"a": -50.0, "b": -61.0}),
    ]
    out = smooth_frames(frames, ModelParams(q=3))
    assert "b" not in out[1].readings
    # stream b is filtered over the frames where it appears
    assert out[2].readings["b"] == pytest.approx((-60.0 - 61.0) / 2)


class TestFSurvival:
    def test_matches_scipy_to_1e8(self):
        for f in (0.1, 0.5, 1.0, 2.5, 3.84, 10.0, 55.0):
            for d1, d2 in ((1, 10), (1, 118), (1, 1558), (3, 7), (5, 40)):
                mine = f_survival(f, d1, d2)
                ref = scipy.stats.f.sf(f, d1, d2)
                assert abs(mine - ref) < 1e-8, (f, d1, d2)

    def test_edge_cases(self):
        assert f_survival(0.0, 1, 10) == 1.0
        assert f_survival(math.inf, 1, 10) == 0.0
        with pytest.raises(ValueError):
            f_survival(1.0, 0, 10)


class TestAnova:
    def test_identical_samples_kept_with_f_zero(self):
        samples = [-50.0, -51.0, -49.5, -50.2]
        decision = anova_stream_test(samples, list(samples), 0.05)
        assert decision.f_statistic == 0.0
        assert decision.kept

    def test_large_shift_rejected(self):
        # mean -50 (sd 1, N=100) vs -30 (sd 1, N=100): F far beyond the 0.05
        # critical value of F(1, 198), verified against scipy.
        rng = np.random.default_rng(0)
        offline = (rng.normal(-50, 1, 100)).tolist()
        online = (rng.normal(-30, 1, 100)).tolist()
        decision = anova_stream_test(offline, online, 0.05)
        f_crit = scipy.stats.f.isf(0.05, 1, 198)
        assert decision.f_statistic > f_crit
        assert not decision.kept

    def test_p_value_matches_scipy_f_oneway(self):
        rng = np.random.default_rng(1)
        a = rng.normal(-50, 2, 40).tolist()
        b = rng.normal(-49, 2, 55).tolist()
        decision = anova_stream_test(a, b, 0.05)
        ref = scipy.stats.f_oneway(a, b)
        assert decision.f_statistic == pytest.approx(ref.statistic, rel=1e-10)
        assert decision.p_value == pytest.approx(ref.pvalue, abs=1e-8)

    def test_group_swap_symmetry(self):
        rng = np.random.default_rng(2)
        a = rng.normal(-50, 2, 30).tolist()
        b = rng.normal(-52, 2, 45).tolist()
        d1 = anova_stream_test(a, b, 0.05)
        d2 = anova_stream_test(b, a, 0.05)
        assert d1.f_statistic == pytest.approx(d2.f_statistic, rel=1e-12)
        assert d1.p_value == pytest.approx(d2.p_value, rel=1e-12)

    def test_equal_constant_groups_kept(self):
        decision = anova_stream_test([-50.0] * 5, [-50.0] * 7, 0.05)
        assert decision.kept and decision.p_value == 1.0

    def test_constant_but_different_rejected(self):
        decision = anova_stream_test([-50.0] * 5, [-30.0] * 7, 0.05)
        assert not decision.kept and decision.p_value == 0.0

    def test_insufficient_data_kept_and_flagged(self):
        decision = anova_stream_test([-50.0], [-30.0] * 10, 0.05)
        assert decision.kept and decision.note == "insufficient data"

    def test_same_distribution_rejection_rate(self):
        # Quick check of the nominal level; the acceptance suite runs the
        # full 10,000-trial version.
        rng = np.random.default_rng(7)
        trials = 1500
        rejected = 0
        for _ in range(trials):
            a = rng.normal(-50, 2, 60)
            b = rng.normal(-50, 2, 60)
            f, p = anova_two_group(
                a.mean(), a.var(ddof=1), 60, b.mean(), b.var(ddof=1), 60
            )
            rejected += p < 0.05
        assert abs(rejected / trials - 0.05) < 0.025


def _stats_fingerprint(streams, mean=-60.0, var=1.0, count=200):
    fp = build_toy_fingerprint(streams=streams)
    stats = {s: (mean, var, count) for s in streams}
    return type(fp)(fp.locations, fp.neighbors, fp.temporal, fp.params, stats)


def _frames(values_by_stream, n=60, jitter=0.3, seed=0):
    rng = np.random.default_rng(seed)
    frames = []
    for i in range(n):
        frames.append(
            RssFrame(
                float(i),
                {
                    s: float(v + rng.normal(0, jitter))
                    for s, v in values_by_stream.items()
                },
            )
        )
    return frames


class TestSelectStreams:
    def test_all_unchanged_all_kept(self):
        fp = _stats_fingerprint(("a", "b", "c"), mean=-60.0, var=1.0)
        frames = _frames({"a": -60.0, "b": -60.0, "c": -60.0}, jitter=1.0)
        assert select_streams(fp, frames, 0.05) == {"a", "b", "c"}

    def test_shifted_stream_dropped(self):
        fp = _stats_fingerprint(("a", "b", "c"), mean=-60.0, var=1.0)
        frames = _frames({"a": -60.0, "b": -40.0, "c": -60.0}, jitter=1.0)
        assert select_streams(fp, frames, 0.05) == {"a", "c"}

    def test_all_shifted_keeps_single_survivor_with_warning(self):
        fp = _stats_fingerprint(("a", "b"), mean=-60.0, var=1.0)
        frames = _frames({"a": -40.0, "b": -35.0}, jitter=1.0)
        with pytest.warns(RuntimeWarning):
            kept = select_streams(fp, frames, 0.05)
        assert len(kept) == 1

    def test_no_stats_is_an_error(self):
        fp = _stats_fingerprint(())
        with pytest.raises(ValueError):
            select_streams(fp, _frames({"a": -60.0}), 0.05)
