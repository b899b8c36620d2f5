import json
import math

import pytest

from dftrack.evaluation import (
    CalibrationData,
    EvalReport,
    PipelineError,
    center_from_grid,
    count_error,
    distance_error,
    export_heatmap,
    mean_locations_error,
    run_pipeline,
    track_frames,
)
from dftrack.types import (
    EnvironmentMap,
    FrameEstimate,
    GroundTruthFrame,
    ModelParams,
    RssFrame,
    make_grid,
)


GRID = make_grid(5, 5, 10.0, 10.0)
CENTER = (5.0, 5.0)


def _truth(*positions, t=0.0):
    return GroundTruthFrame(t, tuple((f"e{i}", x, y) for i, (x, y) in enumerate(positions)))


class TestDistanceError:
    def test_perfect_single_entity(self):
        est = FrameEstimate(0.0, ((3.0, 5.0),))
        assert distance_error(est, _truth((3.0, 5.0)), GRID, "locations", CENTER) == [0.0]

    def test_missed_entity_falls_back_to_center(self):
        est = FrameEstimate(0.0, ())
        errors = distance_error(est, _truth((1.0, 1.0)), GRID, "locations", (5.0, 5.0))
        assert errors == [pytest.approx(math.hypot(4.0, 4.0))]

    def test_crossed_estimates_matched_greedily(self):
        est = FrameEstimate(0.0, ((0.0, 0.0), (10.0, 0.0)))
        truth = _truth((9.5, 0.0), (0.5, 0.0))
        errors = distance_error(est, truth, GRID, "locations", CENTER)
        # enumeration oracle over both pairings
        d = lambda a, b: math.hypot(a[0] - b[0], a[1] - b[1])  # noqa: E731
        pairing_a = d((0.0, 0.0), (9.5, 0.0)) + d((10.0, 0.0), (0.5, 0.0))
        pairing_b = d((0.0, 0.0), (0.5, 0.0)) + d((10.0, 0.0), (9.5, 0.0))
        assert sum(errors) == pytest.approx(min(pairing_a, pairing_b))
        assert sorted(errors) == [0.5, 0.5]

    def test_extra_estimates_contribute_nothing(self):
        est = FrameEstimate(0.0, ((3.0, 5.0), (9.0, 9.0)))
        errors = distance_error(est, _truth((3.0, 5.0)), GRID, "locations", CENTER)
        assert errors == [0.0]

    def test_zones_mode_snaps_to_grid_centers(self):
        est = FrameEstimate(0.0, ((3.4, 4.8),))  # nearest center (3, 5)
        truth = _truth((2.8, 5.3))  # also nearest (3, 5)
        assert distance_error(est, truth, GRID, "zones", CENTER) == [0.0]

    def test_zones_errors_are_grid_center_distances(self):
        est = FrameEstimate(0.0, ((1.2, 1.1), (6.4, 9.2)))
        truth = _truth((8.9, 1.0), (1.0, 8.8), (4.9, 5.1))
        errors = distance_error(est, truth, GRID, "zones", CENTER)
        centers = [(g.x, g.y) for g in GRID]
        achievable = {
            math.hypot(ax - bx, ay - by)
            for ax, ay in centers
            for bx, by in centers
        }
        for e in errors:
            assert any(abs(e - a) < 1e-9 for a in achievable)

    def test_zones_fallback_uses_snapped_center(self):
        # center (5, 5) is itself a grid center on this grid
        est = FrameEstimate(0.0, ())
        errors = distance_error(est, _truth((1.2, 1.1)), GRID, "zones", (5.0, 5.0))
        assert errors == [pytest.approx(math.hypot(4.0, 4.0))]

    def test_invalid_mode(self):
        with pytest.raises(ValueError):
            distance_error(FrameEstimate(0.0, ()), _truth(), GRID, "nearest", CENTER)

    def test_locations_zero_iff_exact_match(self):
        est = FrameEstimate(0.0, ((3.1, 5.0),))
        errors = distance_error(est, _truth((3.0, 5.0)), GRID, "locations", CENTER)
        assert errors[0] > 0.0


class TestCountError:
    def test_exact_counts_give_zeros(self):
        est = [FrameEstimate(0.0, ((1.0, 1.0),)), FrameEstimate(1.0, ())]
        tru = [_truth((1.0, 1.0), t=0.0), _truth(t=1.0)]
        assert count_error(est, tru) == [0, 0]

    def test_signed_differences(self):
        est = [FrameEstimate(0.0, ((1.0, 1.0), (2.0, 2.0), (3.0, 3.0)))]
        tru = [_truth((1.0, 1.0), (2.0, 2.0), t=0.0)]
        assert count_error(est, tru) == [1]

    def test_constant_zero_estimator(self):
        est = [FrameEstimate(float(t), ()) for t in range(5)]
        tru = [_truth((1.0, 1.0), (2.0, 2.0), t=float(t)) for t in range(5)]
        assert count_error(est, tru) == [-2] * 5

    def test_timestamp_mismatch_rejected(self):
        est = [FrameEstimate(0.0, ())]
        tru = [_truth(t=1.0)]
        with pytest.raises(ValueError, match="timestamp"):
            count_error(est, tru)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            count_error([FrameEstimate(0.0, ())], [])


class TestEvalReport:
    def test_cdf_nondecreasing_zero_to_one(self):
        report = EvalReport(locations_errors=((1.0, 3.0), (2.0,), (0.5, 0.5)))
        values, fractions = report.locations_cdf
        assert values == tuple(sorted(values))
        assert all(b >= a for a, b in zip(fractions, fractions[1:]))
        assert fractions[0] > 0.0
        assert fractions[-1] == 1.0

    def test_cdf_is_exact_empirical_distribution(self):
        report = EvalReport(locations_errors=((2.0, 1.0, 2.0),))
        values, fractions = report.locations_cdf
        assert values == (1.0, 2.0, 2.0)
        assert fractions == (pytest.approx(1 / 3), pytest.approx(2 / 3), 1.0)

    def test_median_consistent_with_samples(self):
        report = EvalReport(locations_errors=((1.0,), (5.0,), (3.0,)))
        assert report.median_locations_error == 3.0
        report = EvalReport(locations_errors=((1.0, 5.0), (7.0, 3.0)))
        assert report.median_locations_error == 4.0

    def test_fraction_count_within_one(self):
        report = EvalReport(count_errors=(0, 1, -1, 2, 0))
        assert report.fraction_count_within_one == pytest.approx(4 / 5)

    def test_to_dict_is_json_serializable(self):
        report = EvalReport(
            locations_errors=((1.0,),),
            zones_errors=((2.0,),),
            count_errors=(0,),
            runtimes_ms=(1.5,),
        )
        blob = json.dumps(report.to_dict())
        parsed = json.loads(blob)
        assert parsed["median_locations_error"] == 1.0

    def test_empty_report_statistics_are_nan(self):
        report = EvalReport()
        assert math.isnan(report.median_locations_error)
        assert report.to_dict()["median_locations_error"] is None


class TestRunPipeline:
    def test_empty_trace_empty_report(self, small_testbed):
        config, calibration = small_testbed
        estimates, report = run_pipeline(calibration, [], ModelParams(w=5))
        assert estimates == []
        assert report == EvalReport()

    def test_stage_attribution_on_failure(self, small_testbed):
        config, calibration = small_testbed
        broken = CalibrationData(
            calibration.sessions[:1], calibration.grid, None, None
        )
        frames = [RssFrame(0.0, {"ap0-mp0": -50.0})]
        with pytest.raises(PipelineError) as err:
            run_pipeline(broken, frames, ModelParams(w=5))
        assert err.value.stage == "calibration"

    def test_report_reproducible_apart_from_runtimes(self, small_testbed, small_fingerprint):
        import dftrack.simulate as sim

        config, calibration = small_testbed
        _, fp, params = small_fingerprint
        trajs = sim.static_trajectories(
            config, 1, start=10.0, dwell=30.0,
            positions=[(config.width * 0.3, config.height * 0.5)],
        )
        frames, truth = sim.generate_test(config, trajs, start=0.0)
        est1, rep1 = run_pipeline(calibration, frames, params, truth, fingerprint=fp)
        est2, rep2 = run_pipeline(calibration, frames, params, truth, fingerprint=fp)
        assert est1 == est2
        assert rep1.locations_errors == rep2.locations_errors
        assert rep1.zones_errors == rep2.zones_errors
        assert rep1.count_errors == rep2.count_errors

    def test_runtimes_collected_per_frame(self, small_testbed, small_fingerprint):
        import dftrack.simulate as sim

        config, calibration = small_testbed
        _, fp, params = small_fingerprint
        frames, _ = sim.generate_test(config, [], duration=8.0)
        estimates, report = run_pipeline(calibration, frames, params, fingerprint=fp)
        assert len(report.runtimes_ms) == len(frames) == len(estimates)
        assert all(t >= 0 for t in report.runtimes_ms)


class TestExportHeatmap:
    def test_all_inactive_writes_zero_grid(self, tmp_path):
        grid = make_grid(3, 2, 3.0, 2.0)
        maps = [EnvironmentMap(float(t), (False,) * 6) for t in range(13)]
        path = tmp_path / "h.csv"
        export_heatmap(maps, grid, path)
        rows = [line.split(",") for line in path.read_text().strip().split("\n")]
        assert rows == [["0", "0", "0"], ["0", "0", "0"]]

    def test_persistent_cell_counts_window_length(self, tmp_path):
        grid = make_grid(3, 2, 3.0, 2.0)
        active = tuple(i == 4 for i in range(6))  # (x=1, y=1) in row-major
        maps = [EnvironmentMap(float(t), active) for t in range(13)]
        path = tmp_path / "h.csv"
        export_heatmap(maps, grid, path)
        rows = [line.split(",") for line in path.read_text().strip().split("\n")]
        assert rows[1][1] == "13"

    def test_reparse_round_trip(self, tmp_path):
        import numpy as np

        grid = make_grid(4, 3, 4.0, 3.0)
        rng = np.random.default_rng(0)
        maps = [
            EnvironmentMap(float(t), tuple(bool(b) for b in rng.integers(0, 2, 12)))
            for t in range(7)
        ]
        path = tmp_path / "h.csv"
        export_heatmap(maps, grid, path)
        rows = [
            [int(v) for v in line.split(",")]
            for line in path.read_text().strip().split("\n")
        ]
        for g in grid:
            expected = sum(m.active[g.index] for m in maps)
            assert rows[int(g.y // 1)][int(g.x // 1)] == expected


def test_center_from_grid():
    assert center_from_grid(GRID) == (5.0, 5.0)


def test_broken_stream_dropped_and_tracking_survives(small_testbed, small_fingerprint):
    # a +20 dBm environmental shift on one stream between calibration and
    # tracking: selection drops exactly that stream, the rest still track
    import dftrack.simulate as sim
    from dftrack.preprocess import select_streams

    config, calibration = small_testbed
    _, fp, params = small_fingerprint
    target = (config.width * 0.3, config.height * 0.5)
    trajs = sim.static_trajectories(
        config, 1, start=float(params.anova_window), dwell=60.0, positions=[target]
    )
    frames, truth = sim.generate_test(config, trajs, start=0.0)
    broken = "ap0-mp0"
    shifted = [
        RssFrame(
            f.timestamp,
            {s: v + (20.0 if s == broken else 0.0) for s, v in f.readings.items()},
        )
        for f in frames
    ]
    kept = select_streams(fp, shifted[: params.anova_window], params.anova_significance)
    assert kept == set(fp.streams) - {broken}
    estimates, report = run_pipeline(calibration, shifted, params, truth, fingerprint=fp)
    tail = estimates[-20:]  # steady state once the tracker has locked on
    detected = sum(1 for e in tail if e.m_hat > 0)
    assert detected >= 15


def test_concurrent_traces_share_one_fingerprint(small_testbed, small_fingerprint):
    # distinct traces may run in parallel on the same immutable fingerprint;
    # results must match the sequential ones
    from concurrent.futures import ThreadPoolExecutor

    import dftrack.simulate as sim

    config, _ = small_testbed
    _, fp, params = small_fingerprint
    traces = []
    for n_entities in (0, 1):
        trajs = sim.static_trajectories(
            config, n_entities, start=5.0, dwell=25.0,
            positions=[(config.width * 0.3, config.height * 0.5)],
        )
        frames, _ = sim.generate_test(config, trajs, start=0.0, duration=30.0)
        traces.append(frames)
    sequential = [track_frames(fp, params, t)[0] for t in traces]
    with ThreadPoolExecutor(max_workers=2) as pool:
        parallel = list(pool.map(lambda t: track_frames(fp, params, t)[0], traces))
    assert parallel == sequential


def test_mean_locations_error_empty_truth_is_zero(small_fingerprint):
    _, fp, params = small_fingerprint
    frames = [RssFrame(float(t), {s: -45.0 for s in fp.streams}) for t in range(3)]
    truth = [GroundTruthFrame(float(t), ()) for t in range(3)]
    assert mean_locations_error(fp, params, [(frames, truth)]) == 0.0
