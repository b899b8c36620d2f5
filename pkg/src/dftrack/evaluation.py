"""Pipeline orchestration and the distance/count evaluation metrics."""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass
from typing import Sequence

from .clustering import estimate_entities, hierarchical_cluster, merge_window
from .fingerprint import (
    Fingerprint,
    build_fingerprint,
    derive_training_maps,
)
from .graphcut import TrackerState, infer_map
from .preprocess import select_streams, smooth_frames
from .types import (
    EnvironmentMap,
    FrameEstimate,
    GridLocation,
    GroundTruthFrame,
    ModelParams,
    RssFrame,
    StreamId,
    nearest_location,
)

__all__ = [
    "PipelineError",
    "CalibrationData",
    "EvalReport",
    "distance_error",
    "count_error",
    "track_frames",
    "run_pipeline",
    "mean_locations_error",
    "export_heatmap",
    "center_from_grid",
]


class PipelineError(RuntimeError):
    """A pipeline stage failed; ``stage`` names the culprit."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"pipeline stage {stage!r} failed: {cause}")
        self.stage = stage


def center_from_grid(grid: Sequence[GridLocation]) -> tuple[float, float]:
    xs = [g.x for g in grid]
    ys = [g.y for g in grid]
    return ((min(xs) + max(xs)) / 2.0, (min(ys) + max(ys)) / 2.0)


def _greedy_match(
    estimates: Sequence[tuple[float, float]], truths: Sequence[tuple[float, float]]
) -> list[tuple[int, int, float]]:
    # Repeatedly pair the globally closest remaining (estimate, truth);
    # ties break on the smallest index pair. Input-order independent.
    pairs = sorted(
        (math.hypot(ex - tx, ey - ty), i, j)
        for i, (ex, ey) in enumerate(estimates)
        for j, (tx, ty) in enumerate(truths)
    )
    used_e: set[int] = set()
    used_t: set[int] = set()
    matched = []
    for d, i, j in pairs:
        if i in used_e or j in used_t:
            continue
        used_e.add(i)
        used_t.add(j)
        matched.append((i, j, d))
    return matched


def distance_error(
    estimate: FrameEstimate,
    truth: GroundTruthFrame,
    grid: Sequence[GridLocation],
    mode: str = "locations",
    testbed_center: tuple[float, float] | None = None,
) -> list[float]:
    """Per-entity distance errors for one frame.

    ``locations`` mode matches estimated entities greedily to their closest
    unmatched ground-truth entities on raw coordinates; ``zones`` mode snaps
    estimates, truths and the fallback center to the nearest grid center
    first. Ground-truth entities left unmatched (underestimated count) each
    contribute the distance from the testbed center.
    """
    if mode not in ("locations", "zones"):
        raise ValueError(f"mode must be 'locations' or 'zones', got {mode!r}")
    if testbed_center is None:
        testbed_center = center_from_grid(grid)

    est = list(estimate.entities)
    tru = truth.positions()
    center = testbed_center
    if mode == "zones":

        def snap(p):
            g = nearest_location(p[0], p[1], grid)
            return (g.x, g.y)

        est = [snap(p) for p in est]
        tru = [snap(p) for p in tru]
        center = snap(center)

    matched = _greedy_match(est, tru)
    errors = [d for _, _, d in matched]
    matched_truths = {j for _, j, _ in matched}
    for j, (tx, ty) in enumerate(tru):
        if j not in matched_truths:
            errors.append(math.hypot(center[0] - tx, center[1] - ty))
    return errors


def count_error(
    estimates: Sequence[FrameEstimate], truths: Sequence[GroundTruthFrame]
) -> list[int]:
    """Signed per-frame count differences (estimated minus true)."""
    if len(estimates) != len(truths):
        raise ValueError(
            f"{len(estimates)} estimates vs {len(truths)} ground-truth frames"
        )
    errors = []
    for est, tru in zip(estimates, truths):
        if est.timestamp != tru.timestamp:
            raise ValueError(
                f"timestamp mismatch: estimate {est.timestamp} vs truth {tru.timestamp}"
            )
        errors.append(est.m_hat - tru.count)
    return errors


def _cdf(samples: Sequence[float]) -> tuple[tuple[float, ...], tuple[float, ...]]:
    if not samples:
        return ((), ())
    ordered = sorted(samples)
    n = len(ordered)
    return (tuple(ordered), tuple((i + 1) / n for i in range(n)))


def _median(samples: Sequence[float]) -> float:
    if not samples:
        return math.nan
    ordered = sorted(samples)
    mid = len(ordered) // 2
    if len(ordered) % 2:
        return ordered[mid]
    return (ordered[mid - 1] + ordered[mid]) / 2.0


@dataclass(frozen=True)
class EvalReport:
    """Per-frame error lists plus their summary statistics."""

    locations_errors: tuple[tuple[float, ...], ...] = ()
    zones_errors: tuple[tuple[float, ...], ...] = ()
    count_errors: tuple[int, ...] = ()
    runtimes_ms: tuple[float, ...] = ()

    @property
    def locations_samples(self) -> list[float]:
        return [e for frame in self.locations_errors for e in frame]

    @property
    def zones_samples(self) -> list[float]:
        return [e for frame in self.zones_errors for e in frame]

    @property
    def median_locations_error(self) -> float:
        return _median(self.locations_samples)

    @property
    def mean_locations_error(self) -> float:
        samples = self.locations_samples
        return sum(samples) / len(samples) if samples else math.nan

    @property
    def median_zones_error(self) -> float:
        return _median(self.zones_samples)

    @property
    def mean_zones_error(self) -> float:
        samples = self.zones_samples
        return sum(samples) / len(samples) if samples else math.nan

    @property
    def locations_cdf(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        return _cdf(self.locations_samples)

    @property
    def zones_cdf(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        return _cdf(self.zones_samples)

    @property
    def fraction_count_within_one(self) -> float:
        if not self.count_errors:
            return math.nan
        good = sum(1 for e in self.count_errors if abs(e) <= 1)
        return good / len(self.count_errors)

    def to_dict(self) -> dict:
        def clean(v: float) -> float | None:
            return None if isinstance(v, float) and math.isnan(v) else v

        loc_cdf = self.locations_cdf
        zone_cdf = self.zones_cdf
        return {
            "locations_errors": [list(f) for f in self.locations_errors],
            "zones_errors": [list(f) for f in self.zones_errors],
            "count_errors": list(self.count_errors),
            "runtimes_ms": list(self.runtimes_ms),
            "median_locations_error": clean(self.median_locations_error),
            "mean_locations_error": clean(self.mean_locations_error),
            "median_zones_error": clean(self.median_zones_error),
            "mean_zones_error": clean(self.mean_zones_error),
            "fraction_count_within_one": clean(self.fraction_count_within_one),
            "locations_cdf": {"values": list(loc_cdf[0]), "fractions": list(loc_cdf[1])},
            "zones_cdf": {"values": list(zone_cdf[0]), "fractions": list(zone_cdf[1])},
        }


@dataclass(frozen=True)
class CalibrationData:
    """Raw offline inputs: sessions plus optional baseline and training walk."""

    sessions: tuple[tuple[GridLocation, tuple[RssFrame, ...]], ...]
    grid: tuple[GridLocation, ...]
    baseline_frames: tuple[RssFrame, ...] | None = None
    training_truth: tuple[GroundTruthFrame, ...] | None = None


def build_fingerprint_from_calibration(
    calibration: CalibrationData, params: ModelParams
) -> Fingerprint:
    """Smooth the sessions and train the full model.

    The baseline stays raw: the stream-shift test compares raw readings on
    both sides (smoothed samples are autocorrelated, which would make the
    F-test anticonservative).
    """
    smoothed = [
        (loc, smooth_frames(frames, params)) for loc, frames in calibration.sessions
    ]
    baseline = (
        tuple(calibration.baseline_frames)
        if calibration.baseline_frames is not None
        else None
    )
    maps = None
    if calibration.training_truth:
        maps = [derive_training_maps(calibration.training_truth, calibration.grid)]
    return build_fingerprint(
        smoothed,
        calibration.grid,
        params,
        baseline_frames=baseline,
        training_maps=maps,
    )


def track_frames(
    fp: Fingerprint,
    params: ModelParams,
    frames: Sequence[RssFrame],
    collect: bool = False,
) -> tuple[list[FrameEstimate], list[EnvironmentMap], list[float]]:
    """Run the per-frame inference loop over an already-filtered trace.

    Returns (estimates, maps, per-frame inference milliseconds); maps and
    times are only populated when ``collect`` is true.
    """
    grid = fp.grid
    state = TrackerState.initial(fp.n, params.w)
    estimates: list[FrameEstimate] = []
    maps: list[EnvironmentMap] = []
    times: list[float] = []
    for frame in frames:
        start = time.perf_counter()
        env_map = infer_map(state, frame, fp, params)
        candidates = merge_window(state.map_window, grid)
        clusters = hierarchical_cluster(candidates, params.r)
        estimates.append(estimate_entities(clusters, frame.timestamp))
        elapsed = (time.perf_counter() - start) * 1000.0
        if collect:
            maps.append(env_map)
            times.append(elapsed)
    return estimates, maps, times


def _filter_streams(
    frames: Sequence[RssFrame], kept: set[StreamId]
) -> list[RssFrame]:
    return [
        RssFrame(f.timestamp, {s: v for s, v in f.readings.items() if s in kept})
        for f in frames
    ]


def run_pipeline(
    calibration: CalibrationData,
    test_trace: Sequence[RssFrame],
    params: ModelParams,
    truth: Sequence[GroundTruthFrame] | None = None,
    fingerprint: Fingerprint | None = None,
) -> tuple[list[FrameEstimate], EvalReport]:
    """Offline training then online tracking, with optional evaluation.

    Stages: smooth calibration and build (or reuse) the fingerprint, smooth
    the test trace, select streams on the first ``anova_window`` online
    frames, then per frame infer the map, merge the window, cluster, and
    estimate. The report carries both error metrics when ground truth is
    given, and per-frame inference runtimes always.
    """

    def stage(name: str, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Exception as exc:
            raise PipelineError(name, exc) from exc

    if fingerprint is None:
        fingerprint = stage(
            "calibration", build_fingerprint_from_calibration, calibration, params
        )
    if not test_trace:
        return [], EvalReport()

    smoothed = stage("smoothing", smooth_frames, test_trace, params)
    # Selection statistics use raw readings (smoothed samples share window
    # contents frame to frame, which would understate the mean's variance).
    window = list(test_trace)[: params.anova_window]
    kept = stage(
        "stream-selection", select_streams, fingerprint, window, params.anova_significance
    )
    filtered = stage("stream-filter", _filter_streams, smoothed, kept)
    estimates, _, times = stage(
        "tracking", track_frames, fingerprint, params, filtered, True
    )

    if truth is None:
        return estimates, EvalReport(runtimes_ms=tuple(times))

    center = center_from_grid(calibration.grid)
    locations_errors = []
    zones_errors = []
    for est, tru in zip(estimates, truth):
        locations_errors.append(
            tuple(distance_error(est, tru, calibration.grid, "locations", center))
        )
        zones_errors.append(
            tuple(distance_error(est, tru, calibration.grid, "zones", center))
        )
    counts = stage("metrics", count_error, estimates, list(truth))
    report = EvalReport(
        locations_errors=tuple(locations_errors),
        zones_errors=tuple(zones_errors),
        count_errors=tuple(counts),
        runtimes_ms=tuple(times),
    )
    return estimates, report


def mean_locations_error(
    fp: Fingerprint,
    params: ModelParams,
    held_out: Sequence[tuple[Sequence[RssFrame], Sequence[GroundTruthFrame]]],
) -> float:
    """Mean locations-based error of tracking the held-out traces.

    Used by the parameter grid search: traces are smoothed with the candidate
    parameters and tracked against the full stream set.
    """
    grid = fp.grid
    center = center_from_grid(grid)
    samples: list[float] = []
    for frames, truth in held_out:
        smoothed = smooth_frames(frames, params)
        estimates, _, _ = track_frames(fp, params, smoothed)
        for est, tru in zip(estimates, truth):
            samples.extend(distance_error(est, tru, grid, "locations", center))
    return sum(samples) / len(samples) if samples else 0.0


def export_heatmap(
    window_maps: Sequence[EnvironmentMap],
    grid: Sequence[GridLocation],
    path: str | os.PathLike,
) -> None:
    """Write per-location window activation counts as CSV, one row per grid y."""
    xs = sorted({g.x for g in grid})
    ys = sorted({g.y for g in grid})
    if len(xs) * len(ys) != len(grid):
        raise ValueError("grid coordinates do not form a full regular lattice")
    col = {x: i for i, x in enumerate(xs)}
    row = {y: i for i, y in enumerate(ys)}
    counts = [[0] * len(xs) for _ in ys]
    for env_map in window_maps:
        if len(env_map) != len(grid):
            raise ValueError("map length does not match grid size")
        for g in grid:
            if env_map.active[g.index]:
                counts[row[g.y]][col[g.x]] += 1
    with open(path, "w", encoding="utf-8") as fh:
        for line in counts:
            fh.write(",".join(str(v) for v in line) + "\n")
