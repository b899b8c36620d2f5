"""Shared fixtures: hand-built fingerprints and a small simulated deployment."""

import math

import pytest

from dftrack.fingerprint import (
    Fingerprint,
    LocationFingerprint,
    RssHistogram,
    TemporalPrior,
)
from dftrack.types import ModelParams, make_grid
from dftrack.fingerprint import four_neighbors_from_coords


def histogram_from_probs(probs, origin=-60.0, bin_width=1.0, n_samples=0):
    return RssHistogram(bin_width, origin, tuple(probs), n_samples)


def uniform_prior(p=0.5):
    return TemporalPrior(((p, p), (p, p)))


def build_toy_fingerprint(
    nx=2,
    ny=2,
    active_probs=None,
    inactive_probs=None,
    prior=None,
    params=None,
    streams=("s0",),
    per_location_active=None,
):
    """Fingerprint over an nx-by-ny unit grid with shared or per-location bins.

    ``per_location_active`` optionally maps location index -> probs to
    override the active histogram of specific locations (all streams).
    """
    grid = make_grid(nx, ny, float(nx), float(ny))
    active_probs = active_probs or (0.7, 0.3)
    inactive_probs = inactive_probs or (0.4, 0.6)
    locations = []
    for loc in grid:
        a_probs = active_probs
        if per_location_active and loc.index in per_location_active:
            a_probs = per_location_active[loc.index]
        active = {s: histogram_from_probs(a_probs) for s in streams}
        inactive = {s: histogram_from_probs(inactive_probs) for s in streams}
        locations.append(LocationFingerprint(loc, active, inactive))
    n = nx * ny
    return Fingerprint(
        locations=tuple(locations),
        neighbors=four_neighbors_from_coords(grid) if n > 1 else (),
        temporal=prior or uniform_prior(),
        params=params or ModelParams(),
        offline_stream_stats={s: (-60.0, 1.0, 10) for s in streams},
    )


@pytest.fixture(scope="session")
def small_testbed():
    """3x3 simulated deployment shared by the slower integration tests."""
    import dftrack.simulate as sim
    from dftrack.evaluation import CalibrationData

    config = sim.default_config(grid_nx=3, grid_ny=3, calib_frames=25, seed=5)
    sessions = sim.generate_calibration(config)
    baseline = sim.generate_baseline(config)
    walk = sim.random_walk(config, duration=120.0)
    _, walk_truth = sim.generate_test(config, [walk])
    calibration = CalibrationData(
        tuple((loc, tuple(frames)) for loc, frames in sessions),
        config.grid,
        tuple(baseline),
        tuple(walk_truth),
    )
    return config, calibration


@pytest.fixture(scope="session")
def small_fingerprint(small_testbed):
    from dftrack.evaluation import build_fingerprint_from_calibration

    config, calibration = small_testbed
    params = ModelParams(w=5)
    return config, build_fingerprint_from_calibration(calibration, params), params


def assert_close(a, b, tol=1e-9):
    assert math.isfinite(a) and math.isfinite(b), (a, b)
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"
