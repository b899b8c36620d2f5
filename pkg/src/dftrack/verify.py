"""Randomized self-checks: min-cut vs exhaustive search, regularity sweep.

These suites generate small random models end to end (random histograms,
transition priors, histories and frames over random grid shapes) and confirm
that the max-flow labeling attains the exhaustive energy minimum and that
every generated pairwise table is graph-representable.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .fingerprint import Fingerprint, LocationFingerprint, RssHistogram, TemporalPrior
from .graphcut import (
    brute_force_map,
    build_cut_graph,
    check_regular,
    min_cut,
    total_energy,
)
from .types import EnvironmentMap, ModelParams, RssFrame, make_grid
from .fingerprint import four_neighbors_from_coords

_GRID_SHAPES = [
    (1, 1),
    (2, 1),
    (3, 1),
    (2, 2),
    (5, 1),
    (3, 2),
    (7, 1),
    (4, 2),
    (3, 3),
    (5, 2),
    (11, 1),
    (4, 3),
    (6, 2),
    (12, 1),
]


def _random_histogram(rng: np.random.Generator, origin: float, n_bins: int) -> RssHistogram:
    raw = rng.random(n_bins) + 0.05
    raw /= raw.sum()
    return RssHistogram(1.0, origin, tuple(raw.tolist()), n_samples=n_bins)


def _random_map(rng: np.random.Generator, n: int) -> EnvironmentMap:
    return EnvironmentMap(0.0, tuple(bool(b) for b in rng.integers(0, 2, size=n)))


def random_instance(
    rng: np.random.Generator, max_n: int = 12
) -> tuple[Fingerprint, RssFrame, EnvironmentMap, EnvironmentMap, ModelParams]:
    """One random inference problem: fingerprint, frame, history maps, params."""
    shapes = [s for s in _GRID_SHAPES if s[0] * s[1] <= max_n]
    nx, ny = shapes[rng.integers(0, len(shapes))]
    n = nx * ny
    grid = make_grid(nx, ny, float(nx), float(ny))

    k = int(rng.integers(1, 4))
    streams = [f"s{i}" for i in range(k)]
    origin = {s: float(-90 + rng.integers(0, 30)) for s in streams}
    n_bins = {s: int(rng.integers(6, 16)) for s in streams}

    locations = tuple(
        LocationFingerprint(
            grid[i],
            {s: _random_histogram(rng, origin[s], n_bins[s]) for s in streams},
            {s: _random_histogram(rng, origin[s], n_bins[s]) for s in streams},
        )
        for i in range(n)
    )
    totals = [[int(rng.integers(1, 60)) for _ in (0, 1)] for _ in (0, 1)]
    activations = [[int(rng.integers(0, totals[a][b] + 1)) for b in (0, 1)] for a in (0, 1)]
    temporal = TemporalPrior.from_counts(activations, totals)

    params = ModelParams(
        beta=float(rng.uniform(0.1, 1.0)),
        gamma=float(rng.uniform(0.1, 4.0)),
        delta=float(rng.uniform(0.1, 1.0)),
        hmm_order=int(rng.choice([1, 2])),
        spatial_contrast=str(rng.choice(["normalized", "literal"])),
    )

    fp = Fingerprint(
        locations=locations,
        neighbors=four_neighbors_from_coords(grid) if n > 1 else (),
        temporal=temporal,
        params=params,
        offline_stream_stats={},
    )

    # Readings sometimes land outside the histogram support to exercise the
    # edge-bin clamp; at least one stream is always present.
    present = [s for s in streams if rng.random() > 0.25] or [streams[0]]
    readings = {
        s: float(origin[s] + rng.uniform(-4.0, n_bins[s] + 4.0)) for s in present
    }
    frame = RssFrame(float(rng.uniform(0, 1000)), readings)
    return fp, frame, _random_map(rng, n), _random_map(rng, n), params


@dataclass(frozen=True)
class OracleReport:
    trials: int
    failures: int
    max_energy_gap: float
    elapsed_seconds: float

    @property
    def passed(self) -> bool:
        return self.failures == 0


def run_oracle_suite(
    trials: int = 1000, seed: int = 0, max_n: int = 12, tolerance: float = 1e-9
) -> OracleReport:
    """Compare min-cut energy with the exhaustive minimum on random instances."""
    rng = np.random.default_rng(seed)
    failures = 0
    max_gap = 0.0
    start = time.perf_counter()
    for _ in range(trials):
        fp, frame, prev, prev_prev, params = random_instance(rng, max_n)
        cut = min_cut(build_cut_graph(frame, prev, prev_prev, fp, params))
        exact = brute_force_map(frame, prev, prev_prev, fp, params)
        e_cut = total_energy(cut, frame, prev, prev_prev, fp, params)
        e_exact = total_energy(exact, frame, prev, prev_prev, fp, params)
        gap = abs(e_cut - e_exact)
        max_gap = max(max_gap, gap)
        if not (gap <= tolerance and math.isfinite(e_cut)):
            failures += 1
    return OracleReport(trials, failures, max_gap, time.perf_counter() - start)


def run_regularity_suite(trials: int = 10000, seed: int = 0, max_n: int = 12) -> tuple[bool, int]:
    """check_regular over freshly generated instances; returns (all ok, count)."""
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(trials):
        fp, frame, _, _, params = random_instance(rng, max_n)
        if not check_regular(fp, frame, params):
            ok = False
    return ok, trials
