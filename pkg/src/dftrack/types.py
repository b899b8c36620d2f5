"""Shared domain types for device-free RSS tracking.

Everything here is immutable after construction and safe to share across
concurrent readers. A "stream" is one (access point, monitoring point) pair
identified by an opaque string.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

StreamId = str


@dataclass(frozen=True, order=True)
class GridLocation:
    """One discrete candidate location on the fingerprint grid."""

    index: int
    x: float
    y: float

    def distance_to(self, x: float, y: float) -> float:
        return math.hypot(self.x - x, self.y - y)


@dataclass(frozen=True)
class RssFrame:
    """One time-stamped vector of RSS readings in dBm, keyed by stream id.

    Streams filtered out (or simply not heard) are absent from ``readings``
    rather than carrying a sentinel value; consumers skip absent streams.
    """

    timestamp: float
    readings: Mapping[StreamId, float]

    def __post_init__(self) -> None:
        for stream, value in self.readings.items():
            if not math.isfinite(value):
                raise ValueError(f"non-finite RSS for stream {stream!r}: {value}")


@dataclass(frozen=True)
class EnvironmentMap:
    """Binary activation vector over the grid at one time step."""

    timestamp: float
    active: tuple[bool, ...]

    def __len__(self) -> int:
        return len(self.active)

    @property
    def entity_count(self) -> int:
        """Number of active locations (the pre-clustering entity estimate)."""
        return sum(self.active)

    @staticmethod
    def all_inactive(n: int, timestamp: float = 0.0) -> "EnvironmentMap":
        return EnvironmentMap(timestamp, (False,) * n)


@dataclass(frozen=True)
class GroundTruthFrame:
    """True entity positions at one time step."""

    timestamp: float
    entities: tuple[tuple[str, float, float], ...]

    @property
    def count(self) -> int:
        return len(self.entities)

    def positions(self) -> list[tuple[float, float]]:
        return [(x, y) for _, x, y in self.entities]


_SPATIAL_CONTRAST_MODES = ("normalized", "literal")


@dataclass(frozen=True)
class ModelParams:
    """Tunable model parameters.

    beta, gamma, delta and q were frozen from a simulator sweep; see
    fit_params for re-tuning the energy discounts on held-out data.
    """

    beta: float = 0.25
    gamma: float = 0.18
    delta: float = 1.0
    q: int = 7
    alpha_trim: float = 0.2
    anova_significance: float = 0.05
    hist_bin_width: float = 1.0
    hist_smooth_sigma: float = 2.0
    hist_uniform_mix: float = 0.1
    w: int = 13
    r: float = 0.25
    hmm_order: int = 2
    spatial_contrast: str = "normalized"
    anova_window: int = 60

    def __post_init__(self) -> None:
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if not self.gamma > 0.0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError(f"delta must be in (0, 1], got {self.delta}")
        if self.q < 1:
            raise ValueError(f"q must be >= 1, got {self.q}")
        if not 0.0 <= self.alpha_trim < 0.5:
            raise ValueError(f"alpha_trim must be in [0, 0.5), got {self.alpha_trim}")
        if not 0.0 < self.anova_significance < 1.0:
            raise ValueError(
                f"anova_significance must be in (0, 1), got {self.anova_significance}"
            )
        if self.hist_bin_width <= 0.0:
            raise ValueError(f"hist_bin_width must be > 0, got {self.hist_bin_width}")
        if self.hist_smooth_sigma <= 0.0:
            raise ValueError(
                f"hist_smooth_sigma must be > 0, got {self.hist_smooth_sigma}"
            )
        if not 0.0 <= self.hist_uniform_mix < 1.0:
            raise ValueError(
                f"hist_uniform_mix must be in [0, 1), got {self.hist_uniform_mix}"
            )
        if self.w < 1:
            raise ValueError(f"w must be >= 1, got {self.w}")
        if not self.r > 0.0:
            raise ValueError(f"r must be > 0, got {self.r}")
        if self.hmm_order not in (1, 2):
            raise ValueError(f"hmm_order must be 1 or 2, got {self.hmm_order}")
        if self.spatial_contrast not in _SPATIAL_CONTRAST_MODES:
            raise ValueError(
                f"spatial_contrast must be one of {_SPATIAL_CONTRAST_MODES}, "
                f"got {self.spatial_contrast!r}"
            )
        if self.anova_window < 1:
            raise ValueError(f"anova_window must be >= 1, got {self.anova_window}")


@dataclass(frozen=True)
class FrameEstimate:
    """Estimated entity count and continuous coordinates for one frame."""

    timestamp: float
    entities: tuple[tuple[float, float], ...] = field(default=())

    @property
    def m_hat(self) -> int:
        return len(self.entities)

    @property
    def detected(self) -> bool:
        return self.m_hat > 0


def make_grid(nx: int, ny: int, width: float, height: float) -> tuple[GridLocation, ...]:
    """Uniform nx-by-ny grid of cell centers over a width-by-height area.

    Indices are dense row-major: index = iy * nx + ix.
    """
    if nx < 1 or ny < 1:
        raise ValueError(f"grid dimensions must be >= 1, got {nx}x{ny}")
    if width <= 0 or height <= 0:
        raise ValueError(f"area dimensions must be > 0, got {width}x{height}")
    dx = width / nx
    dy = height / ny
    return tuple(
        GridLocation(iy * nx + ix, (ix + 0.5) * dx, (iy + 0.5) * dy)
        for iy in range(ny)
        for ix in range(nx)
    )


def four_neighbor_pairs(nx: int, ny: int) -> tuple[tuple[int, int], ...]:
    """Adjacent (i, j) index pairs, i < j, of a row-major nx-by-ny grid."""
    pairs: list[tuple[int, int]] = []
    for iy in range(ny):
        for ix in range(nx):
            i = iy * nx + ix
            if ix + 1 < nx:
                pairs.append((i, i + 1))
            if iy + 1 < ny:
                pairs.append((i, i + nx))
    return tuple(sorted(pairs))


def nearest_location(x: float, y: float, grid: Sequence[GridLocation]) -> GridLocation:
    """Closest grid location to (x, y); ties broken by smallest index."""
    if not grid:
        raise ValueError("empty grid")
    return min(grid, key=lambda g: (g.distance_to(x, y), g.index))


def grid_pitch(grid: Sequence[GridLocation]) -> float:
    """Smallest positive spacing between distinct grid coordinates.

    Falls back to 1.0 for a single-location grid.
    """
    xs = sorted({g.x for g in grid})
    ys = sorted({g.y for g in grid})
    gaps = [b - a for a, b in zip(xs, xs[1:])] + [b - a for a, b in zip(ys, ys[1:])]
    gaps = [g for g in gaps if g > 0]
    return min(gaps) if gaps else 1.0
