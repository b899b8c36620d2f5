"""Synthetic testbeds: RSS traces with controllable noise and ground truth.

The propagation model is deliberately simple: each entity subtracts a
gaussian bump of the distance to the AP-MP segment from that stream's
baseline, effects of multiple entities add, and gaussian plus occasional
impulse noise is layered on top. The tracker is fingerprint-based, so it
learns whatever this model emits; no fidelity to real 802.11 propagation is
claimed.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .types import GridLocation, GroundTruthFrame, RssFrame, StreamId, make_grid

__all__ = [
    "TestbedConfig",
    "Trajectory",
    "default_config",
    "load_config",
    "save_config",
    "segment_distance",
    "rss_model",
    "generate_calibration",
    "generate_baseline",
    "generate_test",
    "random_walk",
    "static_trajectories",
    "default_entity_positions",
]


@dataclass(frozen=True)
class TestbedConfig:
    """Geometry and noise parameters of a synthetic deployment."""

    __test__ = False  # not a pytest class, despite the name

    width: float = 10.0
    height: float = 10.0
    grid_nx: int = 5
    grid_ny: int = 5
    # Two wall-hugging horizontal streams, two diagonals and two fan segments:
    # every grid cell sits within a couple of meters of some stream.
    ap_positions: tuple[tuple[float, float], ...] = ((0.0, 1.5), (0.0, 8.5), (5.0, 0.0))
    mp_positions: tuple[tuple[float, float], ...] = ((10.0, 1.5), (10.0, 8.5))
    baseline_rss: tuple[float, ...] = (-45.0,)
    noise_sigma: float = 2.0
    impulse_prob: float = 0.02
    impulse_magnitude: float = 25.0
    attenuation_peak: float = 8.0
    attenuation_radius: float = 1.1
    seed: int = 7
    calib_frames: int = 60

    def __post_init__(self) -> None:
        if self.grid_nx < 1 or self.grid_ny < 1:
            raise ValueError("grid dimensions must be >= 1")
        if not self.ap_positions or not self.mp_positions:
            raise ValueError("need at least one AP and one MP")
        for x, y in (*self.ap_positions, *self.mp_positions):
            if not (0.0 <= x <= self.width and 0.0 <= y <= self.height):
                raise ValueError(f"position ({x}, {y}) outside the testbed bounds")
        k = self.n_streams
        baseline = self.baseline_rss
        if len(baseline) == 1 and k > 1:
            object.__setattr__(self, "baseline_rss", baseline * k)
        elif len(baseline) != k:
            raise ValueError(
                f"baseline_rss has {len(baseline)} entries for {k} streams"
            )
        if self.attenuation_radius <= 0:
            raise ValueError("attenuation_radius must be > 0")
        if not 0.0 <= self.impulse_prob <= 1.0:
            raise ValueError("impulse_prob must be in [0, 1]")
        if self.calib_frames < 1:
            raise ValueError("calib_frames must be >= 1")

    @property
    def n(self) -> int:
        return self.grid_nx * self.grid_ny

    @property
    def n_streams(self) -> int:
        return len(self.ap_positions) * len(self.mp_positions)

    @property
    def stream_ids(self) -> tuple[StreamId, ...]:
        return tuple(
            f"ap{a}-mp{m}"
            for a in range(len(self.ap_positions))
            for m in range(len(self.mp_positions))
        )

    @property
    def segments(self) -> tuple[tuple[tuple[float, float], tuple[float, float]], ...]:
        return tuple(
            (ap, mp) for ap in self.ap_positions for mp in self.mp_positions
        )

    @property
    def grid(self) -> tuple[GridLocation, ...]:
        return make_grid(self.grid_nx, self.grid_ny, self.width, self.height)

    @property
    def center(self) -> tuple[float, float]:
        return (self.width / 2.0, self.height / 2.0)


def default_config(**overrides) -> TestbedConfig:
    """The 25-location, 6-stream reference testbed."""
    return replace(TestbedConfig(), **overrides) if overrides else TestbedConfig()


def segment_distance(
    px: float, py: float, a: tuple[float, float], b: tuple[float, float]
) -> float:
    """Distance from point (px, py) to the segment a-b."""
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    seg_sq = dx * dx + dy * dy
    if seg_sq == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / seg_sq
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def _attenuation(
    entities: Sequence[tuple[float, float]],
    segment: tuple[tuple[float, float], tuple[float, float]],
    config: TestbedConfig,
) -> float:
    two_r_sq = 2.0 * config.attenuation_radius**2
    total = 0.0
    for ex, ey in entities:
        d = segment_distance(ex, ey, segment[0], segment[1])
        total += config.attenuation_peak * math.exp(-(d * d) / two_r_sq)
    return total


def rss_model(
    entities: Sequence[tuple[float, float]],
    config: TestbedConfig,
    rng: np.random.Generator,
    timestamp: float = 0.0,
) -> RssFrame:
    """One frame of per-stream RSS for the given entity positions.

    Per stream: baseline minus the summed gaussian attenuation bumps, plus
    gaussian noise, plus an occasional signed impulse (for the trimmed-mean
    filter to chew on).
    """
    readings: dict[StreamId, float] = {}
    for idx, (stream, segment) in enumerate(zip(config.stream_ids, config.segments)):
        value = config.baseline_rss[idx] - _attenuation(entities, segment, config)
        if config.noise_sigma > 0:
            value += rng.normal(0.0, config.noise_sigma)
        if config.impulse_prob > 0 and rng.random() < config.impulse_prob:
            sign = 1.0 if rng.random() < 0.5 else -1.0
            value += sign * config.impulse_magnitude
        readings[stream] = value
    return RssFrame(timestamp, readings)


def generate_calibration(
    config: TestbedConfig,
) -> list[tuple[GridLocation, list[RssFrame]]]:
    """One session per grid location with a lone entity standing on it."""
    rng = np.random.default_rng(config.seed)
    sessions = []
    for loc in config.grid:
        frames = [
            rss_model([(loc.x, loc.y)], config, rng, timestamp=float(t))
            for t in range(config.calib_frames)
        ]
        sessions.append((loc, frames))
    return sessions


def generate_baseline(config: TestbedConfig, n_frames: int | None = None) -> list[RssFrame]:
    """Empty-area frames used for the offline stream statistics."""
    rng = np.random.default_rng(config.seed + 1)
    count = config.calib_frames if n_frames is None else n_frames
    return [rss_model([], config, rng, timestamp=float(t)) for t in range(count)]


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-linear path of one entity between time-stamped waypoints."""

    entity_id: str
    waypoints: tuple[tuple[float, float, float], ...]  # (t, x, y)

    def __post_init__(self) -> None:
        if not self.waypoints:
            raise ValueError("trajectory needs at least one waypoint")
        times = [t for t, _, _ in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("waypoint times must be strictly increasing")

    @property
    def start(self) -> float:
        return self.waypoints[0][0]

    @property
    def end(self) -> float:
        return self.waypoints[-1][0]

    def position_at(self, t: float) -> tuple[float, float] | None:
        """Interpolated position, or None outside the waypoint span."""
        if t < self.start or t > self.end:
            return None
        points = self.waypoints
        for (t0, x0, y0), (t1, x1, y1) in zip(points, points[1:]):
            if t <= t1:
                frac = (t - t0) / (t1 - t0)
                return (x0 + frac * (x1 - x0), y0 + frac * (y1 - y0))
        return (points[-1][1], points[-1][2])


def _check_bounds(trajectories: Sequence[Trajectory], config: TestbedConfig) -> None:
    for traj in trajectories:
        for _, x, y in traj.waypoints:
            if not (0.0 <= x <= config.width and 0.0 <= y <= config.height):
                raise ValueError(
                    f"trajectory {traj.entity_id!r} leaves the testbed at ({x}, {y})"
                )


def generate_test(
    config: TestbedConfig,
    trajectories: Sequence[Trajectory],
    duration: float | None = None,
    start: float | None = None,
) -> tuple[list[RssFrame], list[GroundTruthFrame]]:
    """1 Hz trace plus aligned ground truth over the trajectory time span.

    ``start`` moves the first frame earlier than the first waypoint (an empty
    lead-in); with no trajectories the area stays empty for ``duration``
    seconds (default 300). Deterministic for a fixed config seed.
    """
    _check_bounds(trajectories, config)
    rng = np.random.default_rng(config.seed + 2)
    if trajectories:
        t0 = min(tr.start for tr in trajectories) if start is None else start
        t1 = max(tr.end for tr in trajectories)
        if duration is not None:
            t1 = max(t1, t0 + duration - 1.0)
    else:
        t0 = 0.0 if start is None else start
        t1 = t0 + (300.0 if duration is None else duration) - 1.0
    frames: list[RssFrame] = []
    truth: list[GroundTruthFrame] = []
    steps = int(math.floor(t1 - t0 + 1e-9)) + 1
    for step in range(steps):
        t = t0 + step
        present = []
        for traj in trajectories:
            pos = traj.position_at(t)
            if pos is not None:
                present.append((traj.entity_id, pos[0], pos[1]))
        frames.append(rss_model([(x, y) for _, x, y in present], config, rng, t))
        truth.append(GroundTruthFrame(t, tuple(present)))
    return frames, truth


def random_walk(
    config: TestbedConfig,
    duration: float = 240.0,
    speed: float = 1.0,
    pause: tuple[float, float] = (5.0, 20.0),
    seed: int | None = None,
    entity_id: str = "walker",
    start_time: float = 0.0,
) -> Trajectory:
    """Stop-and-go random waypoint walk, for temporal-prior training.

    The walker dwells ``pause`` seconds (uniform range) at each waypoint;
    the stops teach the prior that established activations persist, matching
    entities that stand still during tracking.
    """
    rng = np.random.default_rng(config.seed + 3 if seed is None else seed)
    margin = 0.5
    t = start_time
    x = float(rng.uniform(margin, config.width - margin))
    y = float(rng.uniform(margin, config.height - margin))
    waypoints = [(t, x, y)]
    while t - start_time < duration:
        if pause[1] > 0:
            t += float(rng.uniform(pause[0], pause[1]))
            waypoints.append((t, x, y))
        nx = float(rng.uniform(margin, config.width - margin))
        ny = float(rng.uniform(margin, config.height - margin))
        hop = math.hypot(nx - x, ny - y)
        if hop < 1.0:
            continue
        t += hop / speed
        waypoints.append((t, nx, ny))
        x, y = nx, ny
    return Trajectory(entity_id, tuple(waypoints))


def default_entity_positions(config: TestbedConfig) -> tuple[tuple[float, float], ...]:
    """Well-separated static spots whose dominant streams barely overlap."""
    return (
        (0.3 * config.width, 0.1 * config.height),
        (0.9 * config.width, 0.5 * config.height),
        (0.5 * config.width, 0.9 * config.height),
    )


def static_trajectories(
    config: TestbedConfig,
    n_entities: int,
    start: float = 60.0,
    dwell: float = 300.0,
    positions: Sequence[tuple[float, float]] | None = None,
) -> list[Trajectory]:
    """Entities standing still from ``start`` for ``dwell`` seconds.

    The default start leaves an empty lead-in for stream selection and the
    tracker's empty-area bootstrap.
    """
    if positions is None:
        positions = default_entity_positions(config)
    if n_entities > len(positions):
        raise ValueError(
            f"no default positions for {n_entities} entities (have {len(positions)})"
        )
    return [
        Trajectory(f"e{i}", ((start, x, y), (start + dwell - 1.0, x, y)))
        for i, (x, y) in enumerate(positions[:n_entities])
    ]


# --- config file format (flat key=value) --------------------------------------

_POSITION_FIELDS = ("ap_positions", "mp_positions")
_FLOAT_FIELDS = (
    "width",
    "height",
    "noise_sigma",
    "impulse_prob",
    "impulse_magnitude",
    "attenuation_peak",
    "attenuation_radius",
)
_INT_FIELDS = ("grid_nx", "grid_ny", "seed", "calib_frames")


def save_config(config: TestbedConfig, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name in _FLOAT_FIELDS:
            fh.write(f"{name}={getattr(config, name)!r}\n")
        for name in _INT_FIELDS:
            fh.write(f"{name}={getattr(config, name)}\n")
        for name in _POSITION_FIELDS:
            pairs = ";".join(f"{x!r},{y!r}" for x, y in getattr(config, name))
            fh.write(f"{name}={pairs}\n")
        fh.write("baseline_rss=" + ";".join(repr(v) for v in config.baseline_rss) + "\n")


def load_config(path: str | os.PathLike) -> TestbedConfig:
    values: dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{line_no}: expected 'key=value', got {line!r}")
            key = key.strip()
            value = value.strip()
            try:
                if key in _FLOAT_FIELDS:
                    values[key] = float(value)
                elif key in _INT_FIELDS:
                    values[key] = int(value)
                elif key in _POSITION_FIELDS:
                    values[key] = tuple(
                        (float(p.split(",")[0]), float(p.split(",")[1]))
                        for p in value.split(";")
                        if p
                    )
                elif key == "baseline_rss":
                    values[key] = tuple(float(v) for v in value.split(";") if v)
                else:
                    raise ValueError(f"unknown key {key!r}")
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: {exc}") from None
    return TestbedConfig(**values)
