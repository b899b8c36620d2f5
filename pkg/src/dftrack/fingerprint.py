"""Cross-calibrated RSS fingerprint: per-location histograms and priors.

A calibration session with one human at location x feeds that location's
active histograms and the inactive histograms of every other location, so n
sessions cover all n locations (linear calibration instead of enumerating
entity combinations). Per location and stream the model keeps two smoothed
histograms, P(s | occupied) and P(s | free); a second-order transition table
supplies the temporal prior.
"""

from __future__ import annotations

import json
import math
import os
import struct
import zlib
from dataclasses import dataclass, field as dataclasses_field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .types import (
    EnvironmentMap,
    GridLocation,
    GroundTruthFrame,
    ModelParams,
    RssFrame,
    StreamId,
    grid_pitch,
    nearest_location,
)

_PROB_FLOOR = 1e-12
_MASS_TOL = 1e-9

FINGERPRINT_MAGIC = b"SPOTFP"
FINGERPRINT_VERSION = 1


class FingerprintFormatError(ValueError):
    """Fingerprint file is unreadable: bad magic, truncation or checksum."""


class FingerprintVersionError(FingerprintFormatError):
    """Fingerprint file has an unsupported format version."""


@dataclass(frozen=True)
class RssHistogram:
    """Discrete RSS distribution over fixed-width dBm bins.

    ``probabilities`` sums to 1; ``n_samples`` is the raw sample count that
    produced it (kept for calibration bookkeeping).
    """

    bin_width: float
    origin: float
    probabilities: tuple[float, ...]
    n_samples: int = 0

    def __post_init__(self) -> None:
        if not self.probabilities:
            raise ValueError("histogram has no bins")
        if self.bin_width <= 0:
            raise ValueError(f"bin width must be > 0, got {self.bin_width}")
        if any(p < 0 for p in self.probabilities):
            raise ValueError("negative bin probability")
        total = sum(self.probabilities)
        if abs(total - 1.0) > _MASS_TOL:
            raise ValueError(f"bin probabilities sum to {total}, expected 1")

    @property
    def n_bins(self) -> int:
        return len(self.probabilities)

    def bin_index(self, value: float) -> int:
        """Bin holding ``value``; out-of-range values clamp to the edge bins."""
        idx = int(math.floor((value - self.origin) / self.bin_width))
        return min(max(idx, 0), self.n_bins - 1)

    def probability(self, value: float) -> float:
        return self.probabilities[self.bin_index(value)]


@dataclass(frozen=True)
class LocationFingerprint:
    """Active and inactive histograms per stream at one grid location."""

    location: GridLocation
    active: Mapping[StreamId, RssHistogram]
    inactive: Mapping[StreamId, RssHistogram]


@dataclass(frozen=True)
class TemporalPrior:
    """P(active now | activity one and two steps back), four free entries.

    Tables are indexed [previous][before_previous]. Raw transition counts are
    kept so a first-order prior can be marginalized out of the same data.
    """

    p_active: tuple[tuple[float, float], tuple[float, float]]
    activations: tuple[tuple[int, int], tuple[int, int]] = ((0, 0), (0, 0))
    totals: tuple[tuple[int, int], tuple[int, int]] = ((0, 0), (0, 0))

    def __post_init__(self) -> None:
        for row in self.p_active:
            for p in row:
                if not 0.0 <= p <= 1.0:
                    raise ValueError(f"transition probability {p} outside [0, 1]")

    def probability(self, state: bool, prev: bool, prev_prev: bool) -> float:
        p1 = self.p_active[int(prev)][int(prev_prev)]
        return p1 if state else 1.0 - p1

    def probability_first_order(self, state: bool, prev: bool) -> float:
        """First-order prior marginalized from the raw second-order counts."""
        act = sum(self.activations[int(prev)])
        tot = sum(self.totals[int(prev)])
        p1 = (act + 1) / (tot + 2)
        return p1 if state else 1.0 - p1

    @staticmethod
    def neutral() -> "TemporalPrior":
        return TemporalPrior(((0.5, 0.5), (0.5, 0.5)))

    @staticmethod
    def from_counts(
        activations: Sequence[Sequence[int]], totals: Sequence[Sequence[int]]
    ) -> "TemporalPrior":
        """Add-one smoothed probabilities from raw transition counts."""
        for a in (0, 1):
            for b in (0, 1):
                if not 0 <= activations[a][b] <= totals[a][b]:
                    raise ValueError("activation counts exceed history totals")
        p = tuple(
            tuple(
                (activations[a][b] + 1) / (totals[a][b] + 2) for b in (0, 1)
            )
            for a in (0, 1)
        )
        act = tuple(tuple(int(v) for v in row) for row in activations)
        tot = tuple(tuple(int(v) for v in row) for row in totals)
        return TemporalPrior(p, act, tot)


@dataclass(frozen=True)
class Fingerprint:
    """Full trained model: histograms, adjacency, temporal prior, parameters."""

    locations: tuple[LocationFingerprint, ...]
    neighbors: tuple[tuple[int, int], ...]
    temporal: TemporalPrior
    params: ModelParams
    offline_stream_stats: Mapping[StreamId, tuple[float, float, int]]
    neighbor_set: frozenset = dataclasses_field(
        init=False, compare=False, repr=False, default=frozenset()
    )

    def __post_init__(self) -> None:
        n = len(self.locations)
        indices = [lf.location.index for lf in self.locations]
        if indices != list(range(n)):
            raise ValueError("location fingerprints must be ordered by dense index")
        degree = [0] * n
        for i, j in self.neighbors:
            if i == j:
                raise ValueError(f"self-adjacency at location {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"neighbor pair ({i}, {j}) out of range")
            if i > j:
                raise ValueError(f"neighbor pairs must be stored as i < j: ({i}, {j})")
            degree[i] += 1
            degree[j] += 1
        if n > 1 and any(d == 0 for d in degree):
            isolated = degree.index(0)
            raise ValueError(f"location {isolated} has no neighbors")
        object.__setattr__(self, "neighbor_set", frozenset(self.neighbors))

    @property
    def n(self) -> int:
        return len(self.locations)

    @property
    def grid(self) -> tuple[GridLocation, ...]:
        return tuple(lf.location for lf in self.locations)

    @property
    def streams(self) -> tuple[StreamId, ...]:
        seen: set[StreamId] = set()
        for lf in self.locations:
            seen.update(lf.active)
        return tuple(sorted(seen))


def four_neighbors_from_coords(
    grid: Sequence[GridLocation],
) -> tuple[tuple[int, int], ...]:
    """4-neighborhood pairs inferred from a regular grid's coordinates."""
    xs = sorted({g.x for g in grid})
    ys = sorted({g.y for g in grid})
    if len(xs) * len(ys) != len(grid):
        raise ValueError("grid coordinates do not form a full regular lattice")
    col = {x: i for i, x in enumerate(xs)}
    row = {y: i for i, y in enumerate(ys)}
    by_cell = {(col[g.x], row[g.y]): g.index for g in grid}
    if len(by_cell) != len(grid):
        raise ValueError("duplicate grid coordinates")
    pairs: set[tuple[int, int]] = set()
    for (cx, cy), idx in by_cell.items():
        for other in ((cx + 1, cy), (cx, cy + 1)):
            if other in by_cell:
                j = by_cell[other]
                pairs.add((min(idx, j), max(idx, j)))
    return tuple(sorted(pairs))


def smooth_histogram(h: RssHistogram, sigma: float) -> RssHistogram:
    """Convolve bin mass with a discrete gaussian truncated at four sigma.

    Mass pushed past the edges is recovered by renormalization, and a tiny
    floor keeps every bin strictly positive so downstream log-likelihoods
    stay finite.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if not h.probabilities:
        raise ValueError("histogram has no bins")
    if sigma < h.bin_width / 10.0:
        return h
    radius = int(math.ceil(4.0 * sigma / h.bin_width))
    offsets = np.arange(-radius, radius + 1) * h.bin_width
    kernel = np.exp(-(offsets**2) / (2.0 * sigma**2))
    kernel /= kernel.sum()
    mass = np.convolve(np.asarray(h.probabilities), kernel, mode="same")
    mass /= mass.sum()
    mass = np.maximum(mass, _PROB_FLOOR)
    mass /= mass.sum()
    return RssHistogram(h.bin_width, h.origin, tuple(mass.tolist()), h.n_samples)


def _counts_to_histogram(
    counts: np.ndarray, origin: float, params: ModelParams
) -> RssHistogram:
    n_samples = int(counts.sum())
    if n_samples > 0:
        probs = counts / n_samples
    else:
        # Stream unseen for this location/state: fall back to ignorance.
        probs = np.full(len(counts), 1.0 / len(counts))
    raw = RssHistogram(params.hist_bin_width, origin, tuple(probs.tolist()), n_samples)
    smoothed = smooth_histogram(raw, params.hist_smooth_sigma)
    mix = params.hist_uniform_mix
    if mix <= 0.0:
        return smoothed
    # Uniform mixture: bounds the cost of readings the calibration never saw
    # (several entities shift streams beyond any single-entity signature).
    mass = (1.0 - mix) * np.asarray(smoothed.probabilities) + mix / smoothed.n_bins
    mass /= mass.sum()
    return RssHistogram(
        smoothed.bin_width, smoothed.origin, tuple(mass.tolist()), n_samples
    )


def _counts_moments(counts: np.ndarray, origin: float, bw: float) -> tuple[float, float]:
    total = counts.sum()
    centers = origin + (np.arange(len(counts)) + 0.5) * bw
    mean = float((counts * centers).sum() / total)
    var = float((counts * (centers - mean) ** 2).sum() / total)
    return mean, var


def _informativeness_shrink(
    own: np.ndarray, others: np.ndarray, origin: float, bw: float
) -> float:
    """Shrinkage of the active toward the inactive histogram, in [0, 1].

    A stream a location cannot influence has (near-)identical means under
    both states; its active model is pulled onto the inactive one so the
    stream cancels out of that location's likelihood ratio instead of
    rewarding a spurious match against the quiet-air signature.
    """
    if own.sum() == 0:
        return 1.0
    if others.sum() == 0:
        return 0.0
    mean_a, var_a = _counts_moments(own, origin, bw)
    mean_i, var_i = _counts_moments(others, origin, bw)
    spread = math.sqrt(max((var_a + var_i) / 2.0, bw * bw / 4.0))
    d = abs(mean_a - mean_i) / spread
    return math.exp(-(d * d) / 2.0)


def _blend(a: RssHistogram, b: RssHistogram, lam: float) -> RssHistogram:
    if lam <= 0.0:
        return a
    mass = (1.0 - lam) * np.asarray(a.probabilities) + lam * np.asarray(b.probabilities)
    mass /= mass.sum()
    return RssHistogram(a.bin_width, a.origin, tuple(mass.tolist()), a.n_samples)


def build_fingerprint(
    sessions: Sequence[tuple[GridLocation, Sequence[RssFrame]]],
    grid: Sequence[GridLocation],
    params: ModelParams,
    *,
    baseline_frames: Sequence[RssFrame] | None = None,
    training_maps: Sequence[Sequence[EnvironmentMap]] | None = None,
) -> Fingerprint:
    """Build the fingerprint from one smoothed calibration session per location.

    Every frame of the session recorded at location x is accumulated into x's
    active histograms and into the inactive histograms of all other
    locations. ``baseline_frames`` (an empty-area recording), when given,
    provides the offline per-stream statistics for the online stream filter;
    otherwise the pooled session samples do. ``training_maps`` feed the
    temporal transition prior; without them the prior is neutral.
    """
    n = len(grid)
    by_index = {loc.index: frames for loc, frames in sessions}
    if len(by_index) != len(sessions):
        raise ValueError("duplicate calibration session for a location")
    missing = sorted(set(range(n)) - set(by_index))
    if missing:
        raise ValueError(f"missing calibration sessions for locations {missing}")
    extra = sorted(set(by_index) - set(range(n)))
    if extra:
        raise ValueError(f"sessions reference unknown location indices {extra}")
    for idx in range(n):
        if len(by_index[idx]) == 0:
            raise ValueError(f"calibration session for location {idx} has no frames")

    # Shared per-stream support covering every calibration sample, padded so
    # the smoothing kernel stays in range.
    lo: dict[StreamId, float] = {}
    hi: dict[StreamId, float] = {}
    for frames in by_index.values():
        for frame in frames:
            for stream, value in frame.readings.items():
                lo[stream] = min(lo.get(stream, value), value)
                hi[stream] = max(hi.get(stream, value), value)
    if not lo:
        raise ValueError("calibration sessions contain no RSS readings")
    streams = sorted(lo)

    bw = params.hist_bin_width
    pad = int(math.ceil(4.0 * params.hist_smooth_sigma / bw))
    origin: dict[StreamId, float] = {}
    n_bins: dict[StreamId, int] = {}
    for s in streams:
        origin[s] = math.floor(lo[s]) - pad * bw
        span = math.ceil(hi[s]) + pad * bw - origin[s]
        n_bins[s] = max(1, int(math.ceil(span / bw - 1e-9)))

    session_counts: dict[StreamId, np.ndarray] = {
        s: np.zeros((n, n_bins[s]), dtype=float) for s in streams
    }
    for idx in range(n):
        for frame in by_index[idx]:
            for stream, value in frame.readings.items():
                b = int(math.floor((value - origin[stream]) / bw))
                b = min(max(b, 0), n_bins[stream] - 1)
                session_counts[stream][idx, b] += 1
    total_counts = {s: session_counts[s].sum(axis=0) for s in streams}

    grid_by_index = sorted(grid, key=lambda g: g.index)
    locations = []
    for idx in range(n):
        active: dict[StreamId, RssHistogram] = {}
        inactive: dict[StreamId, RssHistogram] = {}
        for s in streams:
            own = session_counts[s][idx]
            others = total_counts[s] - own
            inactive[s] = _counts_to_histogram(others, origin[s], params)
            lam = _informativeness_shrink(own, others, origin[s], bw)
            active[s] = _blend(
                _counts_to_histogram(own, origin[s], params), inactive[s], lam
            )
        locations.append(LocationFingerprint(grid_by_index[idx], active, inactive))

    stats_source: Iterable[RssFrame]
    if baseline_frames is not None:
        stats_source = baseline_frames
    else:
        stats_source = [f for idx in range(n) for f in by_index[idx]]
    stats: dict[StreamId, tuple[float, float, int]] = {}
    pooled: dict[StreamId, list[float]] = {}
    for frame in stats_source:
        for stream, value in frame.readings.items():
            pooled.setdefault(stream, []).append(value)
    for stream in sorted(pooled):
        values = pooled[stream]
        count = len(values)
        mean = sum(values) / count
        var = (
            sum((v - mean) ** 2 for v in values) / (count - 1) if count > 1 else 0.0
        )
        stats[stream] = (mean, var, count)

    temporal = (
        learn_temporal_priors(training_maps)
        if training_maps
        else TemporalPrior.neutral()
    )

    return Fingerprint(
        locations=tuple(locations),
        neighbors=four_neighbors_from_coords(grid) if n > 1 else (),
        temporal=temporal,
        params=params,
        offline_stream_stats=stats,
    )


def learn_temporal_priors(
    map_sequences: Sequence[Sequence[EnvironmentMap]],
) -> TemporalPrior:
    """Maximum-likelihood second-order transition table with add-one smoothing."""
    if not map_sequences:
        raise ValueError("no map sequences provided")
    act = [[0, 0], [0, 0]]
    tot = [[0, 0], [0, 0]]
    for seq in map_sequences:
        if len(seq) < 3:
            raise ValueError(f"map sequence of length {len(seq)} is shorter than 3")
        for t in range(2, len(seq)):
            cur, prev, prev_prev = seq[t].active, seq[t - 1].active, seq[t - 2].active
            if not len(cur) == len(prev) == len(prev_prev):
                raise ValueError("map lengths differ within a sequence")
            for i in range(len(cur)):
                a, b = int(prev[i]), int(prev_prev[i])
                tot[a][b] += 1
                act[a][b] += int(cur[i])
    return TemporalPrior.from_counts(act, tot)


def derive_training_maps(
    truth: Sequence[GroundTruthFrame],
    grid: Sequence[GridLocation],
    influence_radius: float | None = None,
) -> list[EnvironmentMap]:
    """Label maps for prior training: nearest cell plus close 4-neighbors.

    Each entity activates its nearest grid location and that location's
    4-neighbors lying within ``influence_radius`` (default: one grid pitch)
    of the entity.
    """
    if influence_radius is None:
        influence_radius = grid_pitch(grid)
    n = len(grid)
    by_index = {g.index: g for g in grid}
    neighbor_map: dict[int, list[int]] = {i: [] for i in range(n)}
    if n > 1:
        for i, j in four_neighbors_from_coords(grid):
            neighbor_map[i].append(j)
            neighbor_map[j].append(i)
    maps: list[EnvironmentMap] = []
    for frame in truth:
        active = [False] * n
        for _, x, y in frame.entities:
            center = nearest_location(x, y, grid)
            active[center.index] = True
            for j in neighbor_map[center.index]:
                if by_index[j].distance_to(x, y) <= influence_radius:
                    active[j] = True
        maps.append(EnvironmentMap(frame.timestamp, tuple(active)))
    return maps


def likelihood(
    fp: Fingerprint,
    loc_index: int,
    state: bool,
    frame: RssFrame,
    active_streams: Iterable[StreamId] | None = None,
) -> float:
    """P(frame | location state) as a product of per-stream bin probabilities.

    Streams are treated as independent; streams absent from the frame (or not
    in ``active_streams``) are skipped. Readings beyond a histogram's support
    use the nearest edge bin.
    """
    if not 0 <= loc_index < fp.n:
        raise ValueError(f"location index {loc_index} out of range [0, {fp.n})")
    hists = fp.locations[loc_index].active if state else fp.locations[loc_index].inactive
    allowed = None if active_streams is None else set(active_streams)
    result = 1.0
    used = 0
    for stream, value in frame.readings.items():
        if allowed is not None and stream not in allowed:
            continue
        hist = hists.get(stream)
        if hist is None:
            continue
        result *= hist.probability(value)
        used += 1
    if used == 0:
        raise ValueError("frame has no readings among the active streams")
    return result


def fit_params(
    fp: Fingerprint,
    held_out: Sequence[tuple[Sequence[RssFrame], Sequence[GroundTruthFrame]]],
    search_grid: Iterable[tuple[float, float, float]] | None = None,
) -> ModelParams:
    """Grid-search (beta, gamma, delta) minimizing mean locations-based error.

    Exhaustive and deterministic: ties break toward the lexicographically
    smallest (beta, gamma, delta). Held-out traces are raw; they are smoothed
    with the fingerprint's filter settings before tracking.
    """
    from .evaluation import mean_locations_error  # deferred: avoids an import cycle

    if search_grid is None:
        search_grid = [
            (b, g, d)
            for b in (0.25, 0.5, 0.75, 1.0)
            for g in (0.5, 1.0, 2.0, 4.0)
            for d in (0.25, 0.5, 0.75, 1.0)
        ]
    points = sorted(set(search_grid))
    if not points:
        raise ValueError("empty search grid")
    if not held_out:
        raise ValueError("no held-out sequences")

    best_point = None
    best_error = math.inf
    for beta, gamma, delta in points:
        candidate = replace(fp.params, beta=beta, gamma=gamma, delta=delta)
        error = mean_locations_error(fp, candidate, held_out)
        if error < best_error:
            best_error = error
            best_point = (beta, gamma, delta)
    assert best_point is not None
    return replace(
        fp.params, beta=best_point[0], gamma=best_point[1], delta=best_point[2]
    )


# --- persistence --------------------------------------------------------------


def _histogram_to_dict(h: RssHistogram) -> dict:
    return {
        "bin_width": h.bin_width,
        "origin": h.origin,
        "probabilities": list(h.probabilities),
        "n_samples": h.n_samples,
    }


def _histogram_from_dict(d: dict) -> RssHistogram:
    return RssHistogram(
        d["bin_width"], d["origin"], tuple(d["probabilities"]), d["n_samples"]
    )


def _fingerprint_to_payload(fp: Fingerprint) -> bytes:
    doc = {
        "locations": [
            {
                "index": lf.location.index,
                "x": lf.location.x,
                "y": lf.location.y,
                "active": {s: _histogram_to_dict(h) for s, h in sorted(lf.active.items())},
                "inactive": {
                    s: _histogram_to_dict(h) for s, h in sorted(lf.inactive.items())
                },
            }
            for lf in fp.locations
        ],
        "neighbors": [list(p) for p in fp.neighbors],
        "temporal": {
            "p_active": [list(r) for r in fp.temporal.p_active],
            "activations": [list(r) for r in fp.temporal.activations],
            "totals": [list(r) for r in fp.temporal.totals],
        },
        "params": {
            "beta": fp.params.beta,
            "gamma": fp.params.gamma,
            "delta": fp.params.delta,
            "q": fp.params.q,
            "alpha_trim": fp.params.alpha_trim,
            "anova_significance": fp.params.anova_significance,
            "hist_bin_width": fp.params.hist_bin_width,
            "hist_smooth_sigma": fp.params.hist_smooth_sigma,
            "w": fp.params.w,
            "r": fp.params.r,
            "hmm_order": fp.params.hmm_order,
            "spatial_contrast": fp.params.spatial_contrast,
            "anova_window": fp.params.anova_window,
        },
        "offline_stream_stats": {
            s: list(v) for s, v in sorted(fp.offline_stream_stats.items())
        },
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _fingerprint_from_payload(payload: bytes) -> Fingerprint:
    doc = json.loads(payload.decode("utf-8"))
    locations = tuple(
        LocationFingerprint(
            GridLocation(entry["index"], entry["x"], entry["y"]),
            {s: _histogram_from_dict(h) for s, h in entry["active"].items()},
            {s: _histogram_from_dict(h) for s, h in entry["inactive"].items()},
        )
        for entry in doc["locations"]
    )
    temporal = TemporalPrior(
        tuple(tuple(r) for r in doc["temporal"]["p_active"]),
        tuple(tuple(r) for r in doc["temporal"]["activations"]),
        tuple(tuple(r) for r in doc["temporal"]["totals"]),
    )
    return Fingerprint(
        locations=locations,
        neighbors=tuple((i, j) for i, j in doc["neighbors"]),
        temporal=temporal,
        params=ModelParams(**doc["params"]),
        offline_stream_stats={
            s: (v[0], v[1], int(v[2]))
            for s, v in doc["offline_stream_stats"].items()
        },
    )


def save_fingerprint(fp: Fingerprint, path: str | os.PathLike) -> None:
    """Write the versioned binary container (magic, version, payload, crc32)."""
    payload = _fingerprint_to_payload(fp)
    with open(path, "wb") as fh:
        fh.write(FINGERPRINT_MAGIC)
        fh.write(struct.pack("<H", FINGERPRINT_VERSION))
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def load_fingerprint(path: str | os.PathLike) -> Fingerprint:
    with open(path, "rb") as fh:
        data = fh.read()
    header = len(FINGERPRINT_MAGIC) + 2 + 8
    if len(data) < header:
        raise FingerprintFormatError(f"{path}: truncated fingerprint header")
    if data[: len(FINGERPRINT_MAGIC)] != FINGERPRINT_MAGIC:
        raise FingerprintFormatError(f"{path}: not a fingerprint file")
    (version,) = struct.unpack_from("<H", data, len(FINGERPRINT_MAGIC))
    if version != FINGERPRINT_VERSION:
        raise FingerprintVersionError(
            f"{path}: unsupported fingerprint version {version} "
            f"(expected {FINGERPRINT_VERSION})"
        )
    (length,) = struct.unpack_from("<Q", data, len(FINGERPRINT_MAGIC) + 2)
    if len(data) != header + length + 4:
        raise FingerprintFormatError(
            f"{path}: payload length mismatch (corrupt or truncated)"
        )
    payload = data[header : header + length]
    (stored_crc,) = struct.unpack_from("<I", data, header + length)
    if zlib.crc32(payload) & 0xFFFFFFFF != stored_crc:
        raise FingerprintFormatError(f"{path}: checksum mismatch (corrupt)")
    return _fingerprint_from_payload(payload)
