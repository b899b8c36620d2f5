"""Line-delimited file formats for RSS traces, ground truth and estimates.

Trace:        ``t=<float> <stream_id>=<dbm> <stream_id>=<dbm> ...``
Ground truth: ``t=<float> <entity_id>:<x>,<y> ...``
Estimates:    ``t=<float> m=<int> (<x>,<y>) ...``

One frame per line, UTF-8, ``#`` comment lines and blank lines ignored.
Floats are written with repr so save/load round-trips are bit-exact.
"""

from __future__ import annotations

import os
from typing import Iterable, Sequence

from .types import FrameEstimate, GroundTruthFrame, RssFrame


class TraceFormatError(ValueError):
    """A line failed to parse; carries the 1-based line number."""

    def __init__(self, path: str | os.PathLike, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


def _content_lines(path: str | os.PathLike) -> Iterable[tuple[int, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield line_no, line


def _parse_float(path, line_no: int, text: str, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise TraceFormatError(path, line_no, f"non-numeric {what}: {text!r}") from None


def _parse_timestamp(path, line_no: int, token: str) -> float:
    if not token.startswith("t="):
        raise TraceFormatError(path, line_no, f"expected 't=<float>', got {token!r}")
    return _parse_float(path, line_no, token[2:], "timestamp")


def load_trace(path: str | os.PathLike) -> list[RssFrame]:
    """Read a trace file; frames must be in nondecreasing timestamp order."""
    frames: list[RssFrame] = []
    last_t = None
    for line_no, line in _content_lines(path):
        tokens = line.split()
        t = _parse_timestamp(path, line_no, tokens[0])
        readings: dict[str, float] = {}
        for token in tokens[1:]:
            stream, sep, value = token.partition("=")
            if not sep or not stream:
                raise TraceFormatError(
                    path, line_no, f"expected '<stream>=<dbm>', got {token!r}"
                )
            if stream in readings:
                raise TraceFormatError(path, line_no, f"duplicate stream {stream!r}")
            readings[stream] = _parse_float(path, line_no, value, "RSS value")
        if last_t is not None and t < last_t:
            raise TraceFormatError(
                path, line_no, f"timestamp {t} decreases (previous {last_t})"
            )
        last_t = t
        frames.append(RssFrame(t, readings))
    return frames


def save_trace(frames: Sequence[RssFrame], path: str | os.PathLike) -> None:
    """Write frames to a trace file; requires timestamp-ordered input."""
    _check_ordered(frames)
    with open(path, "w", encoding="utf-8") as fh:
        for frame in frames:
            parts = [f"t={frame.timestamp!r}"]
            for stream, value in frame.readings.items():
                _check_stream_id(stream)
                parts.append(f"{stream}={value!r}")
            fh.write(" ".join(parts) + "\n")


def _check_ordered(frames: Sequence) -> None:
    for prev, cur in zip(frames, frames[1:]):
        if cur.timestamp < prev.timestamp:
            raise ValueError(
                f"frames not timestamp-ordered: {cur.timestamp} after {prev.timestamp}"
            )


def _check_stream_id(stream: str) -> None:
    if not stream or "=" in stream or any(c.isspace() for c in stream):
        raise ValueError(f"stream id not representable in trace format: {stream!r}")


def load_ground_truth(path: str | os.PathLike) -> list[GroundTruthFrame]:
    frames: list[GroundTruthFrame] = []
    last_t = None
    for line_no, line in _content_lines(path):
        tokens = line.split()
        t = _parse_timestamp(path, line_no, tokens[0])
        entities: list[tuple[str, float, float]] = []
        for token in tokens[1:]:
            entity, sep, coords = token.partition(":")
            xy = coords.split(",")
            if not sep or not entity or len(xy) != 2:
                raise TraceFormatError(
                    path, line_no, f"expected '<id>:<x>,<y>', got {token!r}"
                )
            entities.append(
                (
                    entity,
                    _parse_float(path, line_no, xy[0], "x coordinate"),
                    _parse_float(path, line_no, xy[1], "y coordinate"),
                )
            )
        if last_t is not None and t < last_t:
            raise TraceFormatError(
                path, line_no, f"timestamp {t} decreases (previous {last_t})"
            )
        last_t = t
        frames.append(GroundTruthFrame(t, tuple(entities)))
    return frames


def save_ground_truth(
    frames: Sequence[GroundTruthFrame], path: str | os.PathLike
) -> None:
    _check_ordered(frames)
    with open(path, "w", encoding="utf-8") as fh:
        for frame in frames:
            parts = [f"t={frame.timestamp!r}"]
            for entity, x, y in frame.entities:
                if not entity or ":" in entity or any(c.isspace() for c in entity):
                    raise ValueError(f"entity id not representable: {entity!r}")
                parts.append(f"{entity}:{x!r},{y!r}")
            fh.write(" ".join(parts) + "\n")


def load_estimates(path: str | os.PathLike) -> list[FrameEstimate]:
    frames: list[FrameEstimate] = []
    for line_no, line in _content_lines(path):
        tokens = line.split()
        if len(tokens) < 2 or not tokens[1].startswith("m="):
            raise TraceFormatError(path, line_no, "expected 't=<float> m=<int> ...'")
        t = _parse_timestamp(path, line_no, tokens[0])
        try:
            m = int(tokens[1][2:])
        except ValueError:
            raise TraceFormatError(
                path, line_no, f"non-integer entity count: {tokens[1][2:]!r}"
            ) from None
        entities: list[tuple[float, float]] = []
        for token in tokens[2:]:
            if not (token.startswith("(") and token.endswith(")")):
                raise TraceFormatError(path, line_no, f"expected '(<x>,<y>)', got {token!r}")
            xy = token[1:-1].split(",")
            if len(xy) != 2:
                raise TraceFormatError(path, line_no, f"expected '(<x>,<y>)', got {token!r}")
            entities.append(
                (
                    _parse_float(path, line_no, xy[0], "x coordinate"),
                    _parse_float(path, line_no, xy[1], "y coordinate"),
                )
            )
        if len(entities) != m:
            raise TraceFormatError(
                path, line_no, f"entity count m={m} but {len(entities)} coordinates"
            )
        frames.append(FrameEstimate(t, tuple(entities)))
    return frames


def save_estimates(frames: Sequence[FrameEstimate], path: str | os.PathLike) -> None:
    _check_ordered(frames)
    with open(path, "w", encoding="utf-8") as fh:
        for frame in frames:
            parts = [f"t={frame.timestamp!r}", f"m={frame.m_hat}"]
            parts.extend(f"({x!r},{y!r})" for x, y in frame.entities)
            fh.write(" ".join(parts) + "\n")
