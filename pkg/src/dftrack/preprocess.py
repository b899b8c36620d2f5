"""RSS noise filtering: trimmed-mean smoothing and outlier-stream rejection.

The trimmed mean handles both impulse and gaussian noise with one knob; the
stream filter compares offline and online per-stream means with a two-group
one-way F-test and drops streams whose distribution has shifted.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

from .types import ModelParams, RssFrame, StreamId

__all__ = [
    "alpha_trimmed_mean",
    "smooth_stream",
    "smooth_frames",
    "anova_two_group",
    "anova_stream_test",
    "select_streams",
    "StreamDecision",
    "f_survival",
]


def alpha_trimmed_mean(window: Sequence[float], alpha: float) -> float:
    """Mean of the sorted window after dropping ceil(alpha*q) samples per end.

    Requires q - 2*ceil(alpha*q) >= 1 so at least one sample remains.
    """
    q = len(window)
    if q == 0:
        raise ValueError("empty window")
    if not 0.0 <= alpha < 0.5:
        raise ValueError(f"alpha must be in [0, 0.5), got {alpha}")
    trim = math.ceil(alpha * q)
    if q - 2 * trim < 1:
        raise ValueError(f"trimming {trim} samples per end of {q} leaves nothing")
    kept = sorted(window)[trim : q - trim]
    return sum(kept) / len(kept)


def _capped_trimmed_mean(window: Sequence[float], alpha: float) -> float:
    # Same as alpha_trimmed_mean but reduces the trim on windows too short to
    # support it (prefix windows of a causal filter), so one sample survives.
    q = len(window)
    trim = min(math.ceil(alpha * q), (q - 1) // 2)
    kept = sorted(window)[trim : q - trim]
    return sum(kept) / len(kept)


def smooth_stream(raw: Sequence[float], q: int, alpha: float) -> list[float]:
    """Causal trimmed-mean filter over a trailing window of length q.

    Output[i] filters the window ending at i; prefixes shorter than q use all
    available samples with a correspondingly reduced trim.
    """
    if q < 1:
        raise ValueError(f"window length must be >= 1, got {q}")
    if not 0.0 <= alpha < 0.5:
        raise ValueError(f"alpha must be in [0, 0.5), got {alpha}")
    out: list[float] = []
    for i in range(len(raw)):
        start = max(0, i + 1 - q)
        out.append(_capped_trimmed_mean(raw[start : i + 1], alpha))
    return out


def smooth_frames(frames: Sequence[RssFrame], params: ModelParams) -> list[RssFrame]:
    """Apply the causal trimmed-mean filter per stream across a frame sequence.

    Streams absent from a frame stay absent; each stream is filtered over the
    frames in which it appears.
    """
    buffers: dict[StreamId, list[float]] = {}
    out: list[RssFrame] = []
    for frame in frames:
        readings: dict[StreamId, float] = {}
        for stream, value in frame.readings.items():
            buf = buffers.setdefault(stream, [])
            buf.append(value)
            if len(buf) > params.q:
                del buf[0]
            readings[stream] = _capped_trimmed_mean(buf, params.alpha_trim)
        out.append(RssFrame(frame.timestamp, readings))
    return out


# --- two-group one-way ANOVA -------------------------------------------------

_BETA_EPS = 1e-15
_BETA_FPMIN = 1e-300
_BETA_MAXIT = 300


def _betacf(a: float, b: float, x: float) -> float:
    # Continued fraction for the regularized incomplete beta (modified Lentz).
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETA_FPMIN:
        d = _BETA_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_FPMIN:
            d = _BETA_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETA_FPMIN:
            c = _BETA_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_FPMIN:
            d = _BETA_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETA_FPMIN:
            c = _BETA_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise RuntimeError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def _betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_survival(f: float, d1: float, d2: float) -> float:
    """P(F >= f) for an F distribution with (d1, d2) degrees of freedom."""
    if d1 <= 0 or d2 <= 0:
        raise ValueError(f"degrees of freedom must be > 0, got ({d1}, {d2})")
    if not math.isfinite(f):
        return 0.0 if f > 0 else 1.0
    if f <= 0.0:
        return 1.0
    return _betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))


def anova_two_group(
    mean1: float, var1: float, n1: int, mean2: float, var2: float, n2: int
) -> tuple[float, float]:
    """F statistic and p-value of the two-group one-way ANOVA from summaries.

    Variances are sample variances (ddof=1). Degenerate zero-variance groups
    yield F=0, p=1 when the means agree and F=inf, p=0 otherwise.
    """
    if n1 < 2 or n2 < 2:
        raise ValueError(f"need >= 2 samples per group, got {n1} and {n2}")
    n = n1 + n2
    grand = (n1 * mean1 + n2 * mean2) / n
    ss_between = n1 * (mean1 - grand) ** 2 + n2 * (mean2 - grand) ** 2
    ss_within = (n1 - 1) * var1 + (n2 - 1) * var2
    d1 = 1
    d2 = n - 2
    if ss_within <= 0.0:
        if ss_between <= 0.0:
            return 0.0, 1.0
        return math.inf, 0.0
    f = (ss_between / d1) / (ss_within / d2)
    return f, f_survival(f, d1, d2)


def _summary(samples: Sequence[float]) -> tuple[float, float, int]:
    n = len(samples)
    mean = sum(samples) / n
    var = sum((s - mean) ** 2 for s in samples) / (n - 1) if n > 1 else 0.0
    return mean, var, n


@dataclass(frozen=True)
class StreamDecision:
    """Outcome of the offline-vs-online shift test for one stream."""

    stream: StreamId
    f_statistic: float
    p_value: float
    kept: bool
    note: str | None = None


def anova_stream_test(
    offline: Sequence[float],
    online: Sequence[float],
    significance: float,
    stream: StreamId = "",
) -> StreamDecision:
    """Keep the stream unless its mean shifted significantly since calibration.

    Groups with fewer than two samples cannot be tested; the stream is kept
    and flagged.
    """
    if not 0.0 < significance < 1.0:
        raise ValueError(f"significance must be in (0, 1), got {significance}")
    if len(offline) < 2 or len(online) < 2:
        return StreamDecision(stream, 0.0, 1.0, True, note="insufficient data")
    m1, v1, n1 = _summary(offline)
    m2, v2, n2 = _summary(online)
    f, p = anova_two_group(m1, v1, n1, m2, v2, n2)
    return StreamDecision(stream, f, p, kept=p >= significance)


def select_streams(
    fingerprint,
    recent_online_frames: Iterable[RssFrame],
    significance: float,
) -> set[StreamId]:
    """Streams whose online window matches their offline statistics.

    Never returns an empty set: if every stream is rejected, the single
    highest-p-value stream is retained and a warning is issued.
    """
    online: dict[StreamId, list[float]] = {}
    for frame in recent_online_frames:
        for stream, value in frame.readings.items():
            online.setdefault(stream, []).append(value)

    decisions = []
    for stream, (mean, var, count) in sorted(fingerprint.offline_stream_stats.items()):
        samples = online.get(stream, [])
        if count < 2 or len(samples) < 2:
            decisions.append(
                StreamDecision(stream, 0.0, 1.0, True, note="insufficient data")
            )
            continue
        m2, v2, n2 = _summary(samples)
        f, p = anova_two_group(mean, var, count, m2, v2, n2)
        decisions.append(StreamDecision(stream, f, p, kept=p >= significance))

    if not decisions:
        raise ValueError("fingerprint has no offline stream statistics")
    kept = {d.stream for d in decisions if d.kept}
    if not kept:
        survivor = max(decisions, key=lambda d: (d.p_value, d.stream))
        warnings.warn(
            f"all {len(decisions)} streams rejected at significance {significance}; "
            f"keeping {survivor.stream!r} (p={survivor.p_value:.3g})",
            RuntimeWarning,
            stacklevel=2,
        )
        kept = {survivor.stream}
    return kept
