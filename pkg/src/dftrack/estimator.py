"""Scikit-learn style front end for the tracking pipeline."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .evaluation import _filter_streams, track_frames
from .fingerprint import build_fingerprint, derive_training_maps
from .preprocess import select_streams, smooth_frames
from .types import (
    FrameEstimate,
    GridLocation,
    GroundTruthFrame,
    ModelParams,
    RssFrame,
)


class DeviceFreeTracker(BaseEstimator):
    """Estimator wrapping calibration (fit) and online tracking (predict).

    Parameters mirror ModelParams; ``fit`` consumes one calibration session
    per grid location and trains the fingerprint, ``predict`` turns a raw
    frame sequence into per-frame entity estimates, and ``transform`` exposes
    the underlying binary activation maps.
    """

    _DEFAULTS = ModelParams()

    def __init__(
        self,
        beta: float = _DEFAULTS.beta,
        gamma: float = _DEFAULTS.gamma,
        delta: float = _DEFAULTS.delta,
        q: int = _DEFAULTS.q,
        alpha_trim: float = _DEFAULTS.alpha_trim,
        anova_significance: float = _DEFAULTS.anova_significance,
        hist_bin_width: float = _DEFAULTS.hist_bin_width,
        hist_smooth_sigma: float = _DEFAULTS.hist_smooth_sigma,
        hist_uniform_mix: float = _DEFAULTS.hist_uniform_mix,
        w: int = _DEFAULTS.w,
        r: float = _DEFAULTS.r,
        hmm_order: int = _DEFAULTS.hmm_order,
        spatial_contrast: str = _DEFAULTS.spatial_contrast,
        anova_window: int = _DEFAULTS.anova_window,
    ):
        self.beta = beta
        self.gamma = gamma
        self.delta = delta
        self.q = q
        self.alpha_trim = alpha_trim
        self.anova_significance = anova_significance
        self.hist_bin_width = hist_bin_width
        self.hist_smooth_sigma = hist_smooth_sigma
        self.hist_uniform_mix = hist_uniform_mix
        self.w = w
        self.r = r
        self.hmm_order = hmm_order
        self.spatial_contrast = spatial_contrast
        self.anova_window = anova_window

    def _model_params(self) -> ModelParams:
        return ModelParams(
            beta=self.beta,
            gamma=self.gamma,
            delta=self.delta,
            q=self.q,
            alpha_trim=self.alpha_trim,
            anova_significance=self.anova_significance,
            hist_bin_width=self.hist_bin_width,
            hist_smooth_sigma=self.hist_smooth_sigma,
            hist_uniform_mix=self.hist_uniform_mix,
            w=self.w,
            r=self.r,
            hmm_order=self.hmm_order,
            spatial_contrast=self.spatial_contrast,
            anova_window=self.anova_window,
        )

    def fit(
        self,
        X: Sequence[tuple[GridLocation, Sequence[RssFrame]]],
        y=None,
        *,
        baseline_frames: Sequence[RssFrame] | None = None,
        training_truth: Sequence[GroundTruthFrame] | None = None,
    ) -> "DeviceFreeTracker":
        """Train the fingerprint from raw calibration sessions.

        X is the session list [(location, frames), ...] covering every grid
        location; ``baseline_frames`` (empty-area recording) feeds the stream
        filter statistics and ``training_truth`` the temporal prior.
        """
        params = self._model_params()
        grid = tuple(sorted((loc for loc, _ in X), key=lambda g: g.index))
        smoothed = [(loc, smooth_frames(frames, params)) for loc, frames in X]
        # Raw baseline: the stream-shift test compares raw readings.
        baseline = tuple(baseline_frames) if baseline_frames is not None else None
        maps = None
        if training_truth:
            maps = [derive_training_maps(training_truth, grid)]
        self.fingerprint_ = build_fingerprint(
            smoothed, grid, params, baseline_frames=baseline, training_maps=maps
        )
        self.params_ = params
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "fingerprint_"):
            raise NotFittedError(
                "this DeviceFreeTracker is not fitted yet; call fit first"
            )

    def _prepare(self, frames: Sequence[RssFrame]) -> list[RssFrame]:
        smoothed = smooth_frames(frames, self.params_)
        kept = select_streams(
            self.fingerprint_,
            list(frames)[: self.params_.anova_window],
            self.params_.anova_significance,
        )
        return _filter_streams(smoothed, kept)

    def predict(self, X: Sequence[RssFrame]) -> list[FrameEstimate]:
        """Track a raw frame sequence: entity count and coordinates per frame."""
        self._check_fitted()
        if not X:
            return []
        estimates, _, _ = track_frames(self.fingerprint_, self.params_, self._prepare(X))
        return estimates

    def transform(self, X: Sequence[RssFrame]) -> np.ndarray:
        """Per-frame binary activation maps as a (n_frames, n_locations) array."""
        self._check_fitted()
        if not X:
            return np.zeros((0, self.fingerprint_.n), dtype=int)
        _, maps, _ = track_frames(
            self.fingerprint_, self.params_, self._prepare(X), collect=True
        )
        return np.array([[int(a) for a in m.active] for m in maps], dtype=int)
