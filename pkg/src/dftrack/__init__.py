"""Device-free multi-entity localization from WiFi RSS streams.

Offline, one calibration session per grid location trains a cross-calibrated
fingerprint (active/inactive RSS histograms) plus temporal transition priors.
Online, each frame's activation map is inferred by an exact binary graph-cut
over a temporal + spatial + likelihood energy, and a window of maps is merged
and clustered into entity count and continuous coordinates.
"""

from .clustering import (
    CandidateSet,
    Cluster,
    estimate_entities,
    hierarchical_cluster,
    merge_window,
)
from .estimator import DeviceFreeTracker
from .evaluation import (
    CalibrationData,
    EvalReport,
    PipelineError,
    count_error,
    distance_error,
    export_heatmap,
    run_pipeline,
    track_frames,
)
from .fingerprint import (
    Fingerprint,
    FingerprintFormatError,
    FingerprintVersionError,
    LocationFingerprint,
    RssHistogram,
    TemporalPrior,
    build_fingerprint,
    derive_training_maps,
    fit_params,
    learn_temporal_priors,
    likelihood,
    load_fingerprint,
    save_fingerprint,
    smooth_histogram,
)
from .graphcut import (
    CutGraph,
    TrackerState,
    brute_force_map,
    build_cut_graph,
    check_regular,
    infer_map,
    min_cut,
    pairwise_energy,
    total_energy,
    unary_energy,
)
from .preprocess import (
    StreamDecision,
    alpha_trimmed_mean,
    anova_stream_test,
    select_streams,
    smooth_frames,
    smooth_stream,
)
from .simulate import (
    TestbedConfig,
    Trajectory,
    default_config,
    generate_calibration,
    generate_test,
    rss_model,
)
from .traceio import (
    TraceFormatError,
    load_estimates,
    load_ground_truth,
    load_trace,
    save_estimates,
    save_ground_truth,
    save_trace,
)
from .types import (
    EnvironmentMap,
    FrameEstimate,
    GridLocation,
    GroundTruthFrame,
    ModelParams,
    RssFrame,
    StreamId,
    four_neighbor_pairs,
    make_grid,
)

__version__ = "0.1.0"

__all__ = [
    "CandidateSet",
    "Cluster",
    "estimate_entities",
    "hierarchical_cluster",
    "merge_window",
    "DeviceFreeTracker",
    "CalibrationData",
    "EvalReport",
    "PipelineError",
    "count_error",
    "distance_error",
    "export_heatmap",
    "run_pipeline",
    "track_frames",
    "Fingerprint",
    "FingerprintFormatError",
    "FingerprintVersionError",
    "LocationFingerprint",
    "RssHistogram",
    "TemporalPrior",
    "build_fingerprint",
    "derive_training_maps",
    "fit_params",
    "learn_temporal_priors",
    "likelihood",
    "load_fingerprint",
    "save_fingerprint",
    "smooth_histogram",
    "CutGraph",
    "TrackerState",
    "brute_force_map",
    "build_cut_graph",
    "check_regular",
    "infer_map",
    "min_cut",
    "pairwise_energy",
    "total_energy",
    "unary_energy",
    "StreamDecision",
    "alpha_trimmed_mean",
    "anova_stream_test",
    "select_streams",
    "smooth_frames",
    "smooth_stream",
    "TestbedConfig",
    "Trajectory",
    "default_config",
    "generate_calibration",
    "generate_test",
    "rss_model",
    "TraceFormatError",
    "load_estimates",
    "load_ground_truth",
    "load_trace",
    "save_estimates",
    "save_ground_truth",
    "save_trace",
    "EnvironmentMap",
    "FrameEstimate",
    "GridLocation",
    "GroundTruthFrame",
    "ModelParams",
    "RssFrame",
    "StreamId",
    "four_neighbor_pairs",
    "make_grid",
    "__version__",
]
