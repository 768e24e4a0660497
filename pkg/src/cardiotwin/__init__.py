"""Desk-scale cardiac-arrest prediction pipeline.

Simulated wearable fleet, ingest gateway with per-channel scale
normalization, a lumped-parameter circulatory twin per patient, a
compound-scaled convolutional classifier over rasterized twin state,
weighted decision fusion with clinician feedback, and the metrics suite
that evaluates the whole chain. Pure numpy/scipy throughout; every run
is reproducible from its seeds.
"""

from .benchmark import REFERENCE_ROWS, BenchmarkResult, benchmark, reference_consistency
from .errors import (
    CardioTwinError,
    ConfigError,
    DegenerateInputError,
    FrameParseError,
    FrameValidationError,
    NumericError,
    ParameterError,
    RoutingError,
    ShapeError,
    TransportError,
    UnknownReferenceError,
    ValidationError,
    VersionError,
)
from .fusion import (
    FusionConfig,
    NeighborOpinion,
    OutcomeRecord,
    PredictionEvent,
    ResidualHistory,
    detect_anomaly,
    fuse,
    fuse_value,
)
from .gateway import (
    ChannelStats,
    Gateway,
    NormalizedFrame,
    decode_frame,
    normalize,
    update_channel_stats,
)
from .metrics import (
    ConfusionMatrix,
    MetricsReport,
    auc,
    classification_metrics,
    confusion,
    f1_consistency,
)
from .net import (
    RiskPrediction,
    ScaledNet,
    build_net,
    fine_tune,
    fit,
    gradient_check,
    predict_risk,
)
from .pipeline import (
    CloudState,
    ExitReport,
    ScenarioConfig,
    export_report,
    run_scenario,
    simulate_to_dir,
)
from .scaling import ScalingCoeffs, ScalingConfig, StageSpec, compound_scale
from .telemetry import (
    FleetConfig,
    PatientProfile,
    SensorFrame,
    run_fleet,
    synth_frame,
)
from .twin import (
    FeatureImage,
    TwinParams,
    TwinRegistry,
    TwinState,
    rasterize,
    step_twin,
    windkessel_step,
)

__version__ = "0.1.0"

__all__ = [
    "BenchmarkResult",
    "CardioTwinError",
    "ChannelStats",
    "CloudState",
    "ConfigError",
    "ConfusionMatrix",
    "DegenerateInputError",
    "ExitReport",
    "FeatureImage",
    "FleetConfig",
    "FrameParseError",
    "FrameValidationError",
    "FusionConfig",
    "Gateway",
    "MetricsReport",
    "NeighborOpinion",
    "NormalizedFrame",
    "NumericError",
    "OutcomeRecord",
    "ParameterError",
    "PatientProfile",
    "PredictionEvent",
    "REFERENCE_ROWS",
    "ResidualHistory",
    "RiskPrediction",
    "RoutingError",
    "ScaledNet",
    "ScalingCoeffs",
    "ScalingConfig",
    "ScenarioConfig",
    "SensorFrame",
    "ShapeError",
    "StageSpec",
    "TransportError",
    "TwinParams",
    "TwinRegistry",
    "TwinState",
    "UnknownReferenceError",
    "ValidationError",
    "VersionError",
    "auc",
    "benchmark",
    "build_net",
    "classification_metrics",
    "compound_scale",
    "confusion",
    "decode_frame",
    "detect_anomaly",
    "export_report",
    "f1_consistency",
    "fine_tune",
    "fit",
    "fuse",
    "fuse_value",
    "gradient_check",
    "normalize",
    "predict_risk",
    "rasterize",
    "reference_consistency",
    "run_fleet",
    "run_scenario",
    "simulate_to_dir",
    "step_twin",
    "synth_frame",
    "update_channel_stats",
    "windkessel_step",
]
