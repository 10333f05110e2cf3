"""Feature-level distribution shift detection and localization.

Detects whether two samples (or a sliding window of a stream) differ in
distribution and, when they do, names the features responsible, using
per-feature conditional-distribution statistics with bootstrap-calibrated
thresholds. Ships a calibrated attack-scenario simulator for validation.
"""

from .errors import (
    ConfigError,
    FeatshiftError,
    InsufficientDataError,
    InvalidArgumentError,
    InvalidDataError,
    ShapeError,
    UnreachableTargetError,
    WeightTooLargeError,
)
from .estimators import (
    EstimatorConfig,
    EvalSet,
    FeatureStats,
    Method,
    compute_feature_stats,
    default_knn_k,
    ecd_knn_ks,
    ecd_mb_ks,
    ecd_score,
    ks_statistic,
    make_eval_set,
    marginal_ks,
)
from .flow import (
    FlowModel,
    fit_flow,
    flow_inverse,
    flow_log_density,
    flow_sample,
    flow_score,
)
from .gaussian import (
    ConditionalGaussian,
    GaussianModel,
    fit_gaussian,
    gaussian_conditional,
    gaussian_conditional_moments,
    gaussian_log_density,
    gaussian_score,
    sample_gaussian,
)
from .rng import as_rng, spawn_rng
from .simulate import (
    AttackPlan,
    CopulaSpec,
    GraphKind,
    GraphSpec,
    Scenario,
    arcsine_cdf,
    arcsine_quantile,
    build_graph,
    calibrate_edge_weight,
    correlation_from_precision,
    gaussian_mi,
    make_scenario,
    marginal_attack,
    max_stable_weight,
    precision_from_graph,
    sample_copula,
    scenario_from_json,
    scenario_to_json,
)
from .stream import (
    NullKind,
    StreamConfig,
    StreamReport,
    difference_series,
    preprocess,
    run_stream,
    yeo_johnson_fit,
    yeo_johnson_transform,
)
from .testing import (
    DetectionReport,
    NullDistribution,
    Thresholds,
    bootstrap_null_pooled,
    bootstrap_null_time,
    detect,
    localize,
    thresholds_from_null,
    two_stage_test,
)

__version__ = "0.1.0"

__all__ = [
    "arcsine_cdf",
    "arcsine_quantile",
    "as_rng",
    "AttackPlan",
    "bootstrap_null_pooled",
    "bootstrap_null_time",
    "build_graph",
    "calibrate_edge_weight",
    "compute_feature_stats",
    "ConditionalGaussian",
    "ConfigError",
    "CopulaSpec",
    "correlation_from_precision",
    "default_knn_k",
    "detect",
    "DetectionReport",
    "difference_series",
    "ecd_knn_ks",
    "ecd_mb_ks",
    "ecd_score",
    "EstimatorConfig",
    "EvalSet",
    "FeatshiftError",
    "FeatureStats",
    "fit_flow",
    "fit_gaussian",
    "flow_inverse",
    "flow_log_density",
    "flow_sample",
    "flow_score",
    "FlowModel",
    "gaussian_conditional",
    "gaussian_conditional_moments",
    "gaussian_log_density",
    "gaussian_mi",
    "gaussian_score",
    "GaussianModel",
    "GraphKind",
    "GraphSpec",
    "InsufficientDataError",
    "InvalidArgumentError",
    "InvalidDataError",
    "ks_statistic",
    "localize",
    "make_eval_set",
    "make_scenario",
    "marginal_attack",
    "marginal_ks",
    "max_stable_weight",
    "Method",
    "NullDistribution",
    "NullKind",
    "precision_from_graph",
    "preprocess",
    "run_stream",
    "sample_copula",
    "sample_gaussian",
    "Scenario",
    "scenario_from_json",
    "scenario_to_json",
    "ShapeError",
    "spawn_rng",
    "StreamConfig",
    "StreamReport",
    "Thresholds",
    "thresholds_from_null",
    "two_stage_test",
    "UnreachableTargetError",
    "WeightTooLargeError",
    "yeo_johnson_fit",
    "yeo_johnson_transform",
]
