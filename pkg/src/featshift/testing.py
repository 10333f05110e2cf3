"""Bootstrap null calibration and the two-stage detect/localize procedure.

Stage 1 declares a shift when any per-feature statistic exceeds its
bootstrap-calibrated threshold (Bonferroni-corrected by default). Stage 2
ranks features by the statistic and returns the top-k as the localized set.
Thresholds come from one of two null constructions:

* pooled     - resample X_boot, Y_boot with replacement from the pooled rows
               of (X, Y); appropriate for exchangeable two-sample inputs.
* time       - split a clean reference series at random positions into
               adjacent windows; absorbs benign drift into the null and
               yields the single global threshold reused across stream steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import (
    InsufficientDataError,
    InvalidArgumentError,
    ShapeError,
)
from .estimators import (
    EstimatorConfig,
    FeatureStats,
    Method,
    compute_feature_stats,
)

EstimatorLike = Union[EstimatorConfig, Callable[..., FeatureStats]]


@dataclass(frozen=True)
class NullDistribution:
    """Bootstrap sample of the statistic vector under no shift."""

    stats: np.ndarray
    method: Method
    B: int

    def __post_init__(self):
        s = np.asarray(self.stats, dtype=float)
        if self.B < 1:
            raise InvalidArgumentError(f"B must be >= 1, got {self.B}")
        if s.ndim != 2 or s.shape[0] != self.B:
            raise ShapeError(f"null stats must be B x d, got shape {s.shape}")
        if not np.isfinite(s).all() or (s < 0).any():
            raise ShapeError("null stats must be finite and nonnegative")
        object.__setattr__(self, "stats", s)

    @property
    def dim(self) -> int:
        return self.stats.shape[1]


@dataclass(frozen=True)
class Thresholds:
    """Per-feature detection thresholds at a given significance level."""

    per_feature: np.ndarray
    alpha: float
    corrected: bool

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidArgumentError(f"alpha must lie in (0,1), got {self.alpha}")
        object.__setattr__(self, "per_feature", np.asarray(self.per_feature, dtype=float))

    @property
    def dim(self) -> int:
        return self.per_feature.shape[0]


@dataclass(frozen=True)
class DetectionReport:
    detected: bool
    localized: tuple[int, ...]
    stats: FeatureStats
    thresholds: Thresholds
    window_step: int | None = None

    def __post_init__(self):
        if self.localized and not self.detected:
            raise InvalidArgumentError("localized set must be empty when nothing was detected")


def _as_estimator(estimator: EstimatorLike) -> Callable[..., FeatureStats]:
    if isinstance(estimator, EstimatorConfig):
        cfg = estimator
        return lambda X, Y, rng: compute_feature_stats(X, Y, cfg, rng)
    return estimator


def _method_of(estimator: EstimatorLike, sample: FeatureStats) -> Method:
    if isinstance(estimator, EstimatorConfig):
        return estimator.method
    return sample.method


def bootstrap_null_pooled(
    X: np.ndarray,
    Y: np.ndarray,
    B: int = 50,
    estimator: EstimatorLike = EstimatorConfig(),
    rng: np.random.Generator | None = None,
    permutation: bool = False,
) -> NullDistribution:
    """Null statistics from resampling the pooled rows of X and Y.

    Each replicate draws n rows with replacement for X_boot and, independently,
    n rows for Y_boot from the pooled 2n rows, then recomputes the statistic
    (refitting any models). ``permutation=True`` switches to a without-
    replacement split of one pooled shuffle, for comparison. Replicates use
    generators spawned up front, so results do not depend on evaluation order.
    """
    if B < 1:
        raise InvalidArgumentError(f"B must be >= 1, got {B}")
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[1] != Y.shape[1]:
        raise ShapeError("X and Y have different dimensions")
    if rng is None:
        rng = np.random.default_rng()
    pooled = np.vstack([X, Y])
    n, n2 = X.shape[0], pooled.shape[0]
    fn = _as_estimator(estimator)

    rows = []
    for b, child in enumerate(rng.spawn(B)):
        if permutation:
            perm = child.permutation(n2)
            Xb, Yb = pooled[perm[:n]], pooled[perm[n:]]
        else:
            Xb = pooled[child.integers(0, n2, size=n)]
            Yb = pooled[child.integers(0, n2, size=n)]
        try:
            rows.append(fn(Xb, Yb, child))
        except Exception as exc:
            exc.args = (f"bootstrap replicate {b}: {exc}",)
            raise
    stats = np.array([r.values for r in rows])
    return NullDistribution(stats=stats, method=_method_of(estimator, rows[0]), B=B)


def bootstrap_null_time(
    clean: np.ndarray,
    n: int,
    B: int = 500,
    estimator: EstimatorLike = EstimatorConfig(),
    rng: np.random.Generator | None = None,
) -> NullDistribution:
    """Null statistics from adjacent-window splits of a clean series.

    Each replicate picks t uniformly from [n, T-n] and compares
    clean[t-n:t] against clean[t:t+n]. Benign temporal drift inside the
    clean series inflates these nulls, which is what makes the resulting
    global threshold robust for streaming.
    """
    clean = np.asarray(clean, dtype=float)
    T = clean.shape[0]
    if T < 2 * n:
        raise InsufficientDataError(f"need at least 2n={2*n} clean rows, got {T}")
    if B < 1:
        raise InvalidArgumentError(f"B must be >= 1, got {B}")
    if rng is None:
        rng = np.random.default_rng()
    fn = _as_estimator(estimator)

    rows = []
    for b, child in enumerate(rng.spawn(B)):
        t = int(child.integers(n, T - n + 1))
        try:
            rows.append(fn(clean[t - n : t], clean[t : t + n], child))
        except Exception as exc:
            exc.args = (f"bootstrap replicate {b}: {exc}",)
            raise
    stats = np.array([r.values for r in rows])
    return NullDistribution(stats=stats, method=_method_of(estimator, rows[0]), B=B)


def _order_index(B: int, a: float) -> int:
    """1-based order-statistic index ceil((1-a)*B), guarded against float
    roundoff and capped at B."""
    return min(B, math.ceil((1.0 - a) * B - 1e-9))


def thresholds_from_null(
    null: NullDistribution, alpha: float = 0.05, bonferroni: bool = True
) -> Thresholds:
    """Per-feature threshold = upper (1-a) order statistic of the null column,
    with a = alpha/d under Bonferroni correction."""
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"alpha must lie in (0,1), got {alpha}")
    d = null.dim
    a = alpha / d if bonferroni else alpha
    idx = _order_index(null.B, a)
    col_sorted = np.sort(null.stats, axis=0)
    return Thresholds(per_feature=col_sorted[idx - 1], alpha=alpha, corrected=bonferroni)


def detect(stats: FeatureStats, thr: Thresholds) -> bool:
    """Stage 1: any statistic strictly above its threshold."""
    if stats.dim != thr.dim:
        raise ShapeError(f"stats dimension {stats.dim} != thresholds dimension {thr.dim}")
    return bool((stats.values > thr.per_feature).any())


def localize(stats: FeatureStats, k: int = 1) -> tuple[int, ...]:
    """Stage 2: indices of the k largest statistics, descending, ties toward
    the lower index."""
    d = stats.dim
    if not 1 <= k <= d:
        raise InvalidArgumentError(f"budget k={k} outside [1, {d}]")
    order = np.lexsort((np.arange(d), -stats.values))
    return tuple(int(j) for j in order[:k])


def two_stage_test(
    X: np.ndarray,
    Y: np.ndarray,
    estimator: EstimatorLike = EstimatorConfig(),
    B: int = 50,
    alpha: float = 0.05,
    k: int = 1,
    null_source: str = "pooled",
    rng: np.random.Generator | None = None,
    *,
    bonferroni: bool = True,
    clean: np.ndarray | None = None,
    thresholds: Thresholds | None = None,
    window_step: int | None = None,
) -> DetectionReport:
    """Full two-stage procedure on one (X, Y) pair.

    Builds the null (unless precomputed ``thresholds`` are supplied, as in
    streaming), derives Bonferroni thresholds, computes the statistic on the
    original pair, then detects and, if detected, localizes the top-k
    features.
    """
    if rng is None:
        rng = np.random.default_rng()
    null_rng, stat_rng = rng.spawn(2)
    if thresholds is None:
        if null_source == "pooled":
            null = bootstrap_null_pooled(X, Y, B=B, estimator=estimator, rng=null_rng)
        elif null_source == "time":
            if clean is None:
                raise InvalidArgumentError("time null requires a clean reference series")
            null = bootstrap_null_time(clean, n=X.shape[0], B=B, estimator=estimator, rng=null_rng)
        else:
            raise InvalidArgumentError(f"unknown null source {null_source!r}")
        thresholds = thresholds_from_null(null, alpha=alpha, bonferroni=bonferroni)
    fn = _as_estimator(estimator)
    stats = fn(np.asarray(X, dtype=float), np.asarray(Y, dtype=float), stat_rng)
    hit = detect(stats, thresholds)
    localized = localize(stats, k) if hit else ()
    return DetectionReport(
        detected=hit,
        localized=localized,
        stats=stats,
        thresholds=thresholds,
        window_step=window_step,
    )
