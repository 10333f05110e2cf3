"""Per-feature Expected Conditional Distance (ECD) estimators.

Four estimators of the per-feature shift statistic gamma-hat:

* ``ecd_score``   (MB-SM)  - squared difference of model score components;
  the conditional-score identity makes one score evaluation per model per
  row yield all d statistics.
* ``ecd_mb_ks``   (MB-KS)  - exact two-sample KS between draws from the two
  models' closed-form Gaussian conditionals at each eval row.
* ``ecd_knn_ks``  (KNN-KS) - model-free: KS between the feature-j values of
  the k nearest neighbors (distance on the remaining coordinates) in X and
  in Y.
* ``marginal_ks`` - the per-column marginal KS baseline, blind to attacks
  that preserve marginals.

All KS statistics are computed exactly from sorted samples, never from a
binned approximation, because they feed strict threshold comparisons.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, InvalidDataError, ShapeError
from .flow import FlowModel, fit_flow, flow_score
from .gaussian import (
    GaussianModel,
    fit_gaussian,
    gaussian_conditional_moments,
    gaussian_score,
)


class Method(str, enum.Enum):
    """Estimator selector; values double as CLI spellings."""

    MB_SM = "mb-sm"
    MB_KS = "mb-ks"
    KNN_KS = "knn-ks"
    MARGINAL_KS = "marginal-ks"


@dataclass(frozen=True)
class EvalSet:
    """Evaluation rows drawn from X and Y (first ``m_x`` rows from X)."""

    points: np.ndarray
    m_x: int
    m_y: int

    def __post_init__(self):
        if self.m_x < 1 or self.m_y < 1:
            raise InvalidArgumentError("both halves of an eval set must be nonempty")
        if self.points.shape[0] != self.m_x + self.m_y:
            raise ShapeError("eval point count does not match m_x + m_y")


@dataclass(frozen=True)
class FeatureStats:
    """Per-feature statistic vector produced by one estimator run."""

    values: np.ndarray
    method: Method
    eval_points: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ShapeError(f"statistic vector must be 1-D, got shape {v.shape}")
        if not np.isfinite(v).all() or (v < 0).any():
            raise InvalidDataError("statistics must be finite and nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def make_eval_set(
    X: np.ndarray,
    Y: np.ndarray,
    m_per_side: int = 30,
    rng: np.random.Generator | None = None,
) -> EvalSet:
    """Draw ``m_per_side`` rows uniformly from each of X and Y.

    Sampling is without replacement, falling back to with-replacement when a
    source has fewer than ``m_per_side`` rows. Deterministic under seed.
    """
    if m_per_side < 1:
        raise InvalidArgumentError(f"m_per_side must be >= 1, got {m_per_side}")
    if rng is None:
        rng = np.random.default_rng()
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    ix = rng.choice(X.shape[0], size=m_per_side, replace=X.shape[0] < m_per_side)
    iy = rng.choice(Y.shape[0], size=m_per_side, replace=Y.shape[0] < m_per_side)
    return EvalSet(points=np.vstack([X[ix], Y[iy]]), m_x=m_per_side, m_y=m_per_side)


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov


def _ks_many(a_sorted: np.ndarray, b_sorted: np.ndarray) -> np.ndarray:
    """Row-wise exact two-sample KS for pre-sorted (m, na) and (m, nb) arrays.

    The supremum of |F_a - F_b| is attained at sample points; evaluating the
    right-continuous ECDFs at every point of both samples via counting
    (searchsorted side='right') is exact, including ties. Within a tied run
    only the last position is a valid evaluation point.
    """
    m, na = a_sorted.shape
    nb = b_sorted.shape[1]
    ra = np.arange(1, na + 1) / na
    rb = np.arange(1, nb + 1) / nb
    # last-of-run masks handle repeated values inside a sample
    last_a = np.empty(a_sorted.shape, dtype=bool)
    last_a[:, -1] = True
    np.not_equal(a_sorted[:, 1:], a_sorted[:, :-1], out=last_a[:, :-1])
    last_b = np.empty(b_sorted.shape, dtype=bool)
    last_b[:, -1] = True
    np.not_equal(b_sorted[:, 1:], b_sorted[:, :-1], out=last_b[:, :-1])

    out = np.empty(m)
    for i in range(m):
        fb_at_a = np.searchsorted(b_sorted[i], a_sorted[i], side="right") / nb
        fa_at_b = np.searchsorted(a_sorted[i], b_sorted[i], side="right") / na
        da = np.abs(ra - fb_at_a)[last_a[i]].max()
        db = np.abs(fa_at_b - rb)[last_b[i]].max()
        out[i] = max(da, db)
    return out


def ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    """Exact two-sample Kolmogorov-Smirnov statistic sup_t |F_a(t) - F_b(t)|."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise InvalidDataError("ks_statistic requires nonempty samples")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise InvalidDataError("ks_statistic requires finite samples")
    return float(_ks_many(np.sort(a)[None, :], np.sort(b)[None, :])[0])


# ---------------------------------------------------------------------------
# ECD estimators


def _score(model: GaussianModel | FlowModel, pts: np.ndarray) -> np.ndarray:
    if isinstance(model, GaussianModel):
        return gaussian_score(model, pts)
    return flow_score(model, pts)


def ecd_score(
    p_model: GaussianModel | FlowModel,
    q_model: GaussianModel | FlowModel,
    eval_set: EvalSet,
) -> FeatureStats:
    """Score-based ECD (MB-SM): gamma_j = mean over rows of (psi_p - psi_q)_j^2.

    By the conditional-score identity, component j of the joint score equals
    the x_j-derivative of log p(x_j | x_{-j}), so this is the per-feature
    Fisher divergence plug-in; summing over j recovers the joint estimate.
    """
    if p_model.dim != q_model.dim:
        raise ShapeError("models have different dimensions")
    diff = _score(p_model, eval_set.points) - _score(q_model, eval_set.points)
    return FeatureStats(
        values=np.mean(diff * diff, axis=0),
        method=Method.MB_SM,
        eval_points=eval_set.points.shape[0],
    )


def ecd_mb_ks(
    p_model: GaussianModel,
    q_model: GaussianModel,
    eval_set: EvalSet,
    n_samp: int = 1000,
    rng: np.random.Generator | None = None,
    rng_q: np.random.Generator | None = None,
) -> FeatureStats:
    """Model-based KS ECD: per-row KS between conditional samples.

    For every eval row x and feature j, draws ``n_samp`` samples from each
    model's closed-form conditional p(x_j | x_{-j}) and averages the exact
    KS statistics over rows. The two models' draws come from ``rng`` and
    ``rng_q`` (defaulting to the same stream consumed sequentially); passing
    two generators with equal state reproduces the degenerate identical-draws
    case.
    """
    if not isinstance(p_model, GaussianModel) or not isinstance(q_model, GaussianModel):
        raise InvalidArgumentError("ecd_mb_ks requires Gaussian models (closed-form conditionals)")
    if p_model.dim != q_model.dim:
        raise ShapeError("models have different dimensions")
    if rng is None:
        rng = np.random.default_rng()
    if rng_q is None:
        rng_q = rng
    pts = eval_set.points
    m, d = pts.shape
    mean_p, var_p = gaussian_conditional_moments(p_model, pts)
    mean_q, var_q = gaussian_conditional_moments(q_model, pts)
    sd_p, sd_q = np.sqrt(var_p), np.sqrt(var_q)

    values = np.empty(d)
    for j in range(d):
        zp = rng.standard_normal((m, n_samp))
        zq = rng_q.standard_normal((m, n_samp))
        zp.sort(axis=1)
        zq.sort(axis=1)
        sp = mean_p[:, j][:, None] + sd_p[j] * zp
        sq = mean_q[:, j][:, None] + sd_q[j] * zq
        values[j] = _ks_many(sp, sq).mean()
    return FeatureStats(values=values, method=Method.MB_KS, eval_points=m)


def ecd_knn_ks(X: np.ndarray, Y: np.ndarray, k: int, eval_set: EvalSet) -> FeatureStats:
    """Model-free KNN-KS ECD.

    For eval row x and feature j, the conditional sample from X is the
    feature-j values of the k rows of X nearest to x in Euclidean distance
    on the remaining coordinates (ties broken by row index), likewise for Y;
    gamma_j averages the exact KS between the two k-sets over eval rows.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[1] != Y.shape[1]:
        raise ShapeError("X and Y have different dimensions")
    if k > min(X.shape[0], Y.shape[0]):
        raise InvalidArgumentError(f"k={k} exceeds the sample size")
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    pts = eval_set.points
    m, d = pts.shape

    values = np.empty(d)
    cols = np.arange(d)
    for j in range(d):
        rest = cols[cols != j]
        ex = pts[:, rest]
        dx = ((ex[:, None, :] - X[None, :, rest]) ** 2).sum(axis=2)
        dy = ((ex[:, None, :] - Y[None, :, rest]) ** 2).sum(axis=2)
        # stable argsort keeps row order among equal distances
        ax = np.argsort(dx, axis=1, kind="stable")[:, :k]
        ay = np.argsort(dy, axis=1, kind="stable")[:, :k]
        a = np.sort(X[:, j][ax], axis=1)
        b = np.sort(Y[:, j][ay], axis=1)
        values[j] = _ks_many(a, b).mean()
    return FeatureStats(values=values, method=Method.KNN_KS, eval_points=m)


def marginal_ks(X: np.ndarray, Y: np.ndarray) -> FeatureStats:
    """Per-column marginal KS baseline."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[1] != Y.shape[1]:
        raise ShapeError("X and Y have different dimensions")
    xs = np.sort(X, axis=0).T
    ys = np.sort(Y, axis=0).T
    return FeatureStats(values=_ks_many(xs, ys), method=Method.MARGINAL_KS, eval_points=0)


def default_knn_k(n: int) -> int:
    """Default neighbor count ceil(sqrt(n))."""
    return int(math.ceil(math.sqrt(n)))


@dataclass(frozen=True)
class EstimatorConfig:
    """Everything needed to recompute a statistic on a new (X, Y) pair."""

    method: Method = Method.MB_SM
    m_per_side: int = 30
    n_samp: int = 1000
    knn_k: int | None = None
    density: str = "gaussian"  # "gaussian" or "flow", MB-SM only
    flow_layers: int = 2
    flow_bins: int = 100
    ridge: float = 0.0

    def __post_init__(self):
        if self.density not in ("gaussian", "flow"):
            raise InvalidArgumentError(f"unknown density model {self.density!r}")
        if self.density == "flow" and self.method is not Method.MB_SM:
            raise InvalidArgumentError("the flow density applies to the score statistic only")


def compute_feature_stats(
    X: np.ndarray,
    Y: np.ndarray,
    config: EstimatorConfig,
    rng: np.random.Generator,
) -> FeatureStats:
    """Fit models as required by ``config.method`` and evaluate gamma-hat.

    The generator is consumed in a fixed order (eval-set draw, then any
    conditional sampling) so results are reproducible under seed.
    """
    if config.method is Method.MARGINAL_KS:
        return marginal_ks(X, Y)
    ev = make_eval_set(X, Y, m_per_side=config.m_per_side, rng=rng)
    if config.method is Method.MB_SM:
        if config.density == "flow":
            p = fit_flow(X, layers=config.flow_layers, bins=config.flow_bins)
            q = fit_flow(Y, layers=config.flow_layers, bins=config.flow_bins)
        else:
            p = fit_gaussian(X, ridge=config.ridge)
            q = fit_gaussian(Y, ridge=config.ridge)
        return ecd_score(p, q, ev)
    if config.method is Method.MB_KS:
        p = fit_gaussian(X, ridge=config.ridge)
        q = fit_gaussian(Y, ridge=config.ridge)
        return ecd_mb_ks(p, q, ev, n_samp=config.n_samp, rng=rng)
    k = config.knn_k if config.knn_k is not None else default_knn_k(X.shape[0])
    return ecd_knn_ks(X, Y, k, ev)
