"""Sliding-window detection over time series.

A fixed reference window X is frozen from the clean prefix; the query window
Y slides over the rest of the series. Thresholds are built once (global,
from the time-contiguous null on the clean prefix) or recomputed per step
(pooled null on each (X, Y) pair), and every step runs the two-stage test.

Also houses the real-data preprocessing chain: first-order differencing,
per-column Yeo-Johnson power transform, and standardization. Transform
parameters are fitted on the clean portion only by default; fitting on the
full series (which leaks attack mass into the transform) is available for
comparison with pipelines that do exactly that.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, InvalidArgumentError
from .estimators import EstimatorConfig
from .simulate import AttackPlan
from .testing import (
    DetectionReport,
    Thresholds,
    bootstrap_null_pooled,
    bootstrap_null_time,
    detect,
    localize,
    thresholds_from_null,
    _as_estimator,
)


def difference_series(series: np.ndarray) -> np.ndarray:
    """First-order differences: row t of the output = series[t+1] - series[t]."""
    series = np.asarray(series, dtype=float)
    if series.shape[0] < 2:
        raise InsufficientDataError(f"need at least 2 rows to difference, got {series.shape[0]}")
    return np.diff(series, axis=0)


# ---------------------------------------------------------------------------
# Yeo-Johnson power transform


def yeo_johnson_transform(x: np.ndarray, lam: float) -> np.ndarray:
    """Yeo-Johnson transform with exponent ``lam`` (identity at lam=1)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    if abs(lam) < 1e-12:
        out[pos] = np.log1p(x[pos])
    else:
        out[pos] = (np.power(x[pos] + 1.0, lam) - 1.0) / lam
    neg = ~pos
    if abs(lam - 2.0) < 1e-12:
        out[neg] = -np.log1p(-x[neg])
    else:
        out[neg] = -(np.power(1.0 - x[neg], 2.0 - lam) - 1.0) / (2.0 - lam)
    return out


def _yj_profile_loglik(x: np.ndarray, lam: float) -> float:
    y = yeo_johnson_transform(x, lam)
    var = y.var()
    if var <= 0.0:
        return -np.inf
    n = x.shape[0]
    return -0.5 * n * math.log(var) + (lam - 1.0) * float(np.sum(np.sign(x) * np.log1p(np.abs(x))))


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def yeo_johnson_fit(values: np.ndarray, tol: float = 1e-4) -> float:
    """Maximum-likelihood lambda by golden-section search on [-5, 5]."""
    x = np.asarray(values, dtype=float).ravel()
    if x.shape[0] < 10:
        raise InsufficientDataError(f"need at least 10 values to fit lambda, got {x.shape[0]}")
    lo, hi = -5.0, 5.0
    a = hi - _INVPHI * (hi - lo)
    b = lo + _INVPHI * (hi - lo)
    fa, fb = _yj_profile_loglik(x, a), _yj_profile_loglik(x, b)
    while hi - lo > tol:
        if fa < fb:
            lo, a, fa = a, b, fb
            b = lo + _INVPHI * (hi - lo)
            fb = _yj_profile_loglik(x, b)
        else:
            hi, b, fb = b, a, fa
            a = hi - _INVPHI * (hi - lo)
            fa = _yj_profile_loglik(x, a)
    return 0.5 * (lo + hi)


def preprocess(
    series: np.ndarray,
    difference: bool = False,
    power_transform: bool = False,
    standardize: bool = False,
    fit_len: int | None = None,
) -> np.ndarray:
    """Differencing, per-column Yeo-Johnson, then standardization.

    Transform parameters (lambda, mean, variance) are estimated on the first
    ``fit_len`` rows of the (possibly differenced) series and applied to all
    rows; ``fit_len=None`` fits on everything. With all flags off this is the
    identity.
    """
    out = np.asarray(series, dtype=float)
    if difference:
        out = difference_series(out)
        if fit_len is not None:
            fit_len = fit_len - 1
    if fit_len is not None and not 2 <= fit_len <= out.shape[0]:
        raise InvalidArgumentError(f"fit_len {fit_len} outside [2, {out.shape[0]}] after differencing")
    fit = out if fit_len is None else out[:fit_len]
    if power_transform:
        cols = []
        for j in range(out.shape[1]):
            lam = yeo_johnson_fit(fit[:, j])
            cols.append(yeo_johnson_transform(out[:, j], lam))
        out = np.column_stack(cols)
        fit = out if fit_len is None else out[:fit_len]
    if standardize:
        mu = fit.mean(axis=0)
        sd = fit.std(axis=0)
        if (sd == 0.0).any():
            raise InsufficientDataError("constant column in the fitting portion; cannot standardize")
        out = (out - mu) / sd
    return out


# ---------------------------------------------------------------------------
# Stream loop


class NullKind:
    POOLED = "pooled"
    TIME = "time"


@dataclass(frozen=True)
class StreamConfig:
    window: int
    step: int = 50
    budget_k: int = 1
    alpha: float = 0.05
    B: int = 500
    null_kind: str = NullKind.TIME
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    difference: bool = False
    power_transform: bool = False
    standardize: bool = False
    fit_on_all: bool = False

    def __post_init__(self):
        if self.step < 1:
            raise InvalidArgumentError(f"step must be >= 1, got {self.step}")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidArgumentError(f"alpha must lie in (0,1), got {self.alpha}")
        if self.null_kind not in (NullKind.POOLED, NullKind.TIME):
            raise InvalidArgumentError(f"unknown null kind {self.null_kind!r}")
        if self.window < 2 * self.step:
            warnings.warn(
                f"window {self.window} < 2*step {2 * self.step}: consecutive windows "
                "share little data and onset accounting gets coarse",
                stacklevel=2,
            )


@dataclass(frozen=True)
class StreamReport:
    reports: tuple[DetectionReport, ...]
    t_comp: int | None
    t_det: int | None
    delay: int | None
    pre_onset_alarm: bool

    @property
    def n_steps(self) -> int:
        return len(self.reports)

    @property
    def detected_steps(self) -> tuple[int, ...]:
        return tuple(r.window_step for r in self.reports if r.detected)


def n_stream_steps(T: int, clean_len: int, window: int, step: int) -> int:
    """Number of query windows of size ``window`` sliding by ``step`` over
    rows clean_len..T-1."""
    return (T - clean_len - window) // step + 1


def run_stream(
    series: np.ndarray,
    clean_len: int,
    cfg: StreamConfig,
    truth: AttackPlan | int | None = None,
    rng: np.random.Generator | None = None,
) -> StreamReport:
    """Slide the query window over ``series`` and test every step.

    ``clean_len`` rows at the start are attack-free by contract; the reference
    window is the first ``window`` of them and, for the time null, thresholds
    are bootstrapped once from the whole clean prefix. ``truth`` (an
    AttackPlan or a bare onset row index) yields t_comp, the first step whose
    query window contains a compromised row, and the detection delay
    t_det - t_comp in steps.
    """
    series = np.asarray(series, dtype=float)
    if rng is None:
        rng = np.random.default_rng()
    K, step = cfg.window, cfg.step
    T_raw = series.shape[0]
    if T_raw < clean_len + 2 * K:
        raise InsufficientDataError(
            f"need at least clean_len + 2*window = {clean_len + 2 * K} rows, got {T_raw}"
        )
    if cfg.null_kind == NullKind.TIME and clean_len < 2 * K:
        raise InsufficientDataError(
            f"time null needs clean_len >= 2*window = {2 * K}, got {clean_len}"
        )

    proc = preprocess(
        series,
        difference=cfg.difference,
        power_transform=cfg.power_transform,
        standardize=cfg.standardize,
        fit_len=None if cfg.fit_on_all else clean_len,
    )
    shift = 1 if cfg.difference else 0
    clean_p = clean_len - shift
    T = proc.shape[0]
    onset_p = None
    onset = truth if isinstance(truth, (int, np.integer)) else getattr(truth, "onset", None)
    if onset is not None:
        # differenced row t spans raw rows (t, t+1): contaminated from onset-1
        onset_p = int(onset) - shift

    X = proc[:K]
    n_steps = n_stream_steps(T, clean_p, K, step)
    children = rng.spawn(n_steps + 1)
    fn = _as_estimator(cfg.estimator)

    thr: Thresholds | None = None
    if cfg.null_kind == NullKind.TIME:
        null = bootstrap_null_time(proc[:clean_p], n=K, B=cfg.B, estimator=cfg.estimator, rng=children[0])
        thr = thresholds_from_null(null, alpha=cfg.alpha, bonferroni=True)

    reports = []
    t_comp = t_det = None
    for s in range(n_steps):
        start = clean_p + s * step
        Y = proc[start : start + K]
        step_rng = children[1 + s]
        if cfg.null_kind == NullKind.POOLED:
            null_rng, stat_rng = step_rng.spawn(2)
            null = bootstrap_null_pooled(X, Y, B=cfg.B, estimator=cfg.estimator, rng=null_rng)
            step_thr = thresholds_from_null(null, alpha=cfg.alpha, bonferroni=True)
        else:
            step_thr, stat_rng = thr, step_rng
        stats = fn(X, Y, stat_rng)
        hit = detect(stats, step_thr)
        localized = localize(stats, cfg.budget_k) if hit else ()
        reports.append(
            DetectionReport(
                detected=hit, localized=localized, stats=stats, thresholds=step_thr, window_step=s
            )
        )
        if hit and t_det is None:
            t_det = s
        if onset_p is not None and t_comp is None and start + K - 1 >= onset_p:
            t_comp = s

    delay = None if (t_comp is None or t_det is None) else t_det - t_comp
    return StreamReport(
        reports=tuple(reports),
        t_comp=t_comp,
        t_det=t_det,
        delay=delay,
        pre_onset_alarm=bool(delay is not None and delay < 0),
    )
