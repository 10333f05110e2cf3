"""Experiment drivers for the five evaluation families.

Each family aggregates seeded independent trials:

* fixed-sensor    - the tester knows which sensor might be compromised and
                    runs a single-feature test at level alpha.
* unknown-sensor  - full two-stage procedure, k=1; a trial counts as a true
                    positive only when the attack is detected and localized
                    to the right sensor.
* multi-sensor    - joint marginal attacks on |A| in {2..5} sensors, top-k
                    localization with k=|A|, micro precision/recall.
* stream          - sliding-window detection over simulated series with an
                    attack onset at 80% of the stream.
* realdata        - sliding (X, Y) window pairs over an ingested series,
                    attacks injected on half the trials, pooled-per-trial vs
                    global time-null thresholds.

Every trial derives its generator from (seed, family-label, trial-index), so
aggregation is order-independent and any single trial can be replayed.
Wall-clock timing is measured around the statistic computation only (model
fitting plus gamma-hat) and never enters deterministic outputs.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from .errors import InvalidArgumentError
from .estimators import EstimatorConfig, Method, compute_feature_stats
from .rng import spawn_rng
from .simulate import (
    GraphKind,
    Scenario,
    make_scenario,
    marginal_attack,
    sample_copula,
    AttackPlan,
)
from .stream import NullKind, StreamConfig, preprocess, run_stream
from .testing import (
    bootstrap_null_pooled,
    bootstrap_null_time,
    detect,
    localize,
    thresholds_from_null,
    two_stage_test,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TrialOutcome:
    predicted: tuple[int, ...]
    truth: tuple[int, ...]
    detected: bool
    attack_present: bool
    elapsed: float = 0.0

    def __post_init__(self):
        if self.predicted and not self.detected:
            raise InvalidArgumentError("predictions require a detection")


@dataclass(frozen=True)
class MicroPR:
    """Feature-wise confusion matrices summed across trials and features."""

    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    tn: int
    degenerate_precision: bool
    degenerate_recall: bool


def micro_pr(outcomes, d: int) -> MicroPR:
    if d < 1:
        raise InvalidArgumentError(f"d must be >= 1, got {d}")
    tp = fp = fn = tn = 0
    for o in outcomes:
        pred, truth = set(o.predicted), set(o.truth)
        tp += len(pred & truth)
        fp += len(pred - truth)
        fn += len(truth - pred)
        tn += d - len(pred | truth)
    deg_p, deg_r = tp + fp == 0, tp + fn == 0
    return MicroPR(
        precision=0.0 if deg_p else tp / (tp + fp),
        recall=0.0 if deg_r else tp / (tp + fn),
        tp=tp, fp=fp, fn=fn, tn=tn,
        degenerate_precision=deg_p,
        degenerate_recall=deg_r,
    )


def trial_pr(outcomes) -> tuple[float, float, bool, bool]:
    """Trial-level precision/recall: a true positive is an attacked trial
    that was detected with exactly the right feature set."""
    tp = sum(o.attack_present and o.detected and set(o.predicted) == set(o.truth) for o in outcomes)
    detections = sum(o.detected for o in outcomes)
    attacked = sum(o.attack_present for o in outcomes)
    deg_p, deg_r = detections == 0, attacked == 0
    precision = 0.0 if deg_p else tp / detections
    recall = 0.0 if deg_r else tp / attacked
    return precision, recall, deg_p, deg_r


@dataclass(frozen=True)
class ExperimentConfig:
    family: str = "unknown-sensor"
    method: Method = Method.MB_SM
    graph: GraphKind = GraphKind.COMPLETE
    d: int = 25
    mi: float = 0.2
    n: int = 1000
    B: int = 500
    alpha: float = 0.05
    budget_k: int = 1
    n_attacked: int = 1
    replications: int = 100
    attack_rate: float = 0.5
    seed: int = 0
    m_per_side: int = 30
    n_samp: int = 1000
    knn_k: int | None = None
    density: str = "gaussian"
    # stream family
    window: int = 400
    step: int = 50
    stream_len: int = 10000
    onset_frac: float = 0.8
    n_streams: int = 20
    # realdata family
    null_kind: str = NullKind.POOLED
    shuffle: bool = False
    difference: bool = False
    power_transform: bool = False
    standardize: bool = False

    def __post_init__(self):
        # accept plain strings from config files / CLI flags
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "graph", GraphKind(self.graph))

    def estimator(self) -> EstimatorConfig:
        return EstimatorConfig(
            method=self.method,
            m_per_side=self.m_per_side,
            n_samp=self.n_samp,
            knn_k=self.knn_k,
            density=self.density,
        )


@dataclass(frozen=True)
class ExperimentReport:
    family: str
    config: dict
    n_trials: int
    precision: float
    recall: float
    degenerate_precision: bool
    degenerate_recall: bool
    micro: MicroPR | None = None
    mean_delay: float | None = None
    # wall-clock of one test evaluation; statistic-only for fixed-sensor,
    # statistic plus per-trial null for the others
    mean_test_seconds: float = 0.0
    extras: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def summary_row(self) -> dict:
        """Flat record for the one-row-per-cell CSV report."""
        row = {
            "schema_version": self.schema_version,
            "family": self.family,
            "graph": self.config.get("graph", ""),
            "mi": self.config.get("mi", ""),
            "method": self.config.get("method", ""),
            "window": self.config.get("window", ""),
            "budget_k": self.config.get("budget_k", ""),
            "n_trials": self.n_trials,
            "precision": self.precision,
            "recall": self.recall,
            "micro_precision": "" if self.micro is None else self.micro.precision,
            "micro_recall": "" if self.micro is None else self.micro.recall,
            "mean_delay": "" if self.mean_delay is None else self.mean_delay,
            "seed": self.config.get("seed", ""),
        }
        return row


def _config_echo(cfg: ExperimentConfig) -> dict:
    echo = asdict(cfg)
    echo["method"] = cfg.method.value
    echo["graph"] = cfg.graph.value
    return echo


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("FEATSHIFT_THREADS", "1")))
    except ValueError:
        return 1


def _run_trials(trial_fn, args_list):
    """Run trials inline or on a process pool; results keep input order."""
    w = _workers()
    if w <= 1 or len(args_list) <= 1:
        return [trial_fn(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=w) as pool:
        return list(pool.map(trial_fn, args_list, chunksize=max(1, len(args_list) // (4 * w))))


# ---------------------------------------------------------------------------
# Simulation trial bodies (module-level so they pickle for process pools)


def _sample_pair(scenario: Scenario, cfg: ExperimentConfig, rng, attack: bool, attacked):
    spec = scenario.copula()
    X = sample_copula(spec, cfg.n, rng)
    Y = sample_copula(spec, cfg.n, rng)
    truth = ()
    if attack:
        Y, plan = marginal_attack(Y, attacked, rng)
        truth = plan.attacked
    return X, Y, truth


def _fixed_sensor_trial(args) -> TrialOutcome:
    cfg, scenario, i = args
    rng = spawn_rng(cfg.seed, "fixed-trial", i)
    j = int(rng.integers(cfg.d))
    attack = bool(rng.random() < cfg.attack_rate)
    X, Y, truth = _sample_pair(scenario, cfg, rng, attack, [j])
    null_rng, stat_rng = rng.spawn(2)
    null = bootstrap_null_pooled(X, Y, B=cfg.B, estimator=cfg.estimator(), rng=null_rng)
    thr = thresholds_from_null(null, alpha=cfg.alpha, bonferroni=False)
    t0 = time.perf_counter()
    stats = compute_feature_stats(X, Y, cfg.estimator(), stat_rng)
    elapsed = time.perf_counter() - t0
    hit = bool(stats.values[j] > thr.per_feature[j])
    return TrialOutcome(
        predicted=(j,) if hit else (),
        truth=truth,
        detected=hit,
        attack_present=attack,
        elapsed=elapsed,
    )


def _unknown_sensor_trial(args) -> TrialOutcome:
    cfg, scenario, i = args
    rng = spawn_rng(cfg.seed, "unknown-trial", i)
    j = int(rng.integers(cfg.d))
    attack = bool(rng.random() < cfg.attack_rate)
    X, Y, truth = _sample_pair(scenario, cfg, rng, attack, [j])
    test_rng = rng.spawn(1)[0]
    t0 = time.perf_counter()
    rep = two_stage_test(
        X, Y, estimator=cfg.estimator(), B=cfg.B, alpha=cfg.alpha, k=cfg.budget_k, rng=test_rng
    )
    elapsed = time.perf_counter() - t0
    return TrialOutcome(
        predicted=rep.localized,
        truth=truth,
        detected=rep.detected,
        attack_present=attack,
        elapsed=elapsed,
    )


def _multi_sensor_trial(args) -> TrialOutcome:
    cfg, scenario, i = args
    rng = spawn_rng(cfg.seed, "multi-trial", i)
    attack = bool(rng.random() < cfg.attack_rate)
    size = cfg.n_attacked if cfg.n_attacked > 1 else int(rng.integers(2, 6))
    attacked = sorted(int(a) for a in rng.choice(cfg.d, size=size, replace=False))
    X, Y, truth = _sample_pair(scenario, cfg, rng, attack, attacked)
    test_rng = rng.spawn(1)[0]
    t0 = time.perf_counter()
    rep = two_stage_test(
        X, Y, estimator=cfg.estimator(), B=cfg.B, alpha=cfg.alpha, k=size, rng=test_rng
    )
    elapsed = time.perf_counter() - t0
    return TrialOutcome(
        predicted=rep.localized,
        truth=truth,
        detected=rep.detected,
        attack_present=attack,
        elapsed=elapsed,
    )


def _simulation_report(cfg: ExperimentConfig, outcomes, family: str) -> ExperimentReport:
    precision, recall, deg_p, deg_r = trial_pr(outcomes)
    return ExperimentReport(
        family=family,
        config=_config_echo(cfg),
        n_trials=len(outcomes),
        precision=precision,
        recall=recall,
        degenerate_precision=deg_p,
        degenerate_recall=deg_r,
        micro=micro_pr(outcomes, cfg.d),
        mean_test_seconds=float(np.mean([o.elapsed for o in outcomes])),
    )


def _scenario_for(cfg: ExperimentConfig) -> Scenario:
    center = 12 if cfg.d > 12 else 0
    return make_scenario(cfg.graph, cfg.d, cfg.mi, attacked=(center,), center=center, seed=cfg.seed)


def run_fixed_sensor_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Single-feature test at level alpha on a uniformly chosen sensor; a fair
    coin decides whether that sensor is attacked. Per-test time is t_gamma/d
    (the statistic computes all d features at once)."""
    scenario = _scenario_for(cfg)
    outcomes = _run_trials(_fixed_sensor_trial, [(cfg, scenario, i) for i in range(cfg.replications)])
    rep = _simulation_report(cfg, outcomes, "fixed-sensor")
    return replace(rep, extras={"per_test_seconds": rep.mean_test_seconds / cfg.d})


def run_unknown_sensor_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Two-stage test with k = budget_k on a uniformly chosen attacked sensor;
    success requires detection plus exactly correct localization."""
    scenario = _scenario_for(cfg)
    outcomes = _run_trials(_unknown_sensor_trial, [(cfg, scenario, i) for i in range(cfg.replications)])
    return _simulation_report(cfg, outcomes, "unknown-sensor")


def run_multi_sensor_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Joint marginal attack on |A| sensors (random size 2..5 unless pinned by
    cfg.n_attacked), top-k localization with k=|A|."""
    scenario = _scenario_for(cfg)
    outcomes = _run_trials(_multi_sensor_trial, [(cfg, scenario, i) for i in range(cfg.replications)])
    return _simulation_report(cfg, outcomes, "multi-sensor")


# ---------------------------------------------------------------------------
# Streaming


def _stream_trial(args):
    cfg, scenario, i = args
    rng = spawn_rng(cfg.seed, "stream-trial", i)
    T = cfg.stream_len
    onset = int(cfg.onset_frac * T)
    clean_len = T // 2
    attacked = tuple(scenario.attacked)
    if cfg.n_attacked > 1:
        attacked = tuple(sorted(int(a) for a in rng.choice(cfg.d, size=cfg.n_attacked, replace=False)))
    body = sample_copula(scenario.copula(), T, rng)
    attacked_tail, plan0 = marginal_attack(body[onset:], attacked, rng)
    series = np.vstack([body[:onset], attacked_tail])
    plan = AttackPlan(attacked=plan0.attacked, permutation=plan0.permutation, onset=onset)
    scfg = StreamConfig(
        window=cfg.window,
        step=cfg.step,
        budget_k=cfg.budget_k,
        alpha=cfg.alpha,
        B=cfg.B,
        null_kind=NullKind.TIME,
        estimator=cfg.estimator(),
    )
    return run_stream(series, clean_len, scfg, truth=plan, rng=rng.spawn(1)[0]), attacked


def run_stream_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Aggregate sliding-window runs over seeded streams.

    Each stream attacks the scenario's center sensor, or n_attacked sensors
    drawn uniformly per stream when cfg.n_attacked > 1 (budget_k normally
    matches). Reports step-level detection precision/recall (positive class =
    window contains attacked rows), localization micro precision/recall over
    the contaminated steps, stream-level detection recall (any post-onset
    detection), and the mean detection delay in steps, measured from t_comp
    to the first detection at or after t_comp so pre-onset false alarms do
    not produce negative delays.
    """
    scenario = _scenario_for(cfg)
    results = _run_trials(_stream_trial, [(cfg, scenario, i) for i in range(cfg.n_streams)])
    reports = [rep for rep, _ in results]

    det_tp = det_fp = det_fn = 0
    loc_outcomes = []
    delays = []
    streams_detected = 0
    clean_steps = clean_alarms = 0
    for rep, truth in results:
        post = [r for r in rep.reports if rep.t_comp is not None and r.window_step >= rep.t_comp]
        pre = [r for r in rep.reports if rep.t_comp is None or r.window_step < rep.t_comp]
        det_tp += sum(r.detected for r in post)
        det_fn += sum(not r.detected for r in post)
        det_fp += sum(r.detected for r in pre)
        clean_steps += len(pre)
        clean_alarms += sum(r.detected for r in pre)
        for r in post:
            loc_outcomes.append(
                TrialOutcome(
                    predicted=r.localized, truth=truth, detected=r.detected, attack_present=True
                )
            )
        first_post = next((r.window_step for r in post if r.detected), None)
        if first_post is not None:
            streams_detected += 1
            delays.append(first_post - rep.t_comp)

    micro = micro_pr(loc_outcomes, cfg.d)
    det_prec = det_tp / (det_tp + det_fp) if det_tp + det_fp else 0.0
    det_rec = det_tp / (det_tp + det_fn) if det_tp + det_fn else 0.0
    return ExperimentReport(
        family="stream",
        config=_config_echo(cfg),
        n_trials=len(reports),
        precision=det_prec,
        recall=det_rec,
        degenerate_precision=det_tp + det_fp == 0,
        degenerate_recall=det_tp + det_fn == 0,
        micro=micro,
        mean_delay=float(np.mean(delays)) if delays else None,
        extras={
            "stream_recall": streams_detected / len(reports),
            "clean_step_fpr": clean_alarms / clean_steps if clean_steps else 0.0,
            "n_steps_per_stream": reports[0].n_steps,
            "delays": delays,
        },
    )


# ---------------------------------------------------------------------------
# Real-data protocol


def synthetic_drift_series(T: int = 20000, d: int = 8, seed: int = 0, drift: float = 3.0) -> np.ndarray:
    """Stand-in for a long real sensor recording: latent factors mixed through
    a slowly rotating, slowly rescaling matrix. The rotation makes adjacent
    windows differ slightly (natural drift) in a way that survives first
    differencing, which is exactly the failure mode the time-contiguous null
    exists to absorb."""
    rng = spawn_rng(seed, "drift-series")
    z = rng.standard_normal((T, d))
    phase = drift * 2.0 * np.pi * np.arange(T) / T
    base = rng.standard_normal((d, d)) / np.sqrt(d)
    skew = rng.standard_normal((d, d))
    skew = (skew - skew.T) / np.sqrt(d)
    out = np.empty((T, d))
    # piecewise-constant mixing per block keeps this O(T d^2)
    block = 100
    for start in range(0, T, block):
        p = phase[start]
        mix = base + np.sin(p) * skew
        scale = 1.0 + 0.3 * np.sin(2.0 * p + np.arange(d))
        rows = slice(start, min(start + block, T))
        out[rows] = (z[rows] @ mix.T) * scale
    return out


def run_realdata_experiment(data: np.ndarray, cfg: ExperimentConfig) -> ExperimentReport:
    """Sliding (X, Y) pairs over an ingested series, attack coin per trial.

    With the pooled null, thresholds are rebuilt per trial from each (X, Y)
    pair; with the time null, one global threshold set is bootstrapped from
    the series once and reused. ``cfg.shuffle`` permutes the time axis first
    (destroying natural drift), and the preprocessing flags run the
    differencing / power-transform / standardization chain before windowing.
    """
    data = np.asarray(data, dtype=float)
    rng = spawn_rng(cfg.seed, "real-setup")
    if cfg.shuffle:
        data = data[rng.permutation(data.shape[0])]
    data = preprocess(
        data,
        difference=cfg.difference,
        power_transform=cfg.power_transform,
        standardize=cfg.standardize,
    )
    n = cfg.n
    n_trials = (data.shape[0] - 2 * n) // n + 1
    if n_trials < 2:
        raise InvalidArgumentError(f"series too short: {data.shape[0]} rows for window {n}")
    n_trials = min(n_trials, cfg.replications)

    thresholds = None
    if cfg.null_kind == NullKind.TIME:
        null = bootstrap_null_time(data, n=n, B=cfg.B, estimator=cfg.estimator(), rng=rng.spawn(1)[0])
        thresholds = thresholds_from_null(null, alpha=cfg.alpha, bonferroni=True)

    outcomes = []
    for i in range(n_trials):
        trial_rng = spawn_rng(cfg.seed, "real-trial", i)
        start = i * n
        X = data[start : start + n]
        Y = data[start + n : start + 2 * n].copy()
        attack = bool(trial_rng.random() < cfg.attack_rate)
        truth = ()
        if attack:
            j = int(trial_rng.integers(data.shape[1]))
            Y, plan = marginal_attack(Y, [j], trial_rng)
            truth = plan.attacked
        test_rng = trial_rng.spawn(1)[0]
        t0 = time.perf_counter()
        rep = two_stage_test(
            X, Y, estimator=cfg.estimator(), B=cfg.B, alpha=cfg.alpha, k=cfg.budget_k,
            rng=test_rng, thresholds=thresholds,
        )
        elapsed = time.perf_counter() - t0
        outcomes.append(
            TrialOutcome(
                predicted=rep.localized, truth=truth, detected=rep.detected,
                attack_present=attack, elapsed=elapsed,
            )
        )

    tp = sum(o.attack_present and o.detected for o in outcomes)
    detections = sum(o.detected for o in outcomes)
    attacked = sum(o.attack_present for o in outcomes)
    det_prec = tp / detections if detections else 0.0
    det_rec = tp / attacked if attacked else 0.0
    loc_prec, loc_rec, deg_p, deg_r = trial_pr(outcomes)
    return ExperimentReport(
        family="realdata",
        config=_config_echo(cfg),
        n_trials=len(outcomes),
        precision=det_prec,
        recall=det_rec,
        degenerate_precision=detections == 0,
        degenerate_recall=attacked == 0,
        micro=micro_pr(outcomes, data.shape[1]),
        mean_test_seconds=float(np.mean([o.elapsed for o in outcomes])),
        extras={
            "n_detections": detections,
            "n_attacked": attacked,
            "attack_rate": attacked / len(outcomes),
            "localization_precision": loc_prec,
            "localization_recall": loc_rec,
        },
    )


# ---------------------------------------------------------------------------
# Timing harness


def measure_statistic_time(
    method: Method,
    n: int = 1000,
    d: int = 25,
    repeats: int = 3,
    seed: int = 0,
    knn_k: int | None = None,
) -> float:
    """Median wall-clock seconds for one full statistic evaluation (model fit
    plus gamma-hat on all d features); data generation excluded."""
    center = 12 if d > 12 else 0
    scenario = make_scenario(GraphKind.COMPLETE, d, 0.2, attacked=(center,), center=center, seed=seed)
    spec = scenario.copula()
    cfg = EstimatorConfig(method=method, knn_k=knn_k)
    times = []
    for r in range(repeats):
        rng = spawn_rng(seed, "timing", r)
        X = sample_copula(spec, n, rng)
        Y = sample_copula(spec, n, rng)
        stat_rng = spawn_rng(seed, "timing-stat", r)
        t0 = time.perf_counter()
        compute_feature_stats(X, Y, cfg, stat_rng)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))
