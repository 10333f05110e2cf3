"""Command-line frontend: simulate, detect, stream, experiment, calibrate.

Configuration is resolved in three layers: built-in defaults, then a --config
JSON file, then explicit flags. The fully resolved form (defaults included)
is echoed to stdout and written to resolved_config.json in the output
directory before any computation, so every run is reproducible from its
emitted config alone. Unknown config keys are rejected. All output files are
written atomically, and repeated runs with the same seed are byte-identical.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 internal.
The FEATSHIFT_THREADS environment variable caps worker processes used for
experiment replication (default 1).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from dataclasses import asdict

import numpy as np

from .errors import (
    ConfigError,
    InsufficientDataError,
    InvalidArgumentError,
    InvalidDataError,
    ShapeError,
    UnreachableTargetError,
    WeightTooLargeError,
)
from .estimators import EstimatorConfig, Method
from .experiments import (
    ExperimentConfig,
    run_fixed_sensor_experiment,
    run_multi_sensor_experiment,
    run_realdata_experiment,
    run_stream_experiment,
    run_unknown_sensor_experiment,
)
from .io import (
    atomic_write_text,
    read_csv_matrix,
    write_csv_matrix,
    write_csv_rows,
    write_json,
    write_jsonl,
)
from .plots import plot_experiment_cells, plot_feature_stats, plot_stream
from .rng import spawn_rng
from .simulate import gaussian_mi, make_scenario, marginal_attack, sample_copula, scenario_to_json
from .stream import StreamConfig, run_stream
from .testing import two_stage_test

_METHODS = [m.value for m in Method]
_GRAPHS = ["complete", "cycle", "grid", "random", "chain"]
_FAMILIES = ["fixed-sensor", "unknown-sensor", "multi-sensor", "stream", "realdata"]

# Per-command defaults. Every key a config file may set appears here; the
# resolved config echoes all of them, set or defaulted.
_SPECS: dict[str, dict] = {
    "simulate": {
        "seed": 0, "graph": "complete", "d": 25, "mi": 0.2, "n": 1000,
        "attacked": None, "edge_prob": 0.1, "stream_len": None, "onset": None,
        "out": ".",
    },
    "detect": {
        "seed": 0, "reference": None, "query": None, "method": "mb-sm",
        "bootstrap": "pooled", "boot_b": 50, "alpha": 0.05, "budget_k": 1,
        "m_per_side": 30, "n_samp": 1000, "knn_k": None, "density": "gaussian",
        "out": ".",
    },
    "stream": {
        "seed": 0, "series": None, "clean_len": None, "truth": None,
        "onset": None, "window": 400, "step": 50, "budget_k": 1,
        "alpha": 0.05, "boot_b": 500, "bootstrap": "time", "method": "mb-sm",
        "m_per_side": 30, "n_samp": 1000, "knn_k": None, "density": "gaussian",
        "difference": False, "power_transform": False, "standardize": False,
        "out": ".",
    },
    "experiment": {
        "seed": 0, "family": "unknown-sensor", "method": "mb-sm",
        "graph": "complete", "mi": 0.2, "d": 25, "n": 1000, "boot_b": 500,
        "alpha": 0.05, "budget_k": 1, "n_attacked": 1, "replications": 100,
        "attack_rate": 0.5, "m_per_side": 30, "n_samp": 1000, "knn_k": None,
        "density": "gaussian", "window": 400, "step": 50, "stream_len": 10000,
        "onset_frac": 0.8, "n_streams": 20, "data": None, "bootstrap": "pooled",
        "shuffle": False, "difference": False, "power_transform": False,
        "standardize": False, "timings": False, "out": ".",
    },
    "calibrate": {
        "seed": 0, "graph": "complete", "mi": 0.2, "d": 25, "center": 12,
        "edge_prob": 0.1, "tol": 1e-4, "out": ".",
    },
}


class _ArgumentParser(argparse.ArgumentParser):
    # route argparse failures through the usual exit-code machinery
    def error(self, message):
        raise ConfigError(message)


def _flag(sub, name, **kw):
    # default=None so explicitly-set flags are distinguishable when merging
    sub.add_argument(name, default=None, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="featshift",
        description="Feature-level distribution shift detection and localization.",
        epilog="Exit codes: 0 success, 1 usage/config error, 2 data error, "
               "3 internal error. FEATSHIFT_THREADS caps worker processes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a calibrated attack scenario dataset")
    _flag(p, "--config")
    _flag(p, "--seed", type=int)
    _flag(p, "--graph", choices=_GRAPHS)
    _flag(p, "--d", type=int)
    _flag(p, "--mi", type=float)
    _flag(p, "--n", type=int)
    _flag(p, "--attacked", help="comma-separated attacked feature indices")
    _flag(p, "--edge-prob", type=float, dest="edge_prob")
    _flag(p, "--stream-len", type=int, dest="stream_len",
          help="emit one time series of this length instead of two samples")
    _flag(p, "--onset", type=int, help="attack onset row for --stream-len")
    _flag(p, "--out")

    p = sub.add_parser("detect", help="two-stage test of a query CSV against a reference CSV")
    _flag(p, "--config")
    _flag(p, "--seed", type=int)
    _flag(p, "--reference")
    _flag(p, "--query")
    _flag(p, "--method", choices=_METHODS)
    _flag(p, "--bootstrap", choices=["pooled", "time"])
    _flag(p, "--boot-b", type=int, dest="boot_b")
    _flag(p, "--alpha", type=float)
    _flag(p, "--budget-k", type=int, dest="budget_k")
    _flag(p, "--m-per-side", type=int, dest="m_per_side")
    _flag(p, "--n-samp", type=int, dest="n_samp")
    _flag(p, "--knn-k", type=int, dest="knn_k")
    _flag(p, "--density", choices=["gaussian", "flow"])
    _flag(p, "--out")

    p = sub.add_parser("stream", help="sliding-window detection over a series CSV")
    _flag(p, "--config")
    _flag(p, "--seed", type=int)
    _flag(p, "--series")
    _flag(p, "--clean-len", type=int, dest="clean_len")
    _flag(p, "--truth", help="truth.json sidecar (supplies the attack onset)")
    _flag(p, "--onset", type=int)
    _flag(p, "--window", type=int)
    _flag(p, "--step", type=int)
    _flag(p, "--budget-k", type=int, dest="budget_k")
    _flag(p, "--alpha", type=float)
    _flag(p, "--boot-b", type=int, dest="boot_b")
    _flag(p, "--bootstrap", choices=["pooled", "time"])
    _flag(p, "--method", choices=_METHODS)
    _flag(p, "--m-per-side", type=int, dest="m_per_side")
    _flag(p, "--n-samp", type=int, dest="n_samp")
    _flag(p, "--knn-k", type=int, dest="knn_k")
    _flag(p, "--density", choices=["gaussian", "flow"])
    p.add_argument("--difference", action="store_const", const=True, default=None)
    p.add_argument("--power-transform", action="store_const", const=True,
                   default=None, dest="power_transform")
    p.add_argument("--standardize", action="store_const", const=True, default=None)
    _flag(p, "--out")

    p = sub.add_parser("experiment", help="run a replication experiment grid")
    _flag(p, "--config")
    _flag(p, "--seed", type=int)
    _flag(p, "--family", choices=_FAMILIES)
    _flag(p, "--method", choices=_METHODS)
    _flag(p, "--graph", help="graph kind or comma-separated list")
    _flag(p, "--mi", help="MI target or comma-separated list")
    _flag(p, "--d", type=int)
    _flag(p, "--n", type=int)
    _flag(p, "--boot-b", type=int, dest="boot_b")
    _flag(p, "--alpha", type=float)
    _flag(p, "--budget-k", type=int, dest="budget_k")
    _flag(p, "--n-attacked", type=int, dest="n_attacked")
    _flag(p, "--replications", type=int)
    _flag(p, "--attack-rate", type=float, dest="attack_rate")
    _flag(p, "--m-per-side", type=int, dest="m_per_side")
    _flag(p, "--n-samp", type=int, dest="n_samp")
    _flag(p, "--knn-k", type=int, dest="knn_k")
    _flag(p, "--density", choices=["gaussian", "flow"])
    _flag(p, "--window", type=int)
    _flag(p, "--step", type=int)
    _flag(p, "--stream-len", type=int, dest="stream_len")
    _flag(p, "--onset-frac", type=float, dest="onset_frac")
    _flag(p, "--n-streams", type=int, dest="n_streams")
    _flag(p, "--data", help="input CSV for the realdata family")
    _flag(p, "--bootstrap", choices=["pooled", "time"])
    p.add_argument("--shuffle", action="store_const", const=True, default=None)
    p.add_argument("--difference", action="store_const", const=True, default=None)
    p.add_argument("--power-transform", action="store_const", const=True,
                   default=None, dest="power_transform")
    p.add_argument("--standardize", action="store_const", const=True, default=None)
    p.add_argument("--timings", action="store_const", const=True, default=None,
                   help="also write timings.json (not byte-stable across runs)")
    _flag(p, "--out")

    p = sub.add_parser("calibrate", help="solve edge weights for MI targets")
    _flag(p, "--config")
    _flag(p, "--seed", type=int)
    _flag(p, "--graph", help="graph kind or comma-separated list")
    _flag(p, "--mi", help="MI target or comma-separated list")
    _flag(p, "--d", type=int)
    _flag(p, "--center", type=int)
    _flag(p, "--edge-prob", type=float, dest="edge_prob")
    _flag(p, "--tol", type=float)
    _flag(p, "--out")

    return parser


def _resolve(command: str, ns: argparse.Namespace) -> dict:
    defaults = _SPECS[command]
    merged = dict(defaults)
    path = getattr(ns, "config", None)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        unknown = sorted(set(loaded) - set(defaults) - {"command"})
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if loaded.get("command", command) != command:
            raise ConfigError(
                f"config {path} is for command {loaded['command']!r}, not {command!r}"
            )
        merged.update({k: v for k, v in loaded.items() if k != "command"})
    for key, value in vars(ns).items():
        if key in ("command", "config") or value is None:
            continue
        merged[key] = value
    merged["command"] = command
    return merged


def _emit_config(resolved: dict) -> None:
    out = resolved["out"]
    os.makedirs(out, exist_ok=True)
    text = json.dumps(resolved, indent=2, sort_keys=True, default=str)
    print(text)
    atomic_write_text(os.path.join(out, "resolved_config.json"), text + "\n")


def _as_tuple(value, cast):
    """Scalar, list, or comma-separated string -> tuple of cast values."""
    if isinstance(value, str):
        parts = [p.strip() for p in value.split(",")]
        return tuple(cast(p) for p in parts if p)
    if isinstance(value, (list, tuple)):
        return tuple(cast(v) for v in value)
    return (cast(value),)


def _require(cfg: dict, key: str, flag: str):
    if cfg.get(key) is None:
        raise ConfigError(f"{cfg['command']} requires {flag}")
    return cfg[key]


def _estimator_config(cfg: dict) -> EstimatorConfig:
    return EstimatorConfig(
        method=Method(cfg["method"]),
        m_per_side=int(cfg["m_per_side"]),
        n_samp=int(cfg["n_samp"]),
        knn_k=None if cfg["knn_k"] is None else int(cfg["knn_k"]),
        density=cfg["density"],
    )


def _attacked_set(cfg: dict) -> tuple[int, ...]:
    d = int(cfg["d"])
    if cfg["attacked"] is None:
        return (12,) if d > 12 else (0,)
    attacked = _as_tuple(cfg["attacked"], int)
    if not attacked:
        raise ConfigError("--attacked must name at least one feature")
    bad = [a for a in attacked if a < 0 or a >= d]
    if bad:
        raise ConfigError(f"attacked indices {bad} outside 0..{d - 1}")
    return attacked


# ---------------------------------------------------------------------------
# Commands


def _cmd_simulate(cfg: dict) -> None:
    out = cfg["out"]
    d = int(cfg["d"])
    attacked = _attacked_set(cfg)
    scenario = make_scenario(
        cfg["graph"], d=d, mi_target=float(cfg["mi"]), attacked=attacked,
        center=attacked[0], edge_prob=float(cfg["edge_prob"]), seed=int(cfg["seed"]),
    )
    atomic_write_text(os.path.join(out, "scenario.json"), scenario_to_json(scenario) + "\n")
    header = [f"x{j}" for j in range(d)]
    spec = scenario.copula()
    if cfg["stream_len"] is None:
        n = int(cfg["n"])
        X = sample_copula(spec, n, spawn_rng(cfg["seed"], "simulate-clean"))
        Y = sample_copula(spec, n, spawn_rng(cfg["seed"], "simulate-query"))
        Y, plan = marginal_attack(Y, scenario.attacked, spawn_rng(cfg["seed"], "simulate-attack"))
        write_csv_matrix(os.path.join(out, "clean.csv"), header, X)
        write_csv_matrix(os.path.join(out, "attacked.csv"), header, Y)
        truth = {"attacked": list(plan.attacked), "onset": None, "rows": n, "columns": header}
    else:
        T = int(cfg["stream_len"])
        onset = int(cfg["onset"]) if cfg["onset"] is not None else int(0.8 * T)
        if not 0 < onset < T:
            raise ConfigError(f"onset {onset} outside 1..{T - 1}")
        rng = spawn_rng(cfg["seed"], "simulate-stream")
        body = sample_copula(spec, T, rng)
        tail, plan = marginal_attack(body[onset:], scenario.attacked, rng)
        write_csv_matrix(os.path.join(out, "stream.csv"), header, np.vstack([body[:onset], tail]))
        truth = {"attacked": list(plan.attacked), "onset": onset, "rows": T, "columns": header}
    write_json(os.path.join(out, "truth.json"), truth)


def _cmd_detect(cfg: dict) -> None:
    out = cfg["out"]
    ref_header, X = read_csv_matrix(_require(cfg, "reference", "--reference"))
    query_header, Y = read_csv_matrix(_require(cfg, "query", "--query"))
    if ref_header != query_header:
        raise InvalidDataError(
            f"reference columns {ref_header} do not match query columns {query_header}"
        )
    report = two_stage_test(
        X, Y, _estimator_config(cfg),
        B=int(cfg["boot_b"]), alpha=float(cfg["alpha"]), k=int(cfg["budget_k"]),
        null_source=cfg["bootstrap"], rng=spawn_rng(cfg["seed"], "detect"),
        clean=X if cfg["bootstrap"] == "time" else None,
    )
    payload = {
        "detected": report.detected,
        "localized": list(report.localized),
        "localized_columns": [ref_header[j] for j in report.localized],
        "stats": report.stats.values,
        "thresholds": report.thresholds.per_feature,
        "alpha": report.thresholds.alpha,
        "corrected": report.thresholds.corrected,
        "method": cfg["method"],
        "n_reference": int(X.shape[0]),
        "n_query": int(Y.shape[0]),
        "columns": ref_header,
    }
    write_json(os.path.join(out, "report.json"), payload)
    plot_feature_stats(
        report.stats.values, report.thresholds.per_feature,
        os.path.join(out, "feature_stats.png"),
        localized=report.localized, title=f"{cfg['method']} per-feature statistics",
    )


def _cmd_stream(cfg: dict) -> None:
    out = cfg["out"]
    header, series = read_csv_matrix(_require(cfg, "series", "--series"))
    clean_len = int(_require(cfg, "clean_len", "--clean-len"))
    onset = cfg["onset"]
    if cfg["truth"] is not None:
        try:
            with open(cfg["truth"], encoding="utf-8") as fh:
                onset = json.load(fh).get("onset", onset)
        except OSError as exc:
            raise InvalidDataError(f"cannot read truth sidecar {cfg['truth']}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidDataError(f"truth sidecar {cfg['truth']} is not valid JSON") from exc
    scfg = StreamConfig(
        window=int(cfg["window"]), step=int(cfg["step"]), budget_k=int(cfg["budget_k"]),
        alpha=float(cfg["alpha"]), B=int(cfg["boot_b"]), null_kind=cfg["bootstrap"],
        estimator=_estimator_config(cfg), difference=bool(cfg["difference"]),
        power_transform=bool(cfg["power_transform"]), standardize=bool(cfg["standardize"]),
    )
    report = run_stream(
        series, clean_len, scfg,
        truth=None if onset is None else int(onset),
        rng=spawn_rng(cfg["seed"], "stream"),
    )
    rows = []
    for r in report.reports:
        thr = np.asarray(r.thresholds.per_feature, dtype=float)
        ratio = float(np.max(np.asarray(r.stats.values) / np.maximum(thr, 1e-300)))
        rows.append({
            "step": r.window_step,
            "detected": r.detected,
            "localized": list(r.localized),
            "max_ratio": ratio,
            "stats": [float(v) for v in r.stats.values],
            "thresholds": [float(v) for v in thr],
        })
    write_jsonl(os.path.join(out, "steps.jsonl"), rows)
    summary = {
        "n_steps": report.n_steps,
        "detected_steps": list(report.detected_steps),
        "detected": bool(report.detected_steps),
        "t_comp": report.t_comp,
        "t_det": report.t_det,
        "delay": report.delay,
        "pre_onset_alarm": report.pre_onset_alarm,
        "window": int(cfg["window"]),
        "step": int(cfg["step"]),
        "alpha": float(cfg["alpha"]),
        "budget_k": int(cfg["budget_k"]),
        "columns": header,
    }
    write_json(os.path.join(out, "summary.json"), summary)
    plot_stream(rows, os.path.join(out, "stream.png"), t_comp=report.t_comp,
                title="sliding-window detection")


def _strip_timing(tree):
    """Timing fields vary across runs; the deterministic outputs drop them."""
    if isinstance(tree, dict):
        return {k: _strip_timing(v) for k, v in tree.items() if "seconds" not in k}
    if isinstance(tree, (list, tuple)):
        return [_strip_timing(v) for v in tree]
    return tree


def _cmd_experiment(cfg: dict) -> None:
    out = cfg["out"]
    graphs = _as_tuple(cfg["graph"], str)
    mis = _as_tuple(cfg["mi"], float)
    if not graphs or not mis:
        raise ConfigError("experiment grid is empty")
    family = cfg["family"]
    data = None
    if family == "realdata":
        _, data = read_csv_matrix(_require(cfg, "data", "--data"))
    runners = {
        "fixed-sensor": run_fixed_sensor_experiment,
        "unknown-sensor": run_unknown_sensor_experiment,
        "multi-sensor": run_multi_sensor_experiment,
        "stream": run_stream_experiment,
        "realdata": None,
    }
    rows, details, timings = [], [], []
    for graph in graphs:
        for mi in mis:
            ecfg = ExperimentConfig(
                family=family, method=cfg["method"], graph=graph, d=int(cfg["d"]),
                mi=mi, n=int(cfg["n"]), B=int(cfg["boot_b"]), alpha=float(cfg["alpha"]),
                budget_k=int(cfg["budget_k"]), n_attacked=int(cfg["n_attacked"]),
                replications=int(cfg["replications"]), attack_rate=float(cfg["attack_rate"]),
                seed=int(cfg["seed"]), m_per_side=int(cfg["m_per_side"]),
                n_samp=int(cfg["n_samp"]),
                knn_k=None if cfg["knn_k"] is None else int(cfg["knn_k"]),
                density=cfg["density"], window=int(cfg["window"]), step=int(cfg["step"]),
                stream_len=int(cfg["stream_len"]), onset_frac=float(cfg["onset_frac"]),
                n_streams=int(cfg["n_streams"]), null_kind=cfg["bootstrap"],
                shuffle=bool(cfg["shuffle"]), difference=bool(cfg["difference"]),
                power_transform=bool(cfg["power_transform"]),
                standardize=bool(cfg["standardize"]),
            )
            if family == "realdata":
                rep = run_realdata_experiment(data, ecfg)
            else:
                rep = runners[family](ecfg)
            rows.append(rep.summary_row())
            detail = asdict(rep)
            timings.append({
                "graph": graph, "mi": mi,
                "mean_test_seconds": rep.mean_test_seconds,
                "extras": {k: v for k, v in rep.extras.items() if "seconds" in k},
            })
            details.append(_strip_timing(detail))
    write_csv_rows(os.path.join(out, "report.csv"), list(rows[0]), rows)
    write_jsonl(os.path.join(out, "detail.jsonl"), details)
    plot_experiment_cells(rows, os.path.join(out, "experiment.png"),
                          title=f"{family} ({cfg['method']})")
    if cfg["timings"]:
        write_json(os.path.join(out, "timings.json"), timings)


def _cmd_calibrate(cfg: dict) -> None:
    out = cfg["out"]
    graphs = _as_tuple(cfg["graph"], str)
    mis = _as_tuple(cfg["mi"], float)
    if not graphs or not mis:
        raise ConfigError("calibration grid is empty")
    cells = []
    for graph in graphs:
        for mi in mis:
            scenario = make_scenario(
                graph, d=int(cfg["d"]), mi_target=mi, attacked=(int(cfg["center"]),),
                center=int(cfg["center"]), edge_prob=float(cfg["edge_prob"]),
                seed=int(cfg["seed"]), tol=float(cfg["tol"]),
            )
            achieved = gaussian_mi(scenario.copula().correlation, [scenario.center])
            cells.append({
                "graph": graph, "d": int(cfg["d"]), "mi_target": mi,
                "edge_weight": scenario.edge_weight, "achieved_mi": achieved,
                "center": scenario.center, "seed": int(cfg["seed"]),
            })
    write_json(os.path.join(out, "calibration.json"), cells)


_COMMANDS = {
    "simulate": _cmd_simulate,
    "detect": _cmd_detect,
    "stream": _cmd_stream,
    "experiment": _cmd_experiment,
    "calibrate": _cmd_calibrate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        resolved = _resolve(ns.command, ns)
        _emit_config(resolved)
        _COMMANDS[ns.command](resolved)
    except SystemExit as exc:  # argparse --help
        return 0 if exc.code in (0, None) else 1
    except (InvalidDataError, InsufficientDataError, ShapeError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, InvalidArgumentError, UnreachableTargetError,
            WeightTooLargeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
