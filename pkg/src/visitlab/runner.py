"""Experiment orchestration: predict, simulate across workers, compare.

A run is a pure function of (config, seed): trajectories are generated from a
counter-based seed schedule in fixed blocks, worker results are merged in
block order, and every stochastic post-processing step (bootstrap bands)
draws from its own derived seed.  Report bodies are therefore byte-identical
across worker counts; only the ``meta`` block (timestamps, wall clock) may
differ.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from fractions import Fraction

import numpy as np

from . import __version__
from .compound import DiscretePMF, pmf_to_csv, tv_distance
from .config import ExperimentConfig
from .errors import (
    ConfigError,
    InsufficientDataError,
    ResourceLimitError,
    SpecError,
    UnsupportedPairError,
)
from .predictions import (
    PredictionResult,
    SteinBracketInputs,
    predict_furstenberg,
    predict_house_of_cards,
    predict_periodic_cylinder,
    predict_poisson,
    predict_regenerative,
    predict_regenerative_entries,
    predict_sync_markov,
    stein_bracket,
    word_overlap_period,
)
from .stats import (
    ClusterStats,
    WSampleSet,
    collect_cluster_stats,
    collect_w,
    empirical_pmf,
    estimate_alpha,
    estimate_alpha_hat,
    estimate_lambda_tilde,
    kac_horizon,
)
from .systems import (
    DoeblinChainSpec,
    FactorProductSpec,
    FiniteMarkovSpec,
    HouseOfCardsSpec,
    IntervalMapSpec,
    ProductChainSpec,
    RegenerativeSpec,
    interval_itinerary,
    sample_paths,
    sync_kernel,
    trajectory_rng,
)
from .targets import (
    CylinderTarget,
    GeoDiagonalTarget,
    HalfLineTarget,
    RunLengthTarget,
    SignCylinderTarget,
    SyncCylinderTarget,
    hits,
    measure,
    outer_measures,
)

_BLOCK = 4096
_STEP_GUARD = 10_000_000_000  # total simulated steps per sweep value
_CHUNK_ELEMS = 1 << 22

# derived-seed streams, disjoint from the trajectory index range
_STREAM_ALPHA = 2**49
_STREAM_TV = 2**50

_SUPPORTED_PAIRS = (
    "house-of-cards + run-length",
    "regenerative + half-line",
    "markov + cylinder",
    "product-chain + sync-cylinder",
    "doeblin + geo-diagonal",
    "sign-product + sign-cylinder",
)


def predict_for(system, target, t: float) -> PredictionResult:
    """Closed-form visit-law prediction for a (system, target) pair."""
    if isinstance(system, HouseOfCardsSpec) and isinstance(target, RunLengthTarget):
        if system.kind == "alternating":
            raise UnsupportedPairError(
                "alternating reset probabilities have no limiting visit law "
                "(the run-measure ratios oscillate); simulate instead"
            )
        # constant: (r,); drifting: (r_limit, c) — the limit drives the law
        return predict_house_of_cards(system.params[0], t)
    if isinstance(system, RegenerativeSpec) and isinstance(target, HalfLineTarget):
        if system.length_model == "shared":
            return predict_regenerative(system.shared_q, t)
        return predict_regenerative_entries(system, target.n, t)
    if isinstance(system, FiniteMarkovSpec) and isinstance(target, CylinderTarget):
        m = word_overlap_period(target.word)
        if m < len(target.word):
            return predict_periodic_cylinder(system, target.word[:m], t)
        return predict_poisson(t, "non-self-overlapping word: isolated visits")
    if isinstance(system, ProductChainSpec) and isinstance(target, SyncCylinderTarget):
        return predict_sync_markov(sync_kernel(system), t)
    if isinstance(system, DoeblinChainSpec) and isinstance(target, GeoDiagonalTarget):
        return predict_poisson(t, "uniformly contracting pair: isolated visits")
    if isinstance(system, FactorProductSpec) and isinstance(target, SignCylinderTarget):
        m = word_overlap_period(target.word)
        if m < len(target.word):
            return predict_furstenberg(system.plus_prob, target.word[:m], t)
        return predict_poisson(t, "non-self-overlapping sign word: isolated visits")
    raise UnsupportedPairError(
        f"no prediction rule for {type(system).__name__} + {type(target).__name__}; "
        f"supported pairs: {', '.join(_SUPPORTED_PAIRS)}"
    )


def _observable(system, target, paths):
    """Convert raw paths to whatever the target's indicators consume."""
    if isinstance(system, IntervalMapSpec) and isinstance(target, CylinderTarget):
        return interval_itinerary(system, paths)
    return paths


def _simulate_block(args):
    (system, target, seed, start, count, path_len, ext_horizon, horizon,
     window_f, window_k, cap) = args
    rows_per = max(1, _CHUNK_ELEMS // max(path_len, 1))
    w_parts = []
    stats_acc = None
    for off in range(0, count, rows_per):
        take = min(rows_per, count - off)
        rngs = [trajectory_rng(seed, start + off + i) for i in range(take)]
        paths = sample_paths(system, path_len, rngs)
        ind = hits(_observable(system, target, paths), target, ext_horizon)
        w_parts.append(collect_w(ind, horizon, start_index=start + off))
        if window_f is not None:
            st = collect_cluster_stats(
                ind, window_f, window_k, cap=cap, start_index=start + off
            )
            stats_acc = st if stats_acc is None else stats_acc.merge(st)
    w_all = w_parts[0]
    for part in w_parts[1:]:
        w_all = w_all.merge(part)
    return start, w_all, stats_acc


def _run_simulation(cfg: ExperimentConfig, system, target, horizon: int):
    window_f = cfg.window_forward
    window_k = cfg.window_two_sided if cfg.window_two_sided is not None else window_f
    if window_f is None and cfg.window_two_sided is not None:
        window_f = cfg.window_two_sided
    pad = max(window_f or 0, window_k or 0)
    ext_horizon = horizon + pad
    path_len = ext_horizon + target.window
    if path_len * cfg.samples > _STEP_GUARD:
        raise ResourceLimitError(
            f"run needs {path_len * cfg.samples:.2e} simulated steps "
            f"(> {_STEP_GUARD:.0e}); shrink samples or the target"
        )
    blocks = [
        (system, target, cfg.seed, start, min(_BLOCK, cfg.samples - start),
         path_len, ext_horizon, horizon, window_f, window_k, cfg.cluster_cap)
        for start in range(0, cfg.samples, _BLOCK)
    ]
    if cfg.workers == 1 or len(blocks) == 1:
        results = [_simulate_block(b) for b in blocks]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_simulate_block, blocks, chunksize=1))
    results.sort(key=lambda r: r[0])
    w_all = results[0][1]
    stats_all = results[0][2]
    for _, w_part, st_part in results[1:]:
        w_all = w_all.merge(w_part)
        if st_part is not None:
            stats_all = st_part if stats_all is None else stats_all.merge(st_part)
    return w_all, stats_all, path_len


def _derived_seed(root_seed: int, stream: int, index: int) -> int:
    return int(np.random.SeedSequence((root_seed, stream, index)).generate_state(1)[0])


def _pmf_for_tv(pred: PredictionResult, w_max: int) -> DiscretePMF:
    """Predicted table long enough that the untabulated tail is negligible."""
    kmax = max(int(w_max), 16)
    pmf = pred.pmf(kmax)
    while pmf.tail_mass > 1e-9 and kmax < 65_536:
        kmax *= 2
        pmf = pred.pmf(kmax)
    return pmf


def _tv_with_band(w_all: WSampleSet, pred: PredictionResult, seed: int, index: int):
    values = w_all.values
    w_max = int(values.max()) if values.size else 0
    pred_pmf = _pmf_for_tv(pred, w_max)
    emp = empirical_pmf(w_all)
    point = tv_distance(emp, pred_pmf)
    rng = np.random.default_rng(
        np.random.SeedSequence((seed, _STREAM_TV, index))
    )
    m = values.size
    counts = np.bincount(values, minlength=pred_pmf.kmax + 1).astype(np.float64)
    draws = rng.multinomial(m, counts / m, size=200)
    tvs = 0.5 * np.abs(draws / m - pred_pmf.probs[None, : draws.shape[1]]).sum(axis=1)
    tvs += 0.5 * pred_pmf.tail_mass
    lo, hi = np.percentile(tvs, [2.5, 97.5])
    return {
        "value": float(point),
        "bootstrap_se": float(tvs.std()),
        "band": [float(lo), float(hi)],
    }, emp, pred_pmf


def _estimate_tables(stats_all: ClusterStats, seed: int, index: int) -> dict:
    tables = {}
    jobs = (
        ("alpha", estimate_alpha),
        ("alpha_hat", estimate_alpha_hat),
        ("lambda_tilde", estimate_lambda_tilde),
    )
    for name, fn in jobs:
        try:
            est = fn(stats_all, seed=_derived_seed(seed, _STREAM_ALPHA, index))
            tables[name] = est.as_dict()
        except InsufficientDataError as exc:
            tables[name] = {"insufficient_data": True, "count": exc.count}
    return tables


def _stein_for(cfg: ExperimentConfig, system, target, n, mu_value: float):
    sec = cfg.stein
    k_w = sec.window_for(int(n))
    try:
        outer = outer_measures(target, system, list(range(0, int(n) + 1)))
        inputs = SteinBracketInputs(
            profile=sec.profile,
            mu=mu_value,
            outer=tuple(outer),
            n=int(n),
            k_window=k_w,
            t=cfg.t,
        )
        out = stein_bracket(inputs, sec.mode)
        out["k_window"] = k_w
        return out
    except SpecError as exc:
        return {"error": str(exc), "k_window": k_w}


def _jsonable(node):
    if isinstance(node, dict):
        return {k: _jsonable(v) for k, v in node.items()}
    if isinstance(node, (list, tuple)):
        return [_jsonable(v) for v in node]
    if isinstance(node, (np.floating, np.integer, np.bool_)):
        return node.item()
    if isinstance(node, np.ndarray):
        return [_jsonable(v) for v in node]
    if isinstance(node, Fraction):
        return str(node)
    return node


def run_experiment(cfg: ExperimentConfig, mode: str) -> dict:
    """Execute one verb over the config's sweep list and assemble the report."""
    if mode not in ("predict", "simulate", "compare", "sweep"):
        raise ConfigError(f"unknown run mode {mode!r}")
    started = time.perf_counter()
    system = cfg.build_system()
    results = []
    for index, sweep_value in enumerate(cfg.sweep):
        target = cfg.build_target(sweep_value)
        entry = {"sweep_value": sweep_value}
        mu = measure(target, system, samples=min(cfg.samples, 200_000), seed=cfg.seed)
        entry["measure"] = {"value": mu.value, "se": mu.se, "method": mu.method}
        horizon = kac_horizon(cfg.t, mu.value)
        entry["horizon"] = horizon
        if cfg.window_two_sided is not None and cfg.window_two_sided >= cfg.t / mu.value:
            raise ConfigError(
                f"window_two_sided={cfg.window_two_sided} must stay below "
                f"t/mu = {cfg.t / mu.value:.1f} at sweep value {sweep_value}"
            )
        pred = None
        if mode in ("predict", "compare", "sweep"):
            pred = predict_for(system, target, cfg.t)
            entry["prediction"] = pred.as_dict()
        if mode in ("simulate", "compare", "sweep"):
            w_all, stats_all, path_len = _run_simulation(cfg, system, target, horizon)
            entry["simulated_steps"] = path_len * cfg.samples
            emp = empirical_pmf(w_all)
            entry["empirical"] = {
                "samples": w_all.total,
                "w_mean": float(w_all.values.mean()),
                "pmf": [float(p) for p in emp.probs],
            }
            if stats_all is not None:
                entry["tables"] = _estimate_tables(stats_all, cfg.seed, index)
            if pred is not None:
                tv, emp, pred_pmf = _tv_with_band(w_all, pred, cfg.seed, index)
                tv["tolerance"] = cfg.tolerance
                tv["pass"] = bool(tv["value"] <= cfg.tolerance)
                entry["tv"] = tv
                entry["_pmfs"] = (emp, pred_pmf)
            else:
                entry["_pmfs"] = (emp, None)
        elif pred is not None:
            entry["_pmfs"] = (None, _pmf_for_tv(pred, 0))
        if cfg.stein is not None and cfg.target_kind != "geo-diagonal":
            entry["stein"] = _stein_for(cfg, system, target, sweep_value, mu.value)
        results.append(entry)
    report = {
        "schema": 1,
        "library": {"name": "visitlab", "version": __version__},
        "mode": mode,
        "config_hash": cfg.canonical_hash(),
        "config": cfg.normalized,
        "results": results,
        "meta": {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "wall_clock_s": time.perf_counter() - started,
            "workers": cfg.workers,
        },
    }
    return report


def report_body(report: dict) -> str:
    """Canonical JSON of everything except the volatile meta block.

    Underscore-prefixed entry keys hold in-memory artifacts (PMF objects for
    the CSV writers) and are not part of the report contract.
    """
    body = {k: v for k, v in report.items() if k != "meta"}
    if "results" in body:
        body = dict(body)
        body["results"] = [
            {k: v for k, v in entry.items() if not k.startswith("_")}
            for entry in body["results"]
        ]
    return json.dumps(_jsonable(body), sort_keys=True)


def _sweep_token(value) -> str:
    return str(value).replace(".", "p")


def write_report(report: dict, out_dir: str, mode: str) -> list:
    """Write the JSON report plus per-sweep CSV tables; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    results = report["results"]
    for entry in results:
        token = _sweep_token(entry["sweep_value"])
        pmfs = entry.pop("_pmfs", None)
        if pmfs is not None:
            emp, pred_pmf = pmfs
            if pred_pmf is not None:
                path = os.path.join(out_dir, f"predicted_pmf_{token}.csv")
                pmf_to_csv(pred_pmf, path)
                written.append(path)
            if emp is not None:
                path = os.path.join(out_dir, f"empirical_pmf_{token}.csv")
                pmf_to_csv(emp, path)
                written.append(path)
    path = os.path.join(out_dir, f"{mode}_report.json")
    with open(path, "w") as fh:
        json.dump(_jsonable(report), fh, sort_keys=True, indent=1)
        fh.write("\n")
    written.append(path)
    if mode == "sweep":
        path = os.path.join(out_dir, "sweep_summary.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sweep_value", "mu", "tv", "tolerance", "pass", "bracket"])
            for entry in results:
                tv = entry.get("tv", {})
                writer.writerow([
                    entry["sweep_value"],
                    repr(entry["measure"]["value"]),
                    repr(tv.get("value", "")) if tv else "",
                    tv.get("tolerance", ""),
                    tv.get("pass", ""),
                    repr(entry["stein"]["value"]) if "stein" in entry and "value" in entry["stein"] else "",
                ])
        written.append(path)
    return written


def exit_code_for(report: dict) -> int:
    """0 when every configured comparison passed, 2 otherwise."""
    for entry in report["results"]:
        tv = entry.get("tv")
        if tv is not None and not tv["pass"]:
            return 2
    return 0


def cmd_predict(cfg: ExperimentConfig) -> dict:
    return run_experiment(cfg, "predict")


def cmd_simulate(cfg: ExperimentConfig) -> dict:
    return run_experiment(cfg, "simulate")


def cmd_compare(cfg: ExperimentConfig) -> dict:
    return run_experiment(cfg, "compare")


def cmd_sweep(cfg: ExperimentConfig) -> dict:
    return run_experiment(cfg, "sweep")


def cmd_bound(cfg: ExperimentConfig) -> dict:
    """Bracket table over the stein sweep; needs a declared mixing profile."""
    if cfg.stein is None:
        raise ConfigError("bound runs need a stein section with a mixing profile")
    started = time.perf_counter()
    system = cfg.build_system()
    rows = []
    for n in cfg.stein.sweep:
        target = cfg.build_target(n)
        mu = measure(target, system, samples=min(cfg.samples, 200_000), seed=cfg.seed)
        out = _stein_for(cfg, system, target, n, mu.value)
        if "error" in out:
            raise SpecError(f"bracket at n={n}: {out['error']}")
        rows.append({
            "n": int(n),
            "mu": mu.value,
            "argmin_delta": out["argmin_delta"],
            "value": out["value"],
            "k_window": out["k_window"],
        })
    values = [r["value"] for r in rows]
    report = {
        "schema": 1,
        "library": {"name": "visitlab", "version": __version__},
        "mode": "bound",
        "config_hash": cfg.canonical_hash(),
        "config": cfg.normalized,
        "results": rows,
        "monotone_decreasing": bool(
            all(b < a for a, b in zip(values, values[1:]))
        ),
        "meta": {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "wall_clock_s": time.perf_counter() - started,
            "workers": cfg.workers,
        },
    }
    return report


def write_bound_report(report: dict, out_dir: str) -> list:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    path = os.path.join(out_dir, "bound_table.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "argmin_delta", "bracket_value"])
        for row in report["results"]:
            writer.writerow([row["n"], row["argmin_delta"], repr(row["value"])])
    written.append(path)
    path = os.path.join(out_dir, "bound_report.json")
    with open(path, "w") as fh:
        json.dump(_jsonable(report), fh, sort_keys=True, indent=1)
        fh.write("\n")
    written.append(path)
    return written
