import copy
import json
from pathlib import Path

import numpy as np
import pytest

from visitlab import (
    ConfigError,
    ConvergenceError,
    CylinderTarget,
    DoeblinChainSpec,
    FactorProductSpec,
    FiniteMarkovSpec,
    GeoDiagonalTarget,
    HalfLineTarget,
    HouseOfCardsSpec,
    ProductChainSpec,
    RegenerativeSpec,
    ResourceLimitError,
    RunLengthTarget,
    SignCylinderTarget,
    SyncCylinderTarget,
    UnsupportedPairError,
    cmd_bound,
    config_from_mapping,
    exit_code_for,
    predict_for,
    report_body,
    run_experiment,
    write_bound_report,
    write_report,
)

MATRIX = [[0.4, 0.6], [0.2, 0.8]]

HOC_DOC = {
    "experiment": {
        "t": 2.0,
        "samples": 6000,
        "seed": 11,
        "tolerance": 0.05,
        "window_forward": 8,
        "window_two_sided": 8,
    },
    "system": {"kind": "house-of-cards", "reset": 0.5},
    "target": {"kind": "run-length", "level": 1, "sweep": [6]},
}


def _cfg(doc=None, **overrides):
    return config_from_mapping(copy.deepcopy(doc or HOC_DOC), overrides or None)


def test_predict_for_dispatch():
    t = 2.0
    hoc = predict_for(HouseOfCardsSpec.constant(0.5), RunLengthTarget(6), t)
    assert hoc.family == "polya-aeppli" and hoc.params["p"] == pytest.approx(0.5)
    drift = predict_for(HouseOfCardsSpec.drifting(0.4, 1.0), RunLengthTarget(6), t)
    assert drift.params["p"] == pytest.approx(0.6)

    q = np.array([0.5, 0.5])
    reg = RegenerativeSpec.with_shared_lengths([0, 1], [0.5, 0.5], q)
    shared = predict_for(reg, HalfLineTarget(1), t)
    assert shared.family == "compound-poisson"
    smith = predict_for(RegenerativeSpec.smith([2, 3], [0.5, 0.5]), HalfLineTarget(2), t)
    assert "alpha_hats" in smith.extras

    chain = FiniteMarkovSpec(np.array(MATRIX))
    per = predict_for(chain, CylinderTarget((0, 1, 0)), t)
    assert per.family == "polya-aeppli" and per.params["p"] == pytest.approx(0.12)
    aper = predict_for(chain, CylinderTarget((0, 1)), t)
    assert aper.family == "poisson"

    pair = ProductChainSpec(
        (
            FiniteMarkovSpec(np.array([[0.2, 0.8], [0.3, 0.7]])),
            FiniteMarkovSpec(np.array([[0.8, 0.2], [0.1, 0.9]])),
        ),
        "independent",
    )
    sync = predict_for(pair, SyncCylinderTarget(4), t)
    assert sync.params["p"] == pytest.approx(0.64, abs=1e-11)

    assert predict_for(DoeblinChainSpec(0.5), GeoDiagonalTarget(0.01), t).family == "poisson"

    signs = predict_for(FactorProductSpec(0.3), SignCylinderTarget((1,) * 8), t)
    assert signs.params["p"] == pytest.approx(0.7, abs=1e-9)


def test_predict_for_unsupported_pairs():
    with pytest.raises(UnsupportedPairError):
        predict_for(FiniteMarkovSpec(np.array(MATRIX)), HalfLineTarget(1), 2.0)
    with pytest.raises(UnsupportedPairError):
        predict_for(
            HouseOfCardsSpec.alternating(0.3, 0.6), RunLengthTarget(5), 2.0
        )
    # a sign word whose primitive cycle has no aligned-ratio match is refused
    with pytest.raises(ConvergenceError):
        predict_for(FactorProductSpec(0.3), SignCylinderTarget((-1,) * 5), 2.0)


def test_compare_report_structure_and_tv():
    report = run_experiment(_cfg(), "compare")
    assert report["schema"] == 1 and report["mode"] == "compare"
    (entry,) = report["results"]
    assert entry["sweep_value"] == 6
    assert entry["measure"]["value"] == pytest.approx(2.0**-7)
    assert entry["measure"]["method"].startswith("exact")
    # mu is assembled in log space, so t/mu sits a hair under 256
    assert entry["horizon"] in (255, 256)
    assert entry["prediction"]["family"] == "polya-aeppli"
    assert entry["empirical"]["samples"] == 6000
    tv = entry["tv"]
    assert tv["pass"] and tv["value"] <= 0.05
    assert tv["band"][0] <= tv["value"] <= tv["band"][1]
    tables = entry["tables"]
    assert tables["alpha_hat"]["values"][0] == 1.0
    assert exit_code_for(report) == 0


def test_report_body_is_worker_invariant():
    base = run_experiment(_cfg(), "compare")
    threaded = run_experiment(_cfg(workers=3), "compare")
    assert report_body(base) == report_body(threaded)
    assert base["meta"]["workers"] == 1 and threaded["meta"]["workers"] == 3


def test_seed_changes_the_body():
    a = run_experiment(_cfg(), "compare")
    b = run_experiment(_cfg(seed=12), "compare")
    assert report_body(a) != report_body(b)


def test_simulate_and_predict_modes():
    sim = run_experiment(_cfg(), "simulate")
    (entry,) = sim["results"]
    assert "prediction" not in entry and "tv" not in entry
    assert entry["empirical"]["samples"] == 6000
    pred = run_experiment(_cfg(), "predict")
    (entry,) = pred["results"]
    assert "empirical" not in entry and entry["prediction"]["params"]["p"] == 0.5


def test_failing_tolerance_sets_exit_code():
    report = run_experiment(_cfg(tolerance=1e-6), "compare")
    assert not report["results"][0]["tv"]["pass"]
    assert exit_code_for(report) == 2


def test_two_sided_window_must_fit_the_horizon():
    doc = copy.deepcopy(HOC_DOC)
    doc["experiment"]["window_two_sided"] = 300  # t/mu = 256 at n = 6
    with pytest.raises(ConfigError):
        run_experiment(_cfg(doc), "compare")


def test_resource_guard_trips_on_absurd_horizons():
    doc = copy.deepcopy(HOC_DOC)
    doc["target"]["sweep"] = [40]  # mu = 2^-41
    with pytest.raises(ResourceLimitError):
        run_experiment(_cfg(doc), "simulate")


def test_empirical_extremal_index_near_half():
    report = run_experiment(_cfg(), "compare")
    alpha = report["results"][0]["tables"]["alpha"]
    z = abs(alpha["extremal_index"] - 0.5) / alpha["extremal_index_se"]
    assert z < 4.0
    lam = report["results"][0]["tables"]["lambda_tilde"]
    assert abs(lam["mean_cluster"] - 2.0) < 6.0 * lam["mean_cluster_se"]


def test_write_report_inventory(tmp_path):
    report = run_experiment(_cfg(), "compare")
    paths = write_report(report, tmp_path, "compare")
    names = {Path(p).name for p in paths}
    assert "compare_report.json" in names
    assert "empirical_pmf_6.csv" in names and "predicted_pmf_6.csv" in names
    loaded = json.loads((tmp_path / "compare_report.json").read_text())
    assert loaded["config_hash"] == report["config_hash"]
    assert "_pmfs" not in json.dumps(loaded)


def test_sweep_writes_summary_csv(tmp_path):
    doc = copy.deepcopy(HOC_DOC)
    doc["target"]["sweep"] = [5, 6]
    report = run_experiment(_cfg(doc), "sweep")
    write_report(report, tmp_path, "sweep")
    lines = (tmp_path / "sweep_summary.csv").read_text().strip().splitlines()
    assert lines[0].startswith("sweep_value,")
    assert len(lines) == 3
    assert lines[1].split(",")[0] == "5"


def test_bound_command_rows(tmp_path):
    doc = copy.deepcopy(HOC_DOC)
    doc["target"]["sweep"] = [10, 16]
    doc["stein"] = {
        "profile": {"kind": "geometric", "scale": 1.0, "rate": 0.5},
        "mode": "phi",
        "window_policy": "half",
    }
    report = cmd_bound(_cfg(doc))
    rows = report["results"]
    assert [r["n"] for r in rows] == [10, 16]
    assert rows[1]["value"] < rows[0]["value"]
    assert report["monotone_decreasing"] is True
    paths = write_bound_report(report, tmp_path)
    names = {Path(p).name for p in paths}
    assert "bound_table.csv" in names and "bound_report.json" in names
    header = (tmp_path / "bound_table.csv").read_text().splitlines()[0]
    assert header == "n,argmin_delta,bracket_value"


def test_bound_requires_stein_section():
    with pytest.raises(ConfigError):
        cmd_bound(_cfg())
