import csv
import io
import json

import numpy as np
import pytest

from fakeres.errors import ClusteringError
from fakeres.experiments import (
    ExperimentReport,
    run_bound_suite,
    run_experiment1,
    run_experiment2_surrogate,
)


def test_report_serialisation_is_stable(tmp_path):
    rep = ExperimentReport(
        "demo",
        {"b": 1, "a": np.float64(0.1)},
        [{"x": 1, "y": 0.1 + 0.2}, {"x": 2, "y": float("inf")}],
        {"ok": np.bool_(True)},
        {"z": np.int64(3)},
        {"stage": 1.234},
    )
    js = json.loads(rep.to_json())
    assert js["config"] == {"a": 0.1, "b": 1}
    assert js["rows"][0]["y"] == 0.1 + 0.2  # full precision
    assert js["rows"][1]["y"] == "inf"
    assert js["passed"] is True and "stage" not in rep.to_json()
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0] == ["x", "y"] and rows[1] == ["1", repr(0.1 + 0.2)]
    assert "0.3" in rep.to_text()  # six significant digits in the text summary
    paths = rep.write(tmp_path)
    assert [p.name for p in paths] == ["report.json", "report.csv", "timings.json"]


def test_experiment1_smoke():
    rep = run_experiment1(16, 32)
    assert [r["segment"] for r in rep.rows] == list(range(6))
    assert rep.passed
    # the ventricles are too thin for 16 nodes: reported, not silently dropped
    assert rep.summary["segments_missing_at_low_resolution"] == [5]
    assert rep.config["size_hi"] == 32 and rep.config["fill"] == "segment-mean"


def test_experiment1_downsampled_low_mask_is_worse():
    exact = run_experiment1(32, 64)
    nn = run_experiment1(32, 64, low_mask="downsample")
    e_exact = max(r["fake_abs_error"] for r in exact.rows)
    e_nn = max(r["fake_abs_error"] for r in nn.rows)
    assert e_exact < 1e-12 < e_nn


def test_experiment1_is_reproducible():
    a, b = run_experiment1(16, 32, threads=1), run_experiment1(16, 32, threads=4)
    assert a.to_json() == b.to_json() and a.to_csv() == b.to_csv()


def test_experiment2_needs_two_trials():
    with pytest.raises(ValueError):
        run_experiment2_surrogate(trials=1)


def test_experiment2_noise_free_direction():
    rep = run_experiment2_surrogate(16, 32, blur_fwhm=12.0, trials=2, noise=0.0, segmentation="exact")
    for r in rep.rows:
        assert r["abs_error_fake"] <= r["abs_error_plain"]


def test_experiment2_equal_activity():
    rep = run_experiment2_surrogate(trials=2, noise=0.0, hot=1.0, blur_fwhm=0.0, segmentation="exact")
    for r in rep.rows:
        assert r["fbr_fake"] == pytest.approx(1.0, abs=1e-12)
        # plain interpolation mixes the inactive wall into the water near it
        assert r["fbr_plain"] > 1.0


def test_experiment2_is_seeded():
    a = run_experiment2_surrogate(trials=2, seed=5)
    b = run_experiment2_surrogate(trials=2, seed=5)
    c = run_experiment2_surrogate(trials=2, seed=6)
    assert a.to_json() == b.to_json()
    assert a.rows != c.rows


def test_experiment2_reports_failed_clustering():
    with pytest.raises(ClusteringError):
        # at 32 nodes the hot spheres are a few hundred voxels; this seed loses them
        run_experiment2_surrogate(16, 32, trials=3, seed=6)


def test_bound_suite_passes():
    rep = run_bound_suite(n=12, step_sizes=(16, 32), probes=2000)
    assert rep.passed, rep.checks
    assert {r["case"] for r in rep.rows} >= {"affine", "plane_step"}
