import json
import subprocess
import sys

import numpy as np
import pytest

from fakeres import cli
from fakeres.experiments import ExperimentReport
from fakeres.grid import GridSpec, VolumeGrid
from fakeres.io import read_nifti, write_nifti

SUBCOMMANDS = ["phantom", "resample", "stats", "kmeans", "verify-bounds", "experiment1", "experiment2-surrogate"]


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.mark.parametrize("sub", [None] + SUBCOMMANDS)
def test_help_exits_zero(sub, capsys):
    argv = ["--help"] if sub is None else [sub, "--help"]
    with pytest.raises(SystemExit) as exc:
        cli.main(argv)
    assert exc.value.code == 0
    assert "usage" in capsys.readouterr().out


def test_bad_flag_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["phantom", "--size", "8", "-o", "x", "--bogus"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "fakeres", "phantom", "--size", "4", "-o", str(tmp_path / "p")],
        capture_output=True, text=True,
    )
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "p_vol.nii").exists()


def test_phantom_files(tmp_path):
    assert run("phantom", "--kind", "shepp", "--size", 128, "-o", tmp_path / "lo") == 0
    mask = read_nifti(tmp_path / "lo_mask.nii")
    vol = read_nifti(tmp_path / "lo_vol.nii")
    assert mask.label_count == 6 and set(np.unique(mask.labels)) == set(range(6))
    assert vol.shape == (128, 128, 128)


def test_minimum_phantom(tmp_path):
    assert run("phantom", "--size", 2, "-o", tmp_path / "t", "--gzip") == 0
    assert read_nifti(tmp_path / "t_vol.nii.gz").shape == (2, 2, 2)


def test_two_compartment_fbr(tmp_path, capsys):
    assert run("phantom", "--kind", "two-compartment", "--size", 48, "--hot", 4, "--cold", 1, "-o", tmp_path / "tc") == 0
    assert run(
        "stats", tmp_path / "tc_vol.nii", tmp_path / "tc_mask.nii", "--hot", 3, "--cold", 2,
        "--json", tmp_path / "s.json",
    ) == 0
    assert json.loads((tmp_path / "s.json").read_text())["fbr"] == 4.0
    assert "fbr: 4" in capsys.readouterr().out


def test_stats_native_zero_error(tmp_path):
    run("phantom", "--size", 24, "-o", tmp_path / "p")
    assert run(
        "stats", tmp_path / "p_vol.nii", tmp_path / "p_mask.nii", "--shepp-references",
        "--csv", tmp_path / "s.csv",
    ) == 0
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].startswith("label,voxel_count,mean")
    assert len(lines) == 7
    # the thinnest ellipsoid misses every node at 24 nodes; its row stays, empty
    rows = [line.split(",") for line in lines[1:]]
    assert all(float(r[-1]) == 0.0 for r in rows if int(r[1]) > 0)
    assert [int(r[1]) for r in rows].count(0) == 1


def test_plain_identity_resample(tmp_path):
    spec = GridSpec.cube(9)
    vol = VolumeGrid(spec, np.random.default_rng(0).normal(size=spec.shape))
    write_nifti(vol, tmp_path / "in.nii")
    assert run("resample", tmp_path / "in.nii", "-o", tmp_path / "out.nii") == 0
    assert np.max(np.abs(read_nifti(tmp_path / "out.nii").values - vol.values)) <= 1e-12


def test_fake_resample_with_stack(tmp_path):
    run("phantom", "--size", 32, "-o", tmp_path / "lo")
    run("phantom", "--size", 64, "-o", tmp_path / "hi")
    code = run(
        "resample", tmp_path / "lo_vol.nii", "--mode", "fake", "--mask-high", tmp_path / "hi_mask.nii",
        "--low-mask", tmp_path / "lo_mask.nii", "--emit-stack", tmp_path / "stack.nii",
        "-o", tmp_path / "f.nii", "--threads", 2,
    )
    assert code == 0
    out = read_nifti(tmp_path / "f.nii")
    truth = read_nifti(tmp_path / "hi_vol.nii")
    mask = read_nifti(tmp_path / "hi_mask.nii")
    for s in range(6):
        sel = mask.labels == s
        assert abs(out.values[sel].mean() - truth.values[sel].mean()) <= 1e-3
    assert read_nifti(tmp_path / "stack.nii").shape == (6 * 32, 32, 32)


def test_fake_without_mask_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run("resample", "in.nii", "--mode", "fake", "-o", tmp_path / "x.nii")
    assert exc.value.code == 2
    assert "--mask-high" in capsys.readouterr().err


def test_empty_segment_suggests_skip_empty(tmp_path, capsys):
    run("phantom", "--size", 12, "-o", tmp_path / "lo")
    run("phantom", "--size", 48, "-o", tmp_path / "hi")
    args = ["resample", tmp_path / "lo_vol.nii", "--mode", "fake", "--mask-high", tmp_path / "hi_mask.nii",
            "-o", tmp_path / "f.nii"]
    assert run(*args) == 3
    err = capsys.readouterr().err
    assert "segment" in err and "--skip-empty" in err
    assert run(*args, "--skip-empty") == 0


def test_missing_file_is_io_error(tmp_path, capsys):
    assert run("stats", tmp_path / "nope.nii", tmp_path / "nope2.nii") == 5
    assert "nope.nii" in capsys.readouterr().err


def test_corrupt_file_is_input_error(tmp_path):
    (tmp_path / "junk.nii").write_bytes(b"\0" * 400)
    assert run("kmeans", tmp_path / "junk.nii", "-k", 3, "-o", tmp_path / "k.nii") == 3


def test_kmeans_command_is_deterministic(tmp_path):
    run("phantom", "--size", 20, "-o", tmp_path / "p")
    for name in ("a.nii", "b.nii"):
        assert run("kmeans", tmp_path / "p_vol.nii", "-k", 5, "--seed", 3, "-o", tmp_path / name) == 0
    assert (tmp_path / "a.nii").read_bytes() == (tmp_path / "b.nii").read_bytes()
    labels = read_nifti(tmp_path / "a.nii").labels
    assert set(np.unique(labels)) == set(range(5))
    # piecewise-constant input: clusters are exactly the distinct intensities
    vol = read_nifti(tmp_path / "p_vol.nii").values
    for lab in range(5):
        assert np.ptp(vol[labels == lab]) == 0.0
    assert run("kmeans", tmp_path / "p_vol.nii", "-k", 6, "-o", tmp_path / "c.nii") == 3


def test_verify_bounds_exit_codes(tmp_path, monkeypatch):
    assert run("verify-bounds", "--size", 10, "--step-sizes", 16, 32, "--probes", 500, "-o", tmp_path) == 0
    assert (tmp_path / "bounds.json").exists()

    def failing(*args, **kwargs):
        return ExperimentReport("verify-bounds", {}, [], {"lipschitz_bounds_hold": False})

    monkeypatch.setattr(cli, "run_bound_suite", failing)
    assert run("verify-bounds") == 4


def test_experiment1_outputs_are_reproducible(tmp_path):
    for d in ("a", "b"):
        assert run("experiment1", "--size-lo", 16, "--size-hi", 32, "-o", tmp_path / d) == 0
    for name in ("report.json", "report.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["config"]["seed"] == cli.DEFAULT_SEED


def test_threads_environment_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("FAKERES_THREADS", "0")
    with pytest.raises(SystemExit) as exc:
        run("phantom", "--size", 4, "-o", tmp_path / "p")
    assert exc.value.code == 2
    monkeypatch.setenv("FAKERES_THREADS", "3")
    assert run("experiment1", "--size-lo", 8, "--size-hi", 16, "-o", tmp_path / "e") == 0


def test_experiment2_small_run(tmp_path):
    code = run(
        "experiment2-surrogate", "--trials", 3, "--segmentation", "exact", "--seed", 11,
        "-o", tmp_path,
    )
    assert code == 0
    rows = (tmp_path / "report.csv").read_text().splitlines()
    assert rows[0] == "trial,fbr_plain,fbr_fake,abs_error_plain,abs_error_fake"
    assert len(rows) == 4
    report = json.loads((tmp_path / "report.json").read_text())
    assert 0.0 <= report["summary"]["welch_p"] <= 1.0


def test_experiment2_rejects_single_trial(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("experiment2-surrogate", "--trials", 1, "-o", tmp_path)
    assert exc.value.code == 2
