import json
import math
import os
import subprocess

import pytest

import lungcadex as lx


def test_bce_matches_closed_form():
    assert lx.bce_loss([0.9], [1.0]) == pytest.approx(-math.log(0.9), abs=1e-9)


def test_dice_of_half_overlap():
    assert lx.dice_loss([1.0, 0.0], [1.0, 1.0]) == pytest.approx(1.0 - 2.0 / 3.0, abs=1e-6)


def test_sce_terms_sum():
    total, ce, rce = lx.sce_loss([[0.9, 0.1], [0.2, 0.8]])
    assert total == pytest.approx(ce + rce, abs=1e-12)
    assert ce >= 0.0 and rce >= 0.0


def test_window_and_labels():
    assert lx.window_value(140.0) == pytest.approx(0.75)
    assert lx.derive_label(3.5) == "malignant"
    assert lx.derive_label(3.0) == "excluded"
    assert lx.derive_label(2.75) == "benign"


def test_split_is_disjoint_and_deterministic():
    ids = [f"s{i:03d}" for i in range(20)]
    train, test = lx.split_by_scan(ids, 0.7, 3)
    assert len(train) == 14 and len(test) == 6
    assert not set(train) & set(test)
    assert (train, test) == lx.split_by_scan(list(reversed(ids)), 0.7, 3)


def test_top_k_breaks_ties_by_index():
    assert lx.top_k_indices([0.5, 0.9, 0.5, 0.1], 3) == [1, 0, 2]
    with pytest.raises(lx.ParameterError):
        lx.top_k_indices([0.1], 0)


def test_auc_and_single_class():
    assert lx.roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)
    with pytest.raises(lx.UndefinedMetricError):
        lx.roc_auc([0.2, 0.3], [1, 1])
    report = lx.metrics_report([0.2, 0.3], [1, 1])
    assert report["auc"] is None and report["sensitivity"] == 0.0 and report["specificity"] is None


def test_phantom_and_ingest_check(tmp_path):
    manifest = lx.generate_phantom(tmp_path / "ph", volumes=6, nodules_per_volume=2, seed=4)
    assert os.path.exists(manifest)
    out = tmp_path / "ingest"
    code = lx.run_cli(["ingest-check", "--manifest", str(manifest), "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["command"] == "ingest-check"
    assert summary["metrics"]["n_scans"] == 6
    assert "wall_time_seconds" in summary


def test_cli_binary_reports_usage_errors():
    cli = os.environ.get("LUNGCADEX_CLI")
    if not cli:
        pytest.skip("command-line binary not provided")
    assert subprocess.run([cli], capture_output=True).returncode == 2
    missing = subprocess.run([cli, "ingest-check", "--manifest", "/nonexistent.json", "--out", "/tmp/lx_missing"],
                             capture_output=True)
    assert missing.returncode == 4
