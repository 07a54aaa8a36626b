import csv
import json

import numpy as np
import pytest

from mpcc_aula.cli import METRIC_COLUMNS, TIMING_COLUMNS, main


@pytest.fixture
def short_box(tmp_path):
    path = tmp_path / "short.ini"
    path.write_text("[task]\nhorizon = 12\n[goals]\nx_range = 0.0, 0.2\ny_range = 0.0, 0.2\n"
                    "theta_range = -0.2, 0.2\n")
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_solve_toy_writes_outputs(tmp_path):
    out = tmp_path / "toy"
    assert main(["solve", "--task", "toy_2d", "--out", str(out)]) == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["status"] == "converged"
    rows = read_csv(out / "trajectory.csv")
    assert rows[0] == ["t", "s0", "s1", "G0", "H0", "y0", "z0"]
    assert float(rows[1][1]) == pytest.approx(1.25, abs=1e-6)
    assert read_csv(out / "sweeps.csv")[0][:3] == ["outer", "sweep", "phi"]


def test_solve_push_box_with_explicit_goal(tmp_path, short_box):
    out = tmp_path / "box"
    code = main(["solve", "--task", "push_box", "--config", short_box, "--goal", "0.05,0.02,0.0",
                 "--out", str(out)])
    doc = json.loads((out / "report.json").read_text())
    assert code == (0 if doc["status"] == "converged" else 1)
    assert doc["goal"] == [0.05, 0.02, 0.0]
    header = read_csv(out / "trajectory.csv")[0]
    assert "force0_x" in header and "y9" in header


@pytest.mark.parametrize("argv", [
    ["benchmark", "--task", "push_box", "--trials", "0"],
    ["solve", "--task", "push_box", "--config", "/nonexistent.ini"],
    ["solve", "--task", "push_box", "--goal", "1,2"],
    ["benchmark", "--task", "toy_2d", "--trials", "1"],
    ["diagnostics", "--task", "cart_transport", "--trials", "1"],
    ["solve", "--task", "toy_2d", "--rho-c", "-1"],
])
def test_invalid_input_exits_2_without_files(tmp_path, argv):
    out = tmp_path / "never"
    assert main(argv + ["--out", str(out)]) == 2
    assert not out.exists()


def test_unknown_task_is_rejected(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["solve", "--task", "push_q", "--out", str(tmp_path / "x")])
    assert err.value.code == 2


def test_single_trial_benchmark_has_zero_interval(tmp_path, short_box):
    out = tmp_path / "one"
    assert main(["benchmark", "--task", "push_box", "--trials", "1", "--config", short_box,
                 "--out", str(out)]) == 0
    rows = read_csv(out / "metrics.csv")
    assert rows[0] == METRIC_COLUMNS
    assert rows[-2][3] == "mean" and rows[-1][3] == "ci95"
    assert all(float(v) == 0.0 for v in rows[-1][4:])
    assert read_csv(out / "timing.csv")[0] == TIMING_COLUMNS


def test_benchmark_aggregates_recompute(tmp_path, short_box):
    out = tmp_path / "three"
    assert main(["benchmark", "--task", "push_box", "--trials", "3", "--config", short_box,
                 "--out", str(out)]) == 0
    rows = read_csv(out / "metrics.csv")
    data = np.array([[float(v) for v in r[4:]] for r in rows[1:4]])
    mean = np.array([float(v) for v in rows[4][4:]])
    half = np.array([float(v) for v in rows[5][4:]])
    np.testing.assert_allclose(mean, data.mean(axis=0), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(half, 1.96 * data.std(axis=0, ddof=1) / np.sqrt(3), rtol=1e-12, atol=1e-12)


def test_toy_diagnostics_paths(tmp_path):
    out = tmp_path / "diag"
    assert main(["diagnostics", "--task", "toy_2d", "--out", str(out)]) == 0
    summary = json.loads((out / "toy_summary.json").read_text())
    for solver in ("impact", "penalty"):
        assert summary[solver]["status"] == "converged"
        np.testing.assert_allclose(summary[solver]["solution"], [1.25, 0.0], atol=1e-6)
    impact = read_csv(out / "path_impact.csv")
    assert impact[0] == ["outer", "sweep", "x1", "x2", "y", "z"]
    # every recorded slack pair is complementary
    assert all(float(r[4]) * float(r[5]) == 0.0 for r in impact[1:])
    assert read_csv(out / "path_penalty.csv")[0] == ["outer", "sweep", "x1", "x2"]
