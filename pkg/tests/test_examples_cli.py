import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest
import yaml

from geomolt.cli import main
from geomolt.examples import REGISTRY, build_example, example_from_text, example_to_text
from geomolt.fields import tangential_mismatch
from geomolt.geometry import GeometryError, MetricField
from geomolt.surface import PiecewiseSurface

SCHEMA = {"study", "example", "params", "eps", "values", "residuals", "verdict", "wallclock_ms"}


def _report(out):
    with open(out / "report.json") as fh:
        return json.load(fh)


# -- registry ----------------------------------------------------------------------


def test_cube_example():
    cube = build_example("cube")
    assert isinstance(cube, PiecewiseSurface) and cube.closed
    assert (len(cube.vertices), len(cube.edges), len(cube.faces)) == (8, 12, 6)


def test_degenerate_example():
    g = build_example("degenerate")
    assert isinstance(g, MetricField)
    assert g.undefined == ()
    x = np.array([[0.3, -0.2], [0.0, 0.5]])
    assert np.allclose(g(x), [np.diag([1.0, 0.09]), np.diag([1.0, 0.0])])
    assert g.chart.domain.lo == (-1.0, -1.0) and g.chart.domain.hi == (1.0, 1.0)


def test_dihedral_example_glues():
    g = build_example("dihedral")
    assert tangential_mismatch(g) <= 1e-12
    assert np.allclose(g(np.array([[0.3, -0.5], [0.3, 0.5]])), [np.eye(2), np.diag([1.0, 2.0])])


def test_unknown_example_lists_registry():
    with pytest.raises(GeometryError, match="registered: .*cube"):
        build_example("klein_bottle")


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_example_text_round_trip(name):
    text = example_to_text(name)
    obj = example_from_text(text)
    doc = json.loads(text)
    assert example_to_text(doc["example"], doc["params"]) == text
    if isinstance(obj, PiecewiseSurface):
        assert json.dumps(obj.to_dict(), indent=1, sort_keys=True) == json.dumps(doc["surface"], indent=1, sort_keys=True)


def test_builders_deterministic():
    a = build_example("oscillating")
    b = build_example("oscillating")
    x = np.random.default_rng(0).uniform(-1, 1, size=(100, 2))
    assert np.array_equal(a(x, nudge=True), b(x, nudge=True))


# -- command line ------------------------------------------------------------------


def test_measure_command_writes_schema(tmp_path, capsys):
    rc = main(["measure", "--example", "cube", "--set", "diff(all(), point(0,0,0))", "--out", str(tmp_path)])
    assert rc == 0
    rep = _report(tmp_path)
    assert SCHEMA <= set(rep)
    assert rep["values"][-1] == pytest.approx(7 * math.pi / 2, rel=1e-2)
    summary = json.loads(capsys.readouterr().out)
    assert summary["study"] == "measure"
    with open(tmp_path / "measure.csv") as fh:
        assert next(csv.reader(fh)) == ["eps", "value", "residual"]


def test_empty_eps_rejected(tmp_path):
    assert main(["transport", "--eps=", "--out", str(tmp_path)]) == 2


def test_nonpositive_eps_rejected(tmp_path):
    assert main(["transport", "--eps", "0.1,-0.05", "--out", str(tmp_path)]) == 2


def test_config_study_mismatch_rejected(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"study": "cantor"}))
    assert main(["measure", "--config", str(cfg)]) == 2


def test_tolerance_failure_exit_code_names_criterion(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"study": "measure", "example": "cube", "tolerance": {"at_most": {"final_value": 1.0}}}))
    assert main(["measure", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "final_value" in capsys.readouterr().err


def test_smooth_command_outputs(tmp_path):
    rc = main(["smooth", "--field", "kink", "--mode", "covering", "--eps", "0.1,0.05", "--grid", "9", "--out", str(tmp_path)])
    assert rc == 0
    rep = _report(tmp_path)
    assert rep["field"] == "kink" and rep["mode"] == "covering"
    assert len(rep["c0_err"]) == len(rep["lp_err"]) == 2
    assert rep["c0_err"][1] < rep["c0_err"][0]
    with open(tmp_path / "smoothed_grid.csv") as fh:
        assert next(csv.reader(fh)) == ["x", "y", "g00", "g01", "g11"]


def test_curvature_metric_command_with_kappa(tmp_path):
    rc = main(["curvature", "--metric", "sphere_patch", "--region", "1.0,-0.5,2.1,0.5",
               "--eps", "0.15,0.1", "--probes", "3", "--kappa", "2", "--out", str(tmp_path)])
    assert rc == 0
    rep = _report(tmp_path)
    assert rep["verdict"] == "DECREASING"
    assert len(rep["lk_measure"]) == 2


@pytest.mark.slow
def test_cube_vertex_study_trends_to_right_angle(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({
        "study": "curvature",
        "example": "cube",
        "eps": [0.1, 0.05, 0.025],
        "options": {"region": {"vertex": "v(1,1,1)", "radius": 0.3},
                    "covering": {"cell_size": 0.4, "overlap": 0.1, "skew": 0.2}},
    }))
    assert main(["curvature", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rep = _report(tmp_path / "o")
    for v in rep["values"]:
        assert v == pytest.approx(math.pi / 2, rel=1e-2)


def test_suite_runs_in_parallel(tmp_path):
    cfg = tmp_path / "s.yaml"
    cfg.write_text(yaml.safe_dump({
        "study": "suite",
        "studies": [
            {"name": "cube_gb", "study": "measure", "example": "cube", "tolerance": {"final_residual": 1e-3}},
            {"name": "tet_gb", "study": "measure", "example": "tetrahedron", "tolerance": {"final_residual": 1e-3}},
        ],
    }))
    assert main(["suite", "--config", str(cfg), "--out", str(tmp_path / "o"), "--jobs", "2"]) == 0
    rep = _report(tmp_path / "o")
    assert rep["verdict"] == "PASS"
    assert {s["name"] for s in rep["studies"]} == {"cube_gb", "tet_gb"}
    assert (tmp_path / "o" / "cube_gb" / "report.json").exists()


def test_console_script_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "geomolt.cli", "measure", "--example", "tetrahedron", "--out", str(tmp_path)],
        capture_output=True, text=True, check=False,
    )
    assert res.returncode == 0, res.stderr
    assert json.loads(res.stdout)["example"] == "tetrahedron"
