import json

import numpy as np
import pytest

from mdsens import cli
from mdsens.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, EXIT_THRESHOLD, config_schema, main
from mdsens.greens import SingularSystemError
from mdsens.scenario import read_probe_csv
from mdsens.vtkio import write_vtk

COARSE = {"near_electrode": 0.15, "near_liner": 0.1, "boundary": 2.5, "growth": 2.0}


def _config(tmp_path, doc, name="config.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestConfig:
    def test_schema_shipped_in_docs(self):
        from pathlib import Path
        docs = Path(__file__).resolve().parents[1] / "docs" / "config.schema.json"
        assert json.loads(docs.read_text()) == config_schema()

    def test_negative_resistivity(self, tmp_path, capsys, monkeypatch):
        called = []
        monkeypatch.setattr(cli, "run_validation", lambda *a, **k: called.append(1))
        cfg = _config(tmp_path, {"rho_out": -100.0})
        assert main(["validate", "--config", cfg]) == EXIT_CONFIG
        assert "rho_out" in capsys.readouterr().err
        assert not called

    def test_unknown_key(self, tmp_path):
        assert main(["scenario", "--config", _config(tmp_path, {"case": 1, "colour": "red"})]) == EXIT_CONFIG

    def test_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{case: 1")
        assert main(["scenario", "--config", str(p)]) == EXIT_CONFIG

    def test_missing_file(self, tmp_path):
        assert main(["scenario", "--config", str(tmp_path / "none.json")]) == EXIT_CONFIG

    def test_missing_case(self, tmp_path):
        assert main(["scenario", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_hole_without_liner(self, tmp_path):
        assert main(["scenario", "--hole", "0.1", "--case", "1", "--no-liner", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_validate_rejects_scenario_keys(self, tmp_path):
        assert main(["validate", "--config", _config(tmp_path, {"case": 1})]) == EXIT_CONFIG

    def test_numerical_failure(self, tmp_path, monkeypatch):
        def boom(*a, **k):
            raise SingularSystemError("singular system")

        monkeypatch.setattr(cli, "run_scenario", boom)
        assert main(["scenario", "--case", "1", "--out", str(tmp_path)]) == EXIT_NUMERICAL


class TestEnumerate:
    def test_case1_capped(self, tmp_path):
        out = tmp_path / "c.csv"
        assert main(["enumerate", "--case", "1", "--kmax", "1e4", "--out", str(out)]) == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0] == "x0,x1,y0,y1,k_factor"
        assert 635000 <= len(lines) - 1 <= 636756

    def test_toy_layout(self, tmp_path):
        layout = tmp_path / "layout.csv"
        layout.write_text("x,y\n0,0\n0.66,0\n1.32,0\n1.98,0\n")
        out = tmp_path / "out"
        assert main(["enumerate", "--layout", str(layout), "--out", str(out)]) == EXIT_OK
        assert len((out / "configurations.csv").read_text().splitlines()) == 1 + 21

    def test_zero_cap(self, tmp_path, capsys):
        cfg = _config(tmp_path, {"electrodes": [[0, 0], [1, 0], [2, 0], [3, 0]], "k_max": 0})
        assert main(["enumerate", "--config", cfg]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.splitlines() == ["x0,x1,y0,y1,k_factor"]

    def test_needs_layout(self):
        assert main(["enumerate"]) == EXIT_CONFIG

    def test_bad_layout(self, tmp_path):
        layout = tmp_path / "layout.csv"
        layout.write_text("0,0\n0,0\n")
        assert main(["enumerate", "--layout", str(layout)]) == EXIT_CONFIG


class TestProbe:
    @pytest.fixture
    def constant_field(self, tmp_path):
        nodes = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, -1], [1, 1, -1]], float)
        cells = np.array([[0, 1, 2, 3], [1, 2, 3, 4]])
        p = tmp_path / "field.vtk"
        p.write_text(write_vtk(nodes, cells, {"sensitivity": [4.5, 4.5]}))
        return p

    def test_constant(self, constant_field, tmp_path):
        out = tmp_path / "probe.csv"
        args = ["probe", str(constant_field), "--from", "0.1", "0.1", "-0.1", "--to", "0.4", "0.4", "-0.5",
                "--n", "11", "--out", str(out)]
        assert main(args) == EXIT_OK
        pts, v = read_probe_csv(out.read_text())
        assert pts.shape == (11, 3)
        assert np.all(v == 4.5)

    def test_outside(self, constant_field):
        args = ["probe", str(constant_field), "--from", "0.1", "0.1", "-0.1", "--to", "3", "3", "-0.5"]
        assert main(args) == EXIT_CONFIG

    def test_unknown_field(self, constant_field):
        args = ["probe", str(constant_field), "--from", "0.1", "0.1", "-0.1", "--to", "0.2", "0.2", "-0.2",
                "--name", "rho"]
        assert main(args) == EXIT_CONFIG

    def test_not_vtk(self, tmp_path):
        p = tmp_path / "x.vtk"
        p.write_text("nothing")
        assert main(["probe", str(p), "--from", "0", "0", "0", "--to", "1", "1", "1"]) == EXIT_CONFIG

    @pytest.mark.slow
    def test_hole_run_peak_below_liner(self, landfill, tmp_path):
        run = landfill.get(2, 0.1)
        bottom = run["spec"].liner.bottom
        out = tmp_path / "below.csv"
        # from the liner bottom down through the hole axis
        args = ["probe", str(run["out"] / "fields" / "sensitivity.vtk"), "--from", "0", "0", str(bottom),
                "--to", "0", "0", "-2.9", "--n", "281", "--out", str(out)]
        assert main(args) == EXIT_OK
        pts, v = read_probe_csv(out.read_text())
        assert bottom - 0.2 <= pts[np.argmax(v), 2] <= bottom


class TestRuns:
    def test_validate(self, tmp_path):
        code = main(["validate", "--out", str(tmp_path)])
        s = json.loads((tmp_path / "summary.json").read_text())
        assert sum(len(v) for v in s["rmse"].values()) == 6
        assert code == (EXIT_OK if s["pass"] else EXIT_THRESHOLD)
        for key in ("rmse", "slices", "counts", "params", "runtime_s"):
            assert key in s
        assert (tmp_path / "fields" / "validation.vtk").exists()
        assert (tmp_path / "probes" / "wenner_alpha_0.15_analytic.csv").exists()

    def test_scenario_slices(self, tmp_path):
        cfg = _config(tmp_path, {"case": 2, "hole": 0.1, "grading": COARSE, "stride": 50000})
        assert main(["scenario", "--config", cfg, "--out", str(tmp_path / "run")]) == EXIT_OK
        s = json.loads((tmp_path / "run" / "summary.json").read_text())
        assert set(s["slices"]) == {"0.15", "0.6", "1.2"}
        assert s["params"]["liner"]["hole_diameter"] == 0.1
        assert s["params"]["grading"]["growth"] == 2.0

    def test_scenario_deterministic(self, tmp_path):
        cfg = _config(tmp_path, {"case": 1, "grading": COARSE, "stride": 50000})
        runs = []
        for k in range(2):
            out = tmp_path / f"run{k}"
            assert main(["scenario", "--config", cfg, "--out", str(out), "--threads", str(1 + 2 * k)]) == EXIT_OK
            runs.append(out)
        a, b = _tree(runs[0]), _tree(runs[1])
        assert a.keys() == b.keys()
        for name in a:
            if name == "summary.json":
                continue
            assert a[name] == b[name], name
        # the wall-clock runtime is the only field allowed to differ
        sa = json.loads(a["summary.json"])
        sb = json.loads(b["summary.json"])
        sa.pop("runtime_s")
        sb.pop("runtime_s")
        assert sa == sb
