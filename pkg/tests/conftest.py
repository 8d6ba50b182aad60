import numpy as np
import pytest

from mdsens.fvm import MaterialField, assemble_system
from mdsens.greens import factorize, solve_greens
from mdsens.mesh import Box, ElectrodeSpec, Grading, LinerBox, build_box_mesh, finalize
from mdsens.scenario import load_validation_mesh

# a small landfill-like model: liner box with electrodes inside and outside
SMALL_ELECTRODES = (-0.9, -0.55, -0.15, 0.15, 0.55, 0.9)


def small_liner_mesh(grading=Grading(0.15, 0.15, 0.8, 1.8), hole_radius=0.0, shift=0.0):
    lin = LinerBox((-0.3, -0.3, -0.2 - shift), (0.3, 0.3, 0.0 - shift),
                   (0.0, 0.0, -0.2 - shift) if hole_radius else None, hole_radius)
    els = [ElectrodeSpec(x, 0.0, 0.05) for x in SMALL_ELECTRODES]
    return finalize(build_box_mesh(Box((-2, -2, -1.5), (2, 2, 0)), grading, lin, els))


@pytest.fixture(scope="session")
def liner_mesh():
    return small_liner_mesh()


@pytest.fixture(scope="session")
def liner_greens(liner_mesh):
    mat = MaterialField.homogeneous(liner_mesh, 100.0)
    return solve_greens(factorize(assemble_system(liner_mesh, mat)))


@pytest.fixture(scope="session")
def validation_mesh():
    return load_validation_mesh()


@pytest.fixture(scope="session")
def validation_greens(validation_mesh):
    mat = MaterialField.homogeneous(validation_mesh, 100.0)
    return solve_greens(factorize(assemble_system(validation_mesh, mat)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


HALFSPACE_ELECTRODES = (-0.99, -0.33, 0.33, 0.99)


def halfspace_mesh(half_width=60.0, h=0.08, growth=1.5):
    """Large box standing in for a half-space; four surface electrodes 0.66 m apart."""
    L = half_width
    els = [ElectrodeSpec(x, 0.0, 0.05) for x in HALFSPACE_ELECTRODES]
    return finalize(build_box_mesh(Box((-L, -L, -L), (L, L, 0)), Grading(h, h, L / 5, growth), None, els))


@pytest.fixture(scope="session")
def halfspace_greens():
    m = halfspace_mesh()
    return solve_greens(factorize(assemble_system(m, MaterialField.homogeneous(m, 100.0), subcell=False)))


class LandfillRuns:
    """Landfill scenarios run on demand and cached for the session (each takes about a minute)."""

    def __init__(self, root):
        self.root = root
        self._done = {}

    def get(self, case, hole=None, refine_diameter=None):
        from mdsens.scenario import build_case, read_probe_csv, run_scenario

        key = (case, hole, refine_diameter)
        if key not in self._done:
            spec = build_case(case, hole, refine_diameter=refine_diameter)
            out = self.root / f"case{case}_{hole}_{refine_diameter}"
            summary = run_scenario(spec, out)
            pts, vals = read_probe_csv((out / "probes" / "vertical_center.csv").read_text())
            self._done[key] = {"summary": summary, "spec": spec, "out": out, "probe": (pts, vals)}
        return self._done[key]


@pytest.fixture(scope="session")
def landfill(tmp_path_factory):
    return LandfillRuns(tmp_path_factory.mktemp("landfill"))


# criterion -> (passed, detail); filled by test_acceptance and printed at the end of the run
ACCEPTANCE = {}


def record(criterion: int, ok: bool, detail: str):
    ACCEPTANCE[criterion] = (bool(ok), detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
