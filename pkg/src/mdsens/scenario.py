"""End-to-end experiments: the half-space validation and the landfill cases.

A :class:`ScenarioSpec` describes geometry, materials, electrodes and the
configuration set; :func:`run_scenario` meshes, solves one Green's function
per electrode, accumulates the global sensitivity and extracts metrics.
:func:`run_validation` compares Wenner-alpha and dipole-dipole fields on the
shipped unstructured fixture with the closed-form half-space kernel.
"""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .analytic import quadrupole_kernel
from .fvm import MaterialField, assemble_system
from .greens import ABSENT, GreensTable, factorize, solve_greens
from .mesh import Box, ElectrodeSpec, Grading, LinerBox, MixedDimMesh, build_box_mesh, finalize
from .msh import read_msh, write_msh
from .sensitivity import SIDE_WEIGHT, SensitivityField, quadrupole_field, volume_normalize
from .survey import ElectrodeLayout, Quadrupole, dipole_dipole, enumerate_configs, wenner_alpha
from .unstructured import build_unstructured_mesh
from .vtkio import write_vtk

logger = logging.getLogger(__name__)

STUDY_HOLES = (0.02, 0.1)
STUDY_SHIFT = 0.05
SLICE_DEPTHS = (0.15, 0.6, 1.2)
# lattice used for desk runs; finer targets exceed a few GB of solver memory
DESK_GRADING = Grading(near_electrode=0.08, near_liner=0.08, boundary=2.0, growth=1.6)
DEFAULT_STRIDE = 1000

VALIDATION_FIXTURE = "validation.msh"
VALIDATION_ELECTRODES = tuple((2.0 + 0.66 * i, 2.0) for i in range(4))
VALIDATION_DEPTHS = (0.15, 0.2, 0.3)
VALIDATION_THRESHOLDS = {
    ("wenner_alpha", 0.15): 12.0,
    ("dipole_dipole", 0.15): 8.0,
    ("wenner_alpha", 0.3): 3.0,
    ("dipole_dipole", 0.3): 3.0,
}


class ScenarioError(ValueError):
    """Inconsistent scenario parameters."""


@dataclass(frozen=True)
class LinerSpec:
    """Open-box liner. ``lo``/``hi`` are the unshifted corners; ``shift`` lowers it."""

    lo: tuple = (-0.5, -0.5, -0.1)
    hi: tuple = (0.5, 0.5, 0.0)
    thickness: float = 2e-3
    rho: float = 1e15
    hole_diameter: float | None = None
    shift: float = 0.0

    @property
    def box(self):
        lo = np.array(self.lo, float) - (0, 0, self.shift)
        hi = np.array(self.hi, float) - (0, 0, self.shift)
        return lo, hi

    @property
    def bottom(self) -> float:
        return float(self.box[0][2])

    @property
    def center(self) -> np.ndarray:
        lo, hi = self.box
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    domain: Box
    grading: Grading
    electrodes: tuple  # (x, y) surface positions
    liner: LinerSpec | None = None
    rho_in: float = 20.0
    rho_out: float = 100.0
    electrode_length: float = 0.05
    electrode_radius: float = 2.5e-3
    electrode_rho: float = 2e-7
    current: float = 1.0
    k_max: float = 1e4
    stride: int | None = DEFAULT_STRIDE
    # electrode index sequences used for the named Wenner/dipole-dipole arrays
    lines: tuple = ()
    # hole diameter whose lattice refinement is applied even without a hole
    refine_diameter: float | None = None
    flags: tuple = ()

    def __post_init__(self):
        for name in ("rho_in", "rho_out", "electrode_length", "electrode_radius", "electrode_rho"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ScenarioError(f"{name} must be positive, got {v}")
        if self.current == 0 or not np.isfinite(self.current):
            raise ScenarioError("current must be finite and nonzero")
        if self.stride is not None and self.stride < 1:
            raise ScenarioError("stride must be a positive integer")
        if not self.k_max >= 0:
            raise ScenarioError("k_max must be non-negative")
        lo = np.asarray(self.domain.lo, float)
        hi = np.asarray(self.domain.hi, float)
        for x, y in self.electrodes:
            if not (lo[0] < x < hi[0] and lo[1] < y < hi[1]):
                raise ScenarioError(f"electrode ({x}, {y}) outside the domain")
        if self.liner is not None:
            llo, lhi = self.liner.box
            if np.any(llo <= lo) or np.any(lhi[:2] >= hi[:2]) or lhi[2] > hi[2]:
                raise ScenarioError("liner not inside the domain")
            if self.liner.rho <= 0 or self.liner.thickness <= 0:
                raise ScenarioError("liner resistivity and thickness must be positive")

    @property
    def positions(self) -> np.ndarray:
        z = float(self.domain.hi[2])
        return np.array([[x, y, z] for x, y in self.electrodes], dtype=float).reshape(-1, 3)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["domain"] = {"lo": list(self.domain.lo), "hi": list(self.domain.hi)}
        d["grading"]["refine"] = [list(r) for r in self.grading.refine]
        d["electrodes"] = [list(p) for p in self.electrodes]
        d["lines"] = [list(v) for v in self.lines]
        d["flags"] = list(self.flags)
        if self.liner is not None:
            d["liner"]["lo"] = list(self.liner.lo)
            d["liner"]["hi"] = list(self.liner.hi)
        if np.isinf(self.k_max):
            d["k_max"] = "inf"
        return d


def _perimeter(spacing: float, per_side: int, half: float):
    """Electrodes along the four sides of a square of half-width ``half``, counter-clockwise."""
    t = (np.arange(per_side) - (per_side - 1) / 2.0) * spacing
    sides = [
        [(v, -half) for v in t],
        [(half, v) for v in t],
        [(v, half) for v in t[::-1]],
        [(-half, v) for v in t[::-1]],
    ]
    return [p for s in sides for p in s]


def _side_lines(start: int, per_side: int):
    return tuple(tuple(range(start + k * per_side, start + (k + 1) * per_side)) for k in range(4))


def build_case(case: int, hole: float | None = None, shift: float | None = None,
               grading: Grading = DESK_GRADING, refine_diameter: float | None = None,
               no_liner: bool = False, stride: int | None = DEFAULT_STRIDE,
               k_max: float = 1e4) -> ScenarioSpec:
    """Landfill layouts 1-3 on a 10 x 10 x 3 m domain with a 1 x 1 x 0.1 m liner.

    Case 1: 12 electrodes per side, 0.08 m apart, 0.04 m outside the walls.
    Case 2: 6 per side outside (0.16 m) plus 6 per side inside (0.12 m).
    Case 3: 6 per side outside (0.16 m) plus a 4 x 6 grid inside (0.2 x 0.14 m).
    Hole diameters or shifts outside the studied set are accepted and flagged.
    """
    if case not in (1, 2, 3):
        raise ScenarioError(f"unknown case {case!r}; expected 1, 2 or 3")
    if no_liner and hole:
        raise ScenarioError("a hole needs a liner")
    if no_liner and shift:
        raise ScenarioError("a shift needs a liner")
    if hole is not None and not hole > 0:
        raise ScenarioError("hole diameter must be positive")
    if shift is not None and not shift >= 0:
        raise ScenarioError("shift must be non-negative")
    flags = []
    if hole and not any(np.isclose(hole, h) for h in STUDY_HOLES):
        flags.append(f"unstudied hole diameter {hole}")
    if shift and not np.isclose(shift, STUDY_SHIFT):
        flags.append(f"unstudied shift {shift}")
    if grading != DESK_GRADING:
        flags.append("custom grading")
    if case == 1:
        xy = _perimeter(0.08, 12, 0.54)
        lines = _side_lines(0, 12)
    elif case == 2:
        xy = _perimeter(0.16, 6, 0.54) + _perimeter(0.12, 6, 0.46)
        lines = _side_lines(0, 6) + _side_lines(24, 6)
    else:
        gx = (np.arange(4) - 1.5) * 0.2
        gy = (np.arange(6) - 2.5) * 0.14
        xy = _perimeter(0.16, 6, 0.54) + [(x, y) for y in gy for x in gx]
        rows = tuple(tuple(24 + 4 * j + i for i in range(4)) for j in range(6))
        cols = tuple(tuple(24 + 4 * j + i for j in range(6)) for i in range(4))
        lines = _side_lines(0, 6) + rows + cols
    liner = None if no_liner else LinerSpec(hole_diameter=hole or None, shift=shift or 0.0)
    ref = refine_diameter if refine_diameter is not None else (hole or 0.1)
    if liner is not None and ref:
        c = liner.center
        r = ref / 2.0
        h = min(grading.near_liner, r / 2.0)
        grading = replace(grading, refine=tuple(grading.refine) + ((0, c[0] - r, c[0] + r, h), (1, c[1] - r, c[1] + r, h)))
    name = f"case{case}" + (f"_hole{hole:g}" if hole else "") + (f"_shift{shift:g}" if shift else "")
    if no_liner:
        name += "_noliner"
    return ScenarioSpec(
        name=name,
        domain=Box((-5.0, -5.0, -3.0), (5.0, 5.0, 0.0)),
        grading=grading,
        electrodes=tuple((float(x), float(y)) for x, y in xy),
        liner=liner,
        lines=lines,
        refine_diameter=ref if liner is not None else None,
        stride=stride,
        k_max=k_max,
        flags=tuple(flags),
    )


def build_mesh(spec: ScenarioSpec) -> MixedDimMesh:
    liner = None
    if spec.liner is not None:
        lo, hi = spec.liner.box
        if spec.liner.hole_diameter:
            liner = LinerBox(tuple(lo), tuple(hi), (float(spec.liner.center[0]), float(spec.liner.center[1]), float(lo[2])),
                             spec.liner.hole_diameter / 2.0)
        else:
            liner = LinerBox(tuple(lo), tuple(hi))
    elec = [ElectrodeSpec(x, y, spec.electrode_length) for x, y in spec.electrodes]
    return finalize(build_box_mesh(spec.domain, spec.grading, liner, elec))


def build_materials(spec: ScenarioSpec, mesh: MixedDimMesh) -> MaterialField:
    """``rho_in`` inside the liner footprint above its bottom, ``rho_out`` elsewhere."""
    rho = np.full(mesh.domain.num_cells, spec.rho_out)
    nl = mesh.liner.num_cells if mesh.liner is not None else 0
    if spec.liner is not None:
        lo, hi = spec.liner.box
        c = mesh.domain.cell_centers
        inside = np.all((c[:, :2] > lo[:2]) & (c[:, :2] < hi[:2]), axis=1) & (c[:, 2] > lo[2])
        rho[inside] = spec.rho_in
        rho_l = np.full(nl, spec.liner.rho)
        eps = spec.liner.thickness
    else:
        rho_l = np.zeros(0)
        eps = 2e-3
    return MaterialField(rho, rho_l, np.full(mesh.num_electrodes, spec.electrode_rho),
                         liner_thickness=eps, electrode_radius=spec.electrode_radius)


def named_configs(spec: ScenarioSpec) -> list:
    """Wenner-alpha (all spacings) and dipole-dipole (unit dipole, all n) along every line."""
    out = []
    for line in spec.lines:
        n = len(line)
        for step in range(1, (n - 1) // 3 + 1):
            out += wenner_alpha(line, step)
        for k in range(1, n - 2):
            out += dipole_dipole(line, 1, k)
    seen = set()
    uniq = []
    for q in out:
        c = q.canonical()
        if c not in seen:
            seen.add(c)
            uniq.append(c)
    return uniq


def scenario_configs(spec: ScenarioSpec, full: bool = False):
    """Named arrays plus every ``stride``-th enumerated configuration (all of them if ``full``).

    Returns the configuration list and the size of the filtered enumeration.
    """
    layout = ElectrodeLayout(spec.positions)
    rows = enumerate_configs(layout, spec.k_max, return_k=False)
    total = len(rows)
    if full or spec.stride is None:
        picked = rows
    else:
        picked = rows[::spec.stride]
    seen = set()
    out = []
    for q in named_configs(spec) + list(picked):
        c = q.canonical()
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out, total


# ---------------------------------------------------------------------------
# global accumulation


def _current_pair_field(greens: GreensTable, x0: int, x1: int, potentials, sigma2v, liner_terms):
    sg = greens.sub_grad
    gx = sg[x0] - sg[x1] if x1 != ABSENT else sg[x0]
    per_b = {b: np.einsum("cnk,cnk->c", gx, sg[b]) * sigma2v for b in potentials}
    per_bl = {}
    if liner_terms is not None:
        tang_w, exch_w = liner_terms
        sl = greens.sub_grad_liner
        glx = sl[x0] - sl[x1] if x1 != ABSENT else sl[x0]
        wp = greens.w_liner_plus[x0] - (greens.w_liner_plus[x1] if x1 != ABSENT else 0.0)
        wm = greens.w_liner_minus[x0] - (greens.w_liner_minus[x1] if x1 != ABSENT else 0.0)
        for b in potentials:
            per_bl[b] = (tang_w * np.einsum("cnk,cnk->c", glx, sl[b])
                         + exch_w * (wp * greens.w_liner_plus[b] + wm * greens.w_liner_minus[b]))
    return per_b, per_bl


def accumulate_global(greens: GreensTable, configs, current: float = 1.0, side_weight: float = SIDE_WEIGHT,
                      threads: int | None = None) -> SensitivityField:
    """Sum of absolute raw quadrupole sensitivities over ``configs``.

    Configurations are grouped by current pair; for each pair the products
    with every needed potential electrode are formed once. Partial sums are
    combined in a fixed order, so the result does not depend on ``threads``.
    """
    configs = [q if isinstance(q, Quadrupole) else Quadrupole(*q) for q in configs]
    if not configs:
        raise ValueError("no configurations to accumulate")
    if greens.sub_grad is None:
        raise ValueError("table has no sub-cell gradients")
    system = greens.system
    mat = system.materials
    mesh = system.mesh
    sigma2v = mat.sigma ** 2 * mesh.domain.cell_volumes / 4.0
    liner_terms = None
    nl = mesh.liner.num_cells if mesh.liner is not None else 0
    if nl:
        eps = mat.liner_thickness
        area = mesh.liner.cell_volumes
        liner_terms = (eps * mat.sigma_liner ** 2 * area / 3.0, side_weight * eps * area)
    groups: dict = {}
    for q in configs:
        groups.setdefault((q.x0, q.x1), []).append(q)
    keys = sorted(groups, key=lambda k: (k[0], k[1] if k[1] != ABSENT else 1 << 30))

    def work(key):
        qs = groups[key]
        pots = sorted({i for q in qs for i in (q.y0, q.y1) if i != ABSENT})
        per_b, per_bl = _current_pair_field(greens, key[0], key[1], pots, sigma2v, liner_terms)
        d = np.zeros(mesh.domain.num_cells)
        lin = np.zeros(nl)
        for q in qs:
            s = per_b[q.y0] - per_b[q.y1] if q.y1 != ABSENT else per_b[q.y0].copy()
            d += np.abs(current * s)
            if nl:
                s = per_bl[q.y0] - per_bl[q.y1] if q.y1 != ABSENT else per_bl[q.y0]
                lin += np.abs(current * s)
        return d, lin

    d = np.zeros(mesh.domain.num_cells)
    lin = np.zeros(nl)
    workers = max(1, int(threads or 1))
    if workers == 1:
        results = map(work, keys)
        for pd, pl in results:
            d += pd
            lin += pl
    else:
        with ThreadPoolExecutor(workers) as pool:
            for pd, pl in pool.map(work, keys):
                d += pd
                lin += pl
    prov = tuple(q.as_tuple() for q in configs)
    return SensitivityField(d, lin, False, prov)


# ---------------------------------------------------------------------------
# sampling and metrics


class CellLocator:
    """Point location in a tetrahedral grid (barycentric test on nearby cells).

    Points on shared faces go to the lowest-index containing cell.
    """

    def __init__(self, grid, tol: float = 1e-9):
        if grid.dim != 3:
            raise ValueError("CellLocator needs the 3D grid")
        self.grid = grid
        self.tol = tol
        p = grid.nodes[grid.cells]
        self._p0 = p[:, 0]
        self._T = np.linalg.inv(np.transpose(p[:, 1:] - p[:, :1], (0, 2, 1)))
        self._tree = cKDTree(p.mean(axis=1))
        self._radius = np.max(np.linalg.norm(p - p.mean(axis=1)[:, None], axis=2))

    def _contains(self, pts, cand):
        lam = np.einsum("pcij,pcj->pci", self._T[cand], pts[:, None, :] - self._p0[cand])
        return np.all(lam >= -self.tol, axis=2) & (lam.sum(axis=2) <= 1.0 + self.tol)

    def locate(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(pts.shape[0], -1, dtype=np.int64)
        todo = np.arange(pts.shape[0])
        for k in (16, 64, 256):
            if not todo.size:
                break
            k = min(k, self.grid.num_cells)
            _, cand = self._tree.query(pts[todo], k=k)
            cand = np.asarray(cand).reshape(todo.size, -1)
            ok = self._contains(pts[todo], cand)
            hit = ok.any(axis=1)
            masked = np.where(ok, cand, np.iinfo(np.int64).max)
            out[todo[hit]] = masked[hit].min(axis=1)
            todo = todo[~hit]
        for i in todo:
            # any containing cell has its centroid within the largest circumradius
            cand = np.array(sorted(self._tree.query_ball_point(pts[i], self._radius + self.tol)), dtype=np.int64)
            if cand.size:
                ok = self._contains(pts[i:i + 1], cand[None])[0]
                if ok.any():
                    out[i] = cand[ok].min()
                    continue
            raise ValueError(f"point {pts[i].tolist()} lies outside the mesh")
        return out


def _values(field) -> np.ndarray:
    return field.domain if isinstance(field, SensitivityField) else np.asarray(field, dtype=float)


def slice_metrics(field, mesh: MixedDimMesh, depth_below_liner: float, window=None, n: int = 50,
                  reference_z: float | None = None, locator: CellLocator | None = None,
                  return_samples: bool = False) -> dict:
    """Min, max and mean of an ``n x n`` uniform sampling of a horizontal window.

    The slice lies ``depth_below_liner`` below ``reference_z`` (default: the
    liner bottom). ``window`` is ``((x0, x1), (y0, y1))``; by default the
    1 x 1 m square centered on the liner footprint.
    """
    vals = _values(field)
    if isinstance(field, SensitivityField) and not field.normalized:
        logger.warning("slice metrics on a raw (not per-volume) field")
    if reference_z is None:
        if mesh.liner is None or mesh.liner.num_cells == 0:
            raise ValueError("mesh has no liner; pass reference_z")
        reference_z = float(mesh.liner.nodes[:, 2].min())
    z = reference_z - depth_below_liner
    zmin = float(mesh.domain.nodes[:, 2].min())
    if z < zmin:
        raise ValueError(f"slice depth {z} lies below the domain bottom {zmin}")
    if window is None:
        if mesh.liner is not None and mesh.liner.num_cells:
            c = 0.5 * (mesh.liner.nodes[:, :2].min(axis=0) + mesh.liner.nodes[:, :2].max(axis=0))
        else:
            c = 0.5 * (mesh.domain.nodes[:, :2].min(axis=0) + mesh.domain.nodes[:, :2].max(axis=0))
        window = ((c[0] - 0.5, c[0] + 0.5), (c[1] - 0.5, c[1] + 0.5))
    (x0, x1), (y0, y1) = window
    u = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(x0 + u * (x1 - x0), y0 + u * (y1 - y0), indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), np.full(X.size, z)], axis=1)
    loc = locator or CellLocator(mesh.domain)
    s = vals[loc.locate(pts)]
    out = {"min": float(s.min()), "max": float(s.max()), "area_weighted_avg": float(s.mean())}
    if return_samples:
        return out, pts, s
    return out


def line_probe(field, mesh: MixedDimMesh, a, b, n: int = 201, locator: CellLocator | None = None):
    """Piecewise-constant samples of a cell field at ``n`` evenly spaced points from ``a`` to ``b``.

    Returns ``(points, values)``.
    """
    if n < 2:
        raise ValueError("need at least two samples")
    vals = _values(field)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    t = np.linspace(0.0, 1.0, n)
    pts = a + t[:, None] * (b - a)
    loc = locator or CellLocator(mesh.domain)
    return pts, vals[loc.locate(pts)]


def rmse_percent(numerical, analytic) -> float:
    """``100 * RMS(numerical - analytic) / RMS(analytic)``."""
    num = np.asarray(numerical, dtype=float)
    an = np.asarray(analytic, dtype=float)
    if num.shape != an.shape:
        raise ValueError("series must have equal length")
    ref = np.sqrt(np.mean(an ** 2))
    if ref == 0:
        raise ValueError("analytic series has zero RMS")
    return float(100.0 * np.sqrt(np.mean((num - an) ** 2)) / ref)


# ---------------------------------------------------------------------------
# artifacts


def _csv(points, values) -> str:
    rows = ["x,y,z,value"]
    rows += [",".join(repr(float(v)) for v in (*p, s)) for p, s in zip(points, values)]
    return "\n".join(rows) + "\n"


def read_probe_csv(text: str):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "x,y,z,value":
        raise ValueError("expected header x,y,z,value")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]]).reshape(-1, 4)
    return data[:, :3], data[:, 3]


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _finite(x):
    """JSON-safe copy (non-finite floats become strings)."""
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    if isinstance(x, float) and not np.isfinite(x):
        return repr(x)
    return x


def solve_scenario(spec: ScenarioSpec, threads: int | None = None, backend: str = "auto"):
    """Mesh, assemble, factorize and solve all Green's functions."""
    mesh = build_mesh(spec)
    mat = build_materials(spec, mesh)
    system = assemble_system(mesh, mat)
    fact = factorize(system, backend=backend, threads=threads)
    greens = solve_greens(fact, current=spec.current)
    return mesh, mat, greens


def run_scenario(spec: ScenarioSpec, out_dir=None, threads: int | None = None, full: bool = False,
                 backend: str = "auto", solved=None) -> dict:
    """Run one landfill scenario and return its summary.

    With ``out_dir`` the fields, probes, slices and ``summary.json`` are
    written there.
    """
    t0 = time.perf_counter()
    mesh, mat, greens = solved if solved is not None else solve_scenario(spec, threads, backend)
    configs, enumerated = scenario_configs(spec, full=full)
    raw = accumulate_global(greens, configs, spec.current, threads=threads)
    per_vol = volume_normalize(raw, mesh, mat.liner_thickness)
    loc = CellLocator(mesh.domain)
    ref_z = spec.liner.bottom if spec.liner is not None else float(spec.domain.hi[2]) - 0.1
    center = spec.liner.center if spec.liner is not None else np.zeros(3)
    slices = {}
    samples = {}
    for depth in SLICE_DEPTHS:
        m, pts, s = slice_metrics(per_vol, mesh, depth, reference_z=ref_z, locator=loc, return_samples=True,
                                  window=((center[0] - 0.5, center[0] + 0.5), (center[1] - 0.5, center[1] + 0.5)))
        slices[f"{depth:g}"] = m
        samples[f"{depth:g}"] = (pts, s)
    zt = float(spec.domain.hi[2])
    zb = float(spec.domain.lo[2])
    vpts, vvals = line_probe(per_vol, mesh, (center[0], center[1], zt), (center[0], center[1], zb), 301, loc)
    charge = greens.charge_balance()
    summary = {
        "rmse": {},
        "slices": slices,
        "counts": {
            "cells": int(mesh.domain.num_cells),
            "liner_cells": int(mesh.liner.num_cells) if mesh.liner is not None else 0,
            "electrodes": int(mesh.num_electrodes),
            "configurations": len(configs),
            "enumerated": int(enumerated),
        },
        "params": _finite(spec.to_dict()),
        "checks": {
            "reciprocity": greens.reciprocity_error(),
            "charge_balance": float(np.max(np.abs(charge - 1.0))),
        },
        "runtime_s": round(time.perf_counter() - t0, 3),
    }
    if out_dir is not None:
        out = Path(out_dir)
        dom = mesh.domain
        _write(out / "fields" / "sensitivity.vtk",
               write_vtk(dom.nodes, dom.cells, {"sensitivity": per_vol.domain, "raw": raw.domain,
                                                "rho": mat.rho}, title=spec.name))
        if mesh.liner is not None and mesh.liner.num_cells:
            lg = mesh.liner
            _write(out / "fields" / "liner.vtk",
                   write_vtk(lg.nodes, lg.cells, {"sensitivity": per_vol.liner, "raw": raw.liner}, title=spec.name))
        _write(out / "probes" / "vertical_center.csv", _csv(vpts, vvals))
        for key, (pts, s) in samples.items():
            _write(out / "slices" / f"slice_{key}.csv", _csv(pts, s))
        _write(out / "summary.json", _dump_json(summary))
    return summary


# ---------------------------------------------------------------------------
# validation


def validation_spec() -> ScenarioSpec:
    """Homogeneous 100 Ohm m half-space, 6 x 4 x 2 m, four electrodes 0.66 m apart."""
    return ScenarioSpec(
        name="validation",
        domain=Box((0.0, 0.0, 0.0), (6.0, 4.0, 2.0)),
        grading=Grading(near_electrode=0.05, near_liner=0.05, boundary=0.5, growth=1.47),
        electrodes=VALIDATION_ELECTRODES,
        rho_in=100.0,
        rho_out=100.0,
        lines=((0, 1, 2, 3),),
    )


def generate_validation_mesh(seed: int = 0) -> MixedDimMesh:
    """Regenerate the unstructured validation mesh (topology only)."""
    spec = validation_spec()
    g = spec.grading
    elec = [ElectrodeSpec(x, y, spec.electrode_length) for x, y in spec.electrodes]
    return build_unstructured_mesh(spec.domain, elec, g.near_electrode, g.boundary, g.growth, seed=seed)


def validation_fixture_text() -> str:
    return resources.files("mdsens").joinpath("data", VALIDATION_FIXTURE).read_text()


def load_validation_mesh() -> MixedDimMesh:
    """The shipped validation fixture, finalized."""
    return finalize(read_msh(validation_fixture_text()))


def write_validation_fixture(path) -> None:
    Path(path).write_text(write_msh(generate_validation_mesh()))


def validation_arrays() -> dict:
    """Wenner-alpha C1-P1-P2-C2 and dipole-dipole (n = 1) C2-C1-P1-P2 on the four electrodes."""
    return {
        "wenner_alpha": wenner_alpha([0, 1, 2, 3])[0],
        "dipole_dipole": dipole_dipole([0, 1, 2, 3], 1, 1)[0],
    }


def validation_line(depth: float, spec: ScenarioSpec | None = None, n: int = 301):
    """Horizontal probe below the array, from 0.5 m before the first to 0.5 m past the last electrode."""
    spec = spec or validation_spec()
    p = spec.positions
    z = float(spec.domain.hi[2]) - depth
    a = (p[:, 0].min() - 0.5, p[0, 1], z)
    b = (p[:, 0].max() + 0.5, p[0, 1], z)
    return a, b, n


def run_validation(out_dir=None, mesh: MixedDimMesh | None = None, threads: int | None = None,
                   backend: str = "auto") -> dict:
    """Numerical vs closed-form sensitivities on the validation fixture.

    The summary holds six RMSE values (two arrays x three depths) and a
    ``pass`` flag for the thresholded ones.
    """
    t0 = time.perf_counter()
    spec = validation_spec()
    mesh = mesh if mesh is not None else load_validation_mesh()
    mat = MaterialField.homogeneous(mesh, spec.rho_out)
    system = assemble_system(mesh, mat)
    fact = factorize(system, backend=backend, threads=threads)
    greens = solve_greens(fact, current=spec.current)
    loc = CellLocator(mesh.domain)
    pos = spec.positions
    rmse = {}
    fields = {}
    probes = {}
    for name, q in validation_arrays().items():
        f = volume_normalize(quadrupole_field(greens, q, current=spec.current), mesh)
        fields[name] = f
        rmse[name] = {}
        for depth in VALIDATION_DEPTHS:
            a, b, n = validation_line(depth, spec)
            pts, num = line_probe(f, mesh, a, b, n, loc)
            an = quadrupole_kernel(q, pts, spec.current, positions=pos)
            rmse[name][f"{depth:g}"] = rmse_percent(num, an)
            probes[(name, depth)] = (pts, num, an)
    failed = [f"{k[0]}@{k[1]:g}" for k, lim in VALIDATION_THRESHOLDS.items() if not rmse[k[0]][f"{k[1]:g}"] <= lim]
    summary = {
        "rmse": rmse,
        "thresholds": {f"{k[0]}@{k[1]:g}": v for k, v in VALIDATION_THRESHOLDS.items()},
        "failed": failed,
        "pass": not failed,
        "slices": {},
        "counts": {"cells": int(mesh.domain.num_cells), "electrodes": int(mesh.num_electrodes)},
        "params": _finite(spec.to_dict()),
        "checks": {
            "reciprocity": greens.reciprocity_error(),
            "charge_balance": float(np.max(np.abs(greens.charge_balance() - 1.0))),
        },
        "runtime_s": round(time.perf_counter() - t0, 3),
    }
    if out_dir is not None:
        out = Path(out_dir)
        dom = mesh.domain
        _write(out / "fields" / "validation.vtk",
               write_vtk(dom.nodes, dom.cells, {k: f.domain for k, f in fields.items()}, title="validation"))
        for (name, depth), (pts, num, an) in probes.items():
            _write(out / "probes" / f"{name}_{depth:g}_numerical.csv", _csv(pts, num))
            _write(out / "probes" / f"{name}_{depth:g}_analytic.csv", _csv(pts, an))
        # vertical section through the array
        x = np.linspace(pos[0, 0] - 0.5, pos[-1, 0] + 0.5, 81)
        z = float(spec.domain.hi[2]) - np.linspace(0.02, 1.0, 50)
        X, Z = np.meshgrid(x, z, indexing="ij")
        pts = np.stack([X.ravel(), np.full(X.size, pos[0, 1]), Z.ravel()], axis=1)
        cells = loc.locate(pts)
        for name, f in fields.items():
            _write(out / "slices" / f"{name}_vertical.csv", _csv(pts, f.domain[cells]))
        _write(out / "summary.json", _dump_json(summary))
    return summary
