"""Sensitivity fields built from Green's functions.

The sensitivity of a reading to the resistivity of cell ``i`` is
``d(delta phi)/d(rho_i)``. For a pole-pole pair ``(a, b)``

    3D cell:     I sigma_i^2 V_i grad g^a . grad g^b
    liner cell:  I eps sigma_i^2 A_i grad g^a_l . grad g^b_l
                 + I (eps / 2) A_i sum_sides w^a_s w^b_s

The liner exchange term carries ``eps/2`` per side because each side of the
liner holds half of the through-thickness resistance.

Two quadratures are available for the gradient products. ``"subcell"``
(default) averages the products of the MPFA sub-cell gradients over the
``d + 1`` sub-cells, which is the exact derivative of the discrete reading.
``"centroid"`` multiplies the cell-mean (RT0) gradients; it converges to the
same limit but differs by several percent on coarse meshes.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .fvm import MaterialField, assemble_system, electrode_rhs
from .greens import ABSENT, GreensTable, factorize
from .mesh import MixedDimMesh

# weight of the per-side exchange product relative to eps * A
SIDE_WEIGHT = 0.5


@dataclass(frozen=True)
class SensitivityField:
    """Per-cell sensitivities of the 3D grid and the liner.

    Raw values are in V S/m (A/m per ampere of injection); per-volume values
    are divided by the cell volume (``eps * A`` for liner cells).
    """

    domain: np.ndarray
    liner: np.ndarray
    normalized: bool = False
    provenance: tuple = field(default_factory=tuple)

    @property
    def units(self) -> str:
        return "(V S/m)/m^3" if self.normalized else "V S/m"

    def __neg__(self):
        return replace(self, domain=-self.domain, liner=-self.liner)

    def scaled(self, factor: float) -> "SensitivityField":
        return replace(self, domain=self.domain * factor, liner=self.liner * factor)


def _check_pair(greens: GreensTable, a: int, b: int):
    ne = greens.num_electrodes
    for e in (a, b):
        if not 0 <= e < ne:
            raise IndexError(f"electrode {e} out of range (0..{ne - 1})")
    if a == b:
        raise ValueError("pole-pole sensitivity needs two distinct electrodes")


def _dot(greens: GreensTable, a, b, liner: bool, quadrature: str) -> np.ndarray:
    """Cell-wise ``grad a . grad b`` for a pair of (combined) Green fields.

    ``a`` and ``b`` are dicts mapping electrode index to weight.
    """
    if quadrature == "subcell":
        src = greens.sub_grad_liner if liner else greens.sub_grad
        if src is None:
            raise ValueError("table has no sub-cell gradients; assemble with subcell=True")
    elif quadrature == "centroid":
        src = greens.grad_liner if liner else greens.grad
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    ga = sum(w * src[e] for e, w in a.items())
    gb = sum(w * src[e] for e, w in b.items())
    if quadrature == "subcell":
        return np.einsum("cnk,cnk->c", ga, gb) / ga.shape[1]
    return np.einsum("ck,ck->c", ga, gb)


def pole_pole_field(greens: GreensTable, a: int, b: int, materials: MaterialField | None = None,
                    current: float = 1.0, side_weight: float = SIDE_WEIGHT,
                    quadrature: str = "subcell") -> SensitivityField:
    """Sensitivity of the pole-pole reading with current at ``a`` and potential at ``b``."""
    _check_pair(greens, a, b)
    if materials is None:
        materials = greens.system.materials
    mesh = greens.system.mesh
    dom = mesh.domain
    s3 = current * materials.sigma ** 2 * dom.cell_volumes * _dot(greens, {a: 1.0}, {b: 1.0}, False, quadrature)
    if mesh.liner is not None and mesh.liner.num_cells:
        eps = materials.liner_thickness
        area = mesh.liner.cell_volumes
        tang = eps * materials.sigma_liner ** 2 * area * _dot(greens, {a: 1.0}, {b: 1.0}, True, quadrature)
        ww = greens.w_liner_plus[a] * greens.w_liner_plus[b] + greens.w_liner_minus[a] * greens.w_liner_minus[b]
        sl = current * (tang + side_weight * eps * area * ww)
    else:
        sl = np.zeros(0)
    return SensitivityField(s3, sl, False, (("pole-pole", a, b),))


def _terms(q):
    return [(q.x0, q.y0, 1.0), (q.x1, q.y0, -1.0), (q.x0, q.y1, -1.0), (q.x1, q.y1, 1.0)]


def quadrupole_field(greens: GreensTable, q, materials: MaterialField | None = None,
                     current: float = 1.0, side_weight: float = SIDE_WEIGHT,
                     quadrature: str = "subcell") -> SensitivityField:
    """Signed combination ``S(x0,y0) - S(x1,y0) - S(x0,y1) + S(x1,y1)``; remote terms drop out."""
    present = [i for i in (q.x0, q.x1, q.y0, q.y1) if i != ABSENT]
    if len(set(present)) != len(present):
        raise ValueError(f"quadrupole {(q.x0, q.x1, q.y0, q.y1)} uses an electrode twice")
    if (q.x0 == ABSENT and q.x1 == ABSENT) or (q.y0 == ABSENT and q.y1 == ABSENT):
        raise ValueError("quadrupole needs a current and a potential electrode")
    mesh = greens.system.mesh
    d = np.zeros(mesh.domain.num_cells)
    lin = np.zeros(mesh.liner.num_cells if mesh.liner is not None else 0)
    for a, b, sgn in _terms(q):
        if a == ABSENT or b == ABSENT:
            continue
        f = pole_pole_field(greens, a, b, materials, current, side_weight, quadrature)
        d += sgn * f.domain
        lin += sgn * f.liner
    return SensitivityField(d, lin, False, ((q.x0, q.x1, q.y0, q.y1),))


def global_field(fields) -> SensitivityField:
    """Cell-wise sum of absolute values, accumulated in input order."""
    fields = list(fields)
    if not fields:
        raise ValueError("no fields to accumulate")
    flags = {f.normalized for f in fields}
    if len(flags) > 1:
        raise ValueError("cannot mix raw and per-volume fields")
    d = np.zeros_like(fields[0].domain)
    lin = np.zeros_like(fields[0].liner)
    prov = []
    for f in fields:
        if f.domain.shape != d.shape or f.liner.shape != lin.shape:
            raise ValueError("fields belong to different meshes")
        d += np.abs(f.domain)
        lin += np.abs(f.liner)
        prov.extend(f.provenance)
    return SensitivityField(d, lin, fields[0].normalized, tuple(prov))


def cell_measures(mesh: MixedDimMesh, liner_thickness: float):
    """Physical volume of every 3D cell and of every liner cell (``eps * A``)."""
    lv = mesh.liner.cell_volumes * liner_thickness if mesh.liner is not None else np.zeros(0)
    return mesh.domain.cell_volumes, lv


def volume_normalize(f: SensitivityField, mesh: MixedDimMesh, liner_thickness: float = 2e-3) -> SensitivityField:
    if f.normalized:
        raise ValueError("field is already normalized")
    v3, vl = cell_measures(mesh, liner_thickness)
    return replace(f, domain=f.domain / v3, liner=f.liner / vl if vl.size else f.liner, normalized=True)


def _reading(mesh, materials, q, current, backend):
    """Forward-model a single quadrupole (one assembly, one solve) in long double."""
    system = assemble_system(mesh, materials, subcell=False)
    fact = factorize(system, backend)
    b = np.zeros(system.size)
    if q.x0 != ABSENT:
        b += electrode_rhs(system, q.x0, current)
    if q.x1 != ABSENT:
        b -= electrode_rhs(system, q.x1, current)
    x = fact.solve(b)
    v = 0.0
    if q.y0 != ABSENT:
        v += x[system.top_dof(q.y0)]
    if q.y1 != ABSENT:
        v -= x[system.top_dof(q.y1)]
    return v


def quadrupole_reading(mesh: MixedDimMesh, materials: MaterialField, q, current: float = 1.0,
                       backend: str = "auto") -> float:
    """Forward-model a single quadrupole (one assembly, one solve)."""
    return float(_reading(mesh, materials, q, current, backend))


def fd_sensitivity(mesh: MixedDimMesh, materials: MaterialField, q, cell: int, delta: float,
                   grid: str = "domain", current: float = 1.0, backend: str = "auto") -> float:
    """Central difference of a reading with respect to one cell resistivity."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    rho = materials.rho if grid == "domain" else materials.rho_liner
    if grid not in ("domain", "liner"):
        raise ValueError(f"unknown grid {grid!r}")
    if not 0 <= cell < rho.size:
        raise IndexError(f"cell {cell} out of range for grid {grid!r}")
    if rho[cell] - delta <= 0:
        raise ValueError("delta must be smaller than the cell resistivity")
    up = _reading(mesh, materials.with_cell(grid, cell, rho[cell] + delta), q, current, backend)
    dn = _reading(mesh, materials.with_cell(grid, cell, rho[cell] - delta), q, current, backend)
    return float((up - dn) / (2.0 * delta))
