"""Factorization, Green's-function solves, gradients and simulated readings."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
import scipy.sparse.csgraph as csgraph

from .fvm import DiscreteSystem, electrode_rhs
from .linsolve import FactorizationError, make_solver
from .mesh import FaceTag, SubdomainGrid

logger = logging.getLogger(__name__)

ABSENT = -1


class SingularSystemError(RuntimeError):
    """The block system has no unique solution."""


def _extended(m) -> sps.csr_matrix:
    m = m.tocsr()
    return sps.csr_matrix((m.data.astype(np.longdouble), m.indices, m.indptr), shape=m.shape)


@dataclass
class Factorization:
    """LU factors of a :class:`DiscreteSystem` plus an extended-precision copy
    of the matrix used for residuals during refinement."""

    system: DiscreteSystem
    lu: object
    _ext: sps.csr_matrix | None = None

    @property
    def backend(self) -> str:
        return self.lu.name

    def solve(self, rhs: np.ndarray, refine: int = 2) -> np.ndarray:
        """Direct solve with ``refine`` steps of mixed-precision refinement.

        Residuals are formed in long double and the iterate is kept in long
        double; corrections come from the double-precision factors. Inside a
        closed 1e15 Ohm m liner the potential sits near 1e12 V, and plain LU
        then loses charge balance at the 1e-6 level.
        """
        b = np.asarray(rhs, dtype=float)
        x = self.lu.solve(b).astype(np.longdouble)
        if refine:
            if self._ext is None:
                self._ext = _extended(self.system.matrix)
            for _ in range(refine):
                r = b - self._ext @ x
                x += self.lu.solve(np.asarray(r, dtype=float))
        return x


def _describe_dof(system: DiscreteSystem, dof: int) -> str:
    off = system.offsets
    for name in ("phi", "phi_liner", "j_liner"):
        s = off[name]
        if s.start <= dof < s.stop:
            return f"{name}[{dof - s.start}]"
    for e, s in enumerate(off["phi_electrode"]):
        if s.start <= dof < s.stop:
            return f"electrode {e} cell {dof - s.start}"
    for e, s in enumerate(off["j_electrode"]):
        if s.start <= dof < s.stop:
            return f"electrode {e} mortar cell {dof - s.start}"
    return f"dof {dof}"


def floating_dofs(system: DiscreteSystem) -> np.ndarray:
    """Unknowns in blocks that are not connected to any Dirichlet boundary."""
    A = system.matrix
    pattern = sps.csr_matrix((np.ones(A.nnz), A.indices, A.indptr), shape=A.shape)
    ncomp, labels = csgraph.connected_components(pattern, directed=False)
    dom = system.mesh.domain
    anchored = np.unique(dom.face_cells[dom.face_tags == FaceTag.OUTER, 0])
    if anchored.size == 0:
        return np.arange(A.shape[0])
    ok = np.zeros(ncomp, dtype=bool)
    ok[labels[system.offsets["phi"].start + anchored]] = True
    return np.flatnonzero(~ok[labels])


def factorize(system: DiscreteSystem, backend: str = "auto", threads: int | None = None) -> Factorization:
    """Sparse LU factorization, reused for all electrode solves.

    Raises
    ------
    SingularSystemError
        If a subsystem is floating (for instance an electrode without a
        mortar), the factorization hits a zero pivot, or a probe solve
        leaves a large residual.
    """
    bad = floating_dofs(system)
    if bad.size:
        raise SingularSystemError(
            f"singular system: {bad.size} unknowns are not connected to the Dirichlet boundary, "
            f"first at {_describe_dof(system, int(bad[0]))}"
        )
    try:
        lu = make_solver(system.matrix, backend, threads)
    except FactorizationError as exc:
        raise SingularSystemError(f"singular system: {exc}") from exc
    fact = Factorization(system, lu)
    # probe solve: perturbed pivots on a singular matrix show up as a residual
    rng = np.random.default_rng(0)
    b = rng.standard_normal(system.size)
    x = fact.solve(b)
    res = np.abs(np.asarray(b - fact._ext @ x, dtype=float))
    scale = np.abs(system.matrix) @ np.abs(np.asarray(x, dtype=float)) + np.abs(b)
    worst = int(np.argmax(res / scale))
    if not np.isfinite(res).all() or res[worst] > 1e-8 * scale[worst]:
        raise SingularSystemError(f"numerically singular system near {_describe_dof(system, worst)}")
    return fact


def cell_gradients(grid: SubdomainGrid, flux: np.ndarray, coefficient) -> np.ndarray:
    """Per-cell mean gradient from face fluxes (lowest-order Raviart-Thomas).

    ``flux`` is oriented out of ``face_cells[:, 0]`` and integrated over each
    face. The result is ``-(1/(K |c|)) sum_f F_out,f (x_f - x_c)``, exact for
    affine potentials and tangential on embedded grids.
    """
    flux = np.asarray(flux, dtype=float)
    if flux.shape[0] != grid.num_faces:
        raise ValueError(f"flux has {flux.shape[0]} rows, grid {grid.name!r} has {grid.num_faces} faces")
    K = np.broadcast_to(np.asarray(coefficient, dtype=float), (grid.num_cells,))
    cf = grid.cell_faces
    sign = np.where(grid.face_cells[cf, 0] == np.arange(grid.num_cells)[:, None], 1.0, -1.0)
    r = grid.face_centers[cf] - grid.cell_centers[:, None, :]  # (nc, d+1, 3)
    fo = flux[cf] * sign if flux.ndim == 1 else flux[cf] * sign[..., None]
    if flux.ndim == 1:
        s = np.einsum("cf,cfk->ck", fo, r)
        return -s / (K * grid.cell_volumes)[:, None]
    s = np.einsum("cfe,cfk->eck", fo, r)
    return -s / (K * grid.cell_volumes)[None, :, None]


def potential_gradients(system: DiscreteSystem, potential: np.ndarray) -> np.ndarray:
    """Gradient of a 3D cell potential with no-flux data on liner faces."""
    potential = np.asarray(potential, dtype=float)
    dom = system.mesh.domain
    if potential.shape[0] != dom.num_cells:
        raise ValueError(f"potential has {potential.shape[0]} values for {dom.num_cells} cells")
    return cell_gradients(dom, system.ops_domain.flux @ potential, system.materials.sigma)


@dataclass
class GreensTable:
    """Green's fields for unit-normalized injection at every electrode.

    Arrays are indexed ``[electrode, ...]``; values are per ampere of
    injected current (Ohm for potentials, 1/m^2 for exchange fields).
    ``current`` is the injection used for the solves.
    """

    system: DiscreteSystem
    current: float
    g: np.ndarray  # (ne, n3)
    g_liner: np.ndarray  # (ne, nl)
    g_electrodes: np.ndarray  # (ne, n_electrode_cells)
    w_liner_plus: np.ndarray  # (ne, nl)
    w_liner_minus: np.ndarray  # (ne, nl)
    w_electrodes: np.ndarray  # (ne, n_electrode_mortar)
    grad: np.ndarray  # (ne, n3, 3)
    grad_liner: np.ndarray  # (ne, nl, 3)
    sub_grad: np.ndarray | None  # (ne, n3, 4, 3), per sub-cell
    sub_grad_liner: np.ndarray | None  # (ne, nl, 3, 3)
    terminal: np.ndarray  # (ne, ne): terminal[a, b] = g^a at electrode b

    @property
    def num_electrodes(self) -> int:
        return self.terminal.shape[0]

    def pole_pole(self, a: int, b: int) -> float:
        if a == ABSENT or b == ABSENT:
            return 0.0
        return float(self.terminal[a, b])

    def charge_balance(self) -> np.ndarray:
        """Current leaving each source electrode through its mortar, per ampere."""
        out = np.empty(self.num_electrodes)
        for e in range(self.num_electrodes):
            m = self.system.mesh.electrode_interface(e)
            s = self.system.offsets["j_electrode"][e]
            base = self.system.offsets["j_electrodes"].start
            out[e] = -np.dot(m.measures, self.w_electrodes[e, s.start - base:s.stop - base])
        return out

    def reciprocity_error(self) -> float:
        T = self.terminal
        scale = np.maximum(np.abs(T), np.abs(T.T))
        off = ~np.eye(T.shape[0], dtype=bool)
        if not off.any():
            return 0.0
        return float(np.max(np.abs(T - T.T)[off] / scale[off]))


def solve_greens(fact: Factorization, electrodes=None, current: float = 1.0, chunk: int = 8) -> GreensTable:
    """Solve one unit-source problem per electrode with a shared factorization.

    Values in the returned table are per ampere; ``current`` is the injection
    used for the solves.
    """
    system = fact.system
    mesh = system.mesh
    ne = mesh.num_electrodes
    if electrodes is None:
        electrodes = range(ne)
    electrodes = list(electrodes)
    if sorted(electrodes) != list(range(ne)):
        raise ValueError("solve_greens needs every electrode exactly once")
    if current == 0:
        raise ValueError("injection current must be nonzero")
    off = system.offsets
    mat = system.materials
    has_liner = mesh.liner is not None and mesh.liner.num_cells > 0
    flux3 = _extended(system.ops_domain.flux)
    bflux3 = _extended(system.ops_domain.bound_flux @ system.liner_projection)
    fluxl = _extended(system.ops_liner.flux) if has_liner else None
    ops3 = system.ops_domain
    has_sub = ops3.sub_grad is not None
    if has_sub:
        sg3 = _extended(ops3.sub_grad)
        sgb3 = _extended(ops3.sub_grad_bound @ system.liner_projection)
        sub = np.empty((ne, mesh.domain.num_cells, 4, 3))
        if has_liner:
            sgl = _extended(system.ops_liner.sub_grad)
            sub_l = np.empty((ne, mesh.liner.num_cells, 3, 3))
        else:
            sub_l = np.zeros((ne, 0, 3, 3))
    else:
        sub = sub_l = None
    X = np.empty((system.size, ne))
    grad = np.empty((ne, mesh.domain.num_cells, 3))
    grad_l = np.zeros((ne, mesh.liner.num_cells if has_liner else 0, 3))
    # columns in blocks keep the extended-precision copies small
    for lo in range(0, ne, chunk):
        cols = electrodes[lo:lo + chunk]
        rhs = np.column_stack([electrode_rhs(system, e, current) for e in cols])
        Xc = fact.solve(rhs) / current
        if not np.all(np.isfinite(Xc)):
            raise SingularSystemError("solve produced non-finite values")
        q3 = flux3 @ Xc[off["phi"]] + bflux3 @ Xc[off["j_liner"]]
        grad[cols] = cell_gradients(mesh.domain, np.asarray(q3, dtype=float), mat.sigma)
        if has_liner:
            ql = np.asarray(fluxl @ Xc[off["phi_liner"]], dtype=float)
            grad_l[cols] = cell_gradients(mesh.liner, ql, mat.liner_thickness * mat.sigma_liner)
        if has_sub:
            v = np.asarray(sg3 @ Xc[off["phi"]] + sgb3 @ Xc[off["j_liner"]], dtype=float)
            sub[cols] = v.T.reshape(len(cols), -1, 4, 3)
            if has_liner:
                v = np.asarray(sgl @ Xc[off["phi_liner"]], dtype=float)
                sub_l[cols] = v.T.reshape(len(cols), -1, 3, 3)
        X[:, cols] = Xc
    g = X[off["phi"]].T.copy()
    gl = X[off["phi_liner"]].T.copy()
    tops = np.array([system.top_dof(e) for e in range(ne)], dtype=int)
    return GreensTable(
        system=system,
        current=float(current),
        g=g,
        g_liner=gl,
        g_electrodes=X[off["phi_electrodes"]].T.copy(),
        w_liner_plus=X[off["j_liner_plus"]].T.copy(),
        w_liner_minus=X[off["j_liner_minus"]].T.copy(),
        w_electrodes=X[off["j_electrodes"]].T.copy(),
        grad=grad,
        grad_liner=grad_l,
        sub_grad=sub,
        sub_grad_liner=sub_l,
        terminal=X[tops].T.copy(),
    )


def reading(greens: GreensTable, q, current: float = 1.0) -> float:
    """Simulated potential difference (V) for a quadrupole.

    ``q`` needs integer attributes ``x0, x1`` (current electrodes) and
    ``y0, y1`` (potential electrodes); ``-1`` marks a remote electrode.
    """
    idx = [q.x0, q.x1, q.y0, q.y1]
    ne = greens.num_electrodes
    for i in idx:
        if i != ABSENT and not 0 <= i < ne:
            raise IndexError(f"electrode {i} out of range (0..{ne - 1})")
    present = [i for i in idx if i != ABSENT]
    if len(set(present)) != len(present):
        raise ValueError(f"quadrupole {tuple(idx)} uses an electrode twice")
    if q.x0 == ABSENT and q.x1 == ABSENT:
        raise ValueError("quadrupole needs at least one current electrode")
    G = greens.pole_pole
    return current * (G(q.x0, q.y0) - G(q.x1, q.y0) - G(q.x0, q.y1) + G(q.x1, q.y1))
