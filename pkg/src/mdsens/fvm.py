"""Assembly of the mixed-dimensional saddle-point system.

Unknowns are ordered as ``[phi, phi_liner, phi_electrodes, j_liner, j_electrodes]``;
``j_liner`` stacks the PLUS mortar cells before the MINUS ones. The block
layout is::

    [ A                  -B_l^T  -B_g^T ] [phi  ]   [0   ]
    [      A_l           -C_l^T         ] [phi_l] = [0   ]
    [           A_g              -C_g^T ] [phi_g]   [j_bc]
    [ B_l  C_l           M_l            ] [j_l  ]   [0   ]
    [ B_g       C_g              M_g    ] [j_g  ]   [0   ]

Mortar exchange fields are positive from the 3D grid into the lower-dimensional
object. Conservation rows are integrated over cells (units of A).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from . import mpfa
from .mesh import FaceTag, MixedDimMesh, MortarKind


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class MaterialField:
    """Resistivities (Ohm m) and reduction parameters (m).

    ``rho_electrode`` may be a scalar or one value per electrode.
    """

    rho: np.ndarray
    rho_liner: np.ndarray
    rho_electrode: np.ndarray
    liner_thickness: float = 2e-3
    electrode_radius: float = 2.5e-3

    def __post_init__(self):
        for name in ("rho", "rho_liner", "rho_electrode"):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if np.any(~np.isfinite(v)) or np.any(v <= 0):
                raise ValueError(f"{name}: resistivities must be positive and finite")
            object.__setattr__(self, name, v)
        if not self.liner_thickness > 0 or not self.electrode_radius > 0:
            raise ValueError("liner thickness and electrode radius must be positive")

    @classmethod
    def homogeneous(cls, mesh: MixedDimMesh, rho: float, rho_liner: float = 1e15,
                    rho_electrode: float = 2e-7, **kw) -> "MaterialField":
        nl = mesh.liner.num_cells if mesh.liner is not None else 0
        return cls(
            rho=np.full(mesh.domain.num_cells, float(rho)),
            rho_liner=np.full(nl, float(rho_liner)),
            rho_electrode=np.full(mesh.num_electrodes, float(rho_electrode)),
            **kw,
        )

    def scaled(self, factor: float) -> "MaterialField":
        """All resistivities multiplied by ``factor``."""
        return dataclasses.replace(self, rho=self.rho * factor, rho_liner=self.rho_liner * factor,
                                   rho_electrode=self.rho_electrode * factor)

    def with_cell(self, grid: str, cell: int, value: float) -> "MaterialField":
        """Copy with a single 3D (``grid="domain"``) or liner cell changed."""
        if grid == "domain":
            rho = self.rho.copy()
            rho[cell] = value
            return dataclasses.replace(self, rho=rho)
        if grid == "liner":
            rl = self.rho_liner.copy()
            rl[cell] = value
            return dataclasses.replace(self, rho_liner=rl)
        raise ValueError(f"unknown grid {grid!r}")

    @property
    def sigma(self) -> np.ndarray:
        return 1.0 / self.rho

    @property
    def sigma_liner(self) -> np.ndarray:
        return 1.0 / self.rho_liner

    def electrode_rho(self, e: int) -> float:
        r = self.rho_electrode
        return float(r[e] if r.size > 1 else r[0])


@dataclass
class DiscreteSystem:
    matrix: sps.csc_matrix
    mesh: MixedDimMesh
    materials: MaterialField
    offsets: dict
    ops_domain: mpfa.MpfaOperators
    ops_liner: mpfa.MpfaOperators | None
    ops_electrodes: list
    liner_projection: sps.csr_matrix
    blocks: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def block(self, name: str) -> slice:
        return self.offsets[name]

    def electrode_cells(self, e: int) -> slice:
        return self.offsets["phi_electrode"][e]

    def electrode_mortar(self, e: int) -> slice:
        return self.offsets["j_electrode"][e]

    def top_dof(self, e: int) -> int:
        """Global dof of the topmost cell of electrode ``e``."""
        eg = self.mesh.electrodes[e]
        top = int(np.argmax(eg.cell_centers[:, 2]))
        return self.electrode_cells(e).start + top


def assemble_subdomain(grid, coefficient, dirichlet_faces=None, subcell=False):
    """Cell-centered MPFA stiffness and flux operators of one grid.

    Returns ``(stiffness, operators)``; ``operators.flux`` maps cell
    potentials to face fluxes.
    """
    ops = mpfa.discretize(grid, coefficient, dirichlet_faces, subcell=subcell)
    return ops.stiffness, ops


def _interface_rows(resistance):
    """Row scaling of the interface law ``R j + phi_low - phi_high = 0``.

    Rows with ``R >= 1`` are divided by ``R``. Returns the coefficient on
    ``j`` and on the potentials.
    """
    R = np.asarray(resistance, dtype=float)
    big = R >= 1.0
    cj = np.where(big, 1.0, R)
    cphi = np.where(big, 1.0 / R, 1.0)
    return cj, cphi


def _liner_projection(mesh: MixedDimMesh):
    dom = mesh.domain
    lin_ifs = mesh.liner_interfaces()
    if not lin_ifs:
        return sps.csr_matrix((dom.num_faces, 0)), np.zeros(0, dtype=np.int64)
    faces = np.concatenate([m.high_entities for m in lin_ifs])
    n = faces.size
    P = sps.csr_matrix((dom.face_areas[faces], (faces, np.arange(n))), shape=(dom.num_faces, n))
    return P, faces


def assemble_couplings(mesh: MixedDimMesh, materials: MaterialField, ops_domain=None):
    """Mortar blocks ``B``, ``C``, ``M`` for the liner and the electrodes.

    Returns a dict with keys ``B_l, C_l, M_l, Bt_l, Ct_l`` and the electrode
    counterparts ``B_g, C_g, M_g, Bt_g, Ct_g``; ``Bt``/``Ct`` are the blocks
    that appear (with their sign) in the conservation rows.
    """
    if not mesh.has_mortars:
        raise AssemblyError("mesh has no mortar interfaces; run build_mortars first")
    dom = mesh.domain
    n3 = dom.num_cells
    nl = mesh.liner.num_cells if mesh.liner is not None else 0
    if ops_domain is None:
        ops_domain = mpfa.discretize(dom, materials.sigma, dom.face_tags == FaceTag.OUTER)
    P, faces = _liner_projection(mesh)
    nm = faces.size
    out = {}
    if nm:
        lin_ifs = mesh.liner_interfaces()
        low = np.concatenate([m.low_cells for m in lin_ifs])
        eps = materials.liner_thickness
        R = 0.5 * eps * materials.rho_liner[low]
        cj, cphi = _interface_rows(R)
        trace_u = ops_domain.bound_pot_cell[faces]
        trace_j = mpfa._prune((ops_domain.bound_pot_face @ P)[faces])
        out["M_l"] = (sps.diags(cj) - sps.diags(cphi) @ trace_j).tocsr()
        out["B_l"] = (-sps.diags(cphi) @ trace_u).tocsr()
        out["C_l"] = sps.csr_matrix((cphi, (np.arange(nm), low)), shape=(nm, nl))
        out["Bt_l"] = mpfa._prune(ops_domain.div @ ops_domain.bound_flux @ P)
        area = mesh.liner.cell_volumes[low]
        out["Ct_l"] = sps.csr_matrix((-area, (low, np.arange(nm))), shape=(nl, nm))
    else:
        out["M_l"] = sps.csr_matrix((0, 0))
        out["B_l"] = sps.csr_matrix((0, n3))
        out["C_l"] = sps.csr_matrix((0, nl))
        out["Bt_l"] = sps.csr_matrix((n3, 0))
        out["Ct_l"] = sps.csr_matrix((nl, 0))
    # electrodes
    ne_cells = [eg.num_cells for eg in mesh.electrodes]
    ecell_off = np.concatenate([[0], np.cumsum(ne_cells)]).astype(int)
    rows_m, hosts, ecells, lens, rhos = [], [], [], [], []
    mort_off = [0]
    for e in range(mesh.num_electrodes):
        m = mesh.electrode_interface(e)
        if m is None:
            mort_off.append(mort_off[-1])
            continue
        rows_m.append(np.arange(m.num_cells) + mort_off[-1])
        hosts.append(m.high_entities)
        ecells.append(m.low_cells + ecell_off[e])
        lens.append(m.measures)
        rhos.append(np.full(m.num_cells, materials.electrode_rho(e)))
        mort_off.append(mort_off[-1] + m.num_cells)
    nmg = mort_off[-1]
    neg = ecell_off[-1]
    if nmg:
        r = np.concatenate(rows_m)
        h = np.concatenate(hosts)
        c = np.concatenate(ecells)
        ln = np.concatenate(lens)
        cj, cphi = _interface_rows(np.concatenate(rhos))
        out["M_g"] = sps.diags(cj).tocsr()
        out["B_g"] = sps.csr_matrix((-cphi, (r, h)), shape=(nmg, n3))
        out["C_g"] = sps.csr_matrix((cphi, (r, c)), shape=(nmg, neg))
        out["Bt_g"] = sps.csr_matrix((ln, (h, r)), shape=(n3, nmg))
        out["Ct_g"] = sps.csr_matrix((-ln, (c, r)), shape=(neg, nmg))
    else:
        out["M_g"] = sps.csr_matrix((0, 0))
        out["B_g"] = sps.csr_matrix((0, n3))
        out["C_g"] = sps.csr_matrix((0, neg))
        out["Bt_g"] = sps.csr_matrix((n3, 0))
        out["Ct_g"] = sps.csr_matrix((neg, 0))
    out["electrode_mortar_offsets"] = mort_off
    out["electrode_cell_offsets"] = ecell_off
    out["liner_projection"] = P
    return out


def _check_sizes(mesh, materials):
    nl = mesh.liner.num_cells if mesh.liner is not None else 0
    if materials.rho.size != mesh.domain.num_cells:
        raise AssemblyError(f"rho has {materials.rho.size} values for {mesh.domain.num_cells} cells")
    if materials.rho_liner.size != nl:
        raise AssemblyError(f"rho_liner has {materials.rho_liner.size} values for {nl} liner cells")
    if materials.rho_electrode.size not in (1, mesh.num_electrodes) and mesh.num_electrodes:
        raise AssemblyError("rho_electrode must be scalar or one value per electrode")


def assemble_system(mesh: MixedDimMesh, materials: MaterialField, subcell: bool = True) -> DiscreteSystem:
    """Assemble the full block system.

    Homogeneous Dirichlet data on OUTER 3D faces, zero flux on TOP faces,
    zero flux on the liner boundary and at the electrode tips. The injected
    current enters through :func:`electrode_rhs`. ``subcell`` keeps the
    sub-cell gradient operators of the 3D grid and the liner, which the
    sensitivity computation needs.
    """
    _check_sizes(mesh, materials)
    if not mesh.has_mortars:
        raise AssemblyError("mesh has no mortar interfaces; run build_mortars first")
    dom = mesh.domain
    A, ops3 = assemble_subdomain(dom, materials.sigma, dom.face_tags == FaceTag.OUTER, subcell)
    cpl = assemble_couplings(mesh, materials, ops3)
    n3 = dom.num_cells
    if mesh.liner is not None and mesh.liner.num_cells:
        A_l, opsl = assemble_subdomain(mesh.liner, materials.liner_thickness * materials.sigma_liner,
                                       subcell=subcell)
    else:
        A_l, opsl = sps.csr_matrix((0, 0)), None
    nl = A_l.shape[0]
    ops_e = []
    A_e = []
    area = np.pi * materials.electrode_radius ** 2
    for e, eg in enumerate(mesh.electrodes):
        Ae, oe = assemble_subdomain(eg, area / materials.electrode_rho(e))
        A_e.append(Ae)
        ops_e.append(oe)
    A_g = sps.block_diag(A_e, format="csr") if A_e else sps.csr_matrix((0, 0))
    ng = A_g.shape[0]
    nml = cpl["M_l"].shape[0]
    nmg = cpl["M_g"].shape[0]

    blocks = [
        [A, None, None, cpl["Bt_l"], cpl["Bt_g"]],
        [None, A_l, None, cpl["Ct_l"], None],
        [None, None, A_g, None, cpl["Ct_g"]],
        [cpl["B_l"], cpl["C_l"], None, cpl["M_l"], None],
        [cpl["B_g"], None, cpl["C_g"], None, cpl["M_g"]],
    ]
    sizes = [n3, nl, ng, nml, nmg]
    keep = [i for i, s in enumerate(sizes) if s > 0]
    mat = sps.bmat([[blocks[i][j] if blocks[i][j] is not None else sps.csr_matrix((sizes[i], sizes[j]))
                     for j in keep] for i in keep], format="csc")
    off = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    ecell = cpl["electrode_cell_offsets"]
    emort = cpl["electrode_mortar_offsets"]
    offsets = {
        "phi": slice(off[0], off[1]),
        "phi_liner": slice(off[1], off[2]),
        "phi_electrodes": slice(off[2], off[3]),
        "j_liner": slice(off[3], off[4]),
        "j_liner_plus": slice(off[3], off[3] + nml // 2),
        "j_liner_minus": slice(off[3] + nml // 2, off[4]),
        "j_electrodes": slice(off[4], off[5]),
        "phi_electrode": [slice(off[2] + ecell[e], off[2] + ecell[e + 1]) for e in range(mesh.num_electrodes)],
        "j_electrode": [slice(off[4] + emort[e], off[4] + emort[e + 1]) for e in range(mesh.num_electrodes)],
    }
    named = dict(zip(["A", "A_l", "A_g"], [A, A_l, A_g]))
    named.update({k: cpl[k] for k in ("B_l", "C_l", "M_l", "Bt_l", "Ct_l", "B_g", "C_g", "M_g", "Bt_g", "Ct_g")})
    return DiscreteSystem(
        matrix=mat,
        mesh=mesh,
        materials=materials,
        offsets=offsets,
        ops_domain=ops3,
        ops_liner=opsl,
        ops_electrodes=ops_e,
        liner_projection=cpl["liner_projection"],
        blocks=named,
    )


def electrode_rhs(system: DiscreteSystem, electrode: int, current: float = 1.0) -> np.ndarray:
    """Right-hand side injecting ``current`` (A) at the top of one electrode."""
    if not 0 <= electrode < system.mesh.num_electrodes:
        raise IndexError(f"electrode {electrode} out of range (0..{system.mesh.num_electrodes - 1})")
    b = np.zeros(system.size)
    b[system.top_dof(electrode)] = current
    return b


def face_fluxes(system: DiscreteSystem, x: np.ndarray, grid: str = "domain", electrode: int | None = None,
                injected: float = 0.0) -> np.ndarray:
    """Face fluxes (A) of one grid from a full solution vector.

    ``injected`` is the current entering the top of ``electrode`` (only used
    for electrode grids).
    """
    off = system.offsets
    if grid == "domain":
        ops = system.ops_domain
        return ops.flux @ x[off["phi"]] + ops.bound_flux @ (system.liner_projection @ x[off["j_liner"]])
    if grid == "liner":
        return system.ops_liner.flux @ x[off["phi_liner"]]
    if grid == "electrode":
        ops = system.ops_electrodes[electrode]
        eg = system.mesh.electrodes[electrode]
        q = ops.flux @ x[off["phi_electrode"][electrode]]
        q[eg.face_tags == FaceTag.TOP] = -injected
        return q
    raise ValueError(f"unknown grid {grid!r}")


def conservation_residual(system: DiscreteSystem, x: np.ndarray) -> np.ndarray:
    """Per 3D cell: net outward face flux plus current lost to electrodes."""
    off = system.offsets
    q = face_fluxes(system, x)
    res = system.ops_domain.div @ q
    res += system.blocks["Bt_g"] @ x[off["j_electrodes"]]
    return res
