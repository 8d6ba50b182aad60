"""MPFA-O discretization on simplicial grids of dimension 1, 2 and 3.

The scheme works per interaction region (all sub-cells around one node). In
every sub-cell the potential is affine; its gradient lives in the tangent
space of the cell, which makes the same code valid for folded 2D surfaces
and for 1D segments embedded in 3D. Flux continuity and potential continuity
are imposed at one point per sub-face, at ``x_f + eta (x_v - x_f)``. With
``eta = 1/(d+1)`` the cell-centered stiffness is symmetric on simplices, which
is what makes discrete reciprocity hold.

The result is a set of linear operators

    face_flux      = flux @ u + bound_flux @ b + dir_flux @ g
    face_potential = bound_pot_cell @ u + bound_pot_face @ b + dir_pot @ g

where ``u`` holds cell potentials, ``b`` the outward Neumann flux per face and
``g`` Dirichlet values at the grid nodes (interpolated linearly to the
continuity points). Face fluxes are oriented out of ``face_cells[:, 0]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .mesh import SubdomainGrid, cell_conormals, tangent_bases



@dataclass
class MpfaOperators:
    flux: sps.csr_matrix
    bound_flux: sps.csr_matrix
    bound_pot_cell: sps.csr_matrix
    bound_pot_face: sps.csr_matrix
    dir_flux: sps.csr_matrix
    dir_pot: sps.csr_matrix
    div: sps.csr_matrix
    # gradient of every sub-cell (cell, local node) in global coordinates;
    # row (c * (d + 1) + i) * 3 + k holds component k for node i of cell c
    sub_grad: sps.csr_matrix | None = None
    sub_grad_bound: sps.csr_matrix | None = None

    @property
    def stiffness(self) -> sps.csr_matrix:
        return (self.div @ self.flux).tocsr()


def divergence(g: SubdomainGrid) -> sps.csr_matrix:
    """Cell-by-face incidence: +1 for the owning cell, -1 for the other one."""
    fc = g.face_cells
    f = np.arange(g.num_faces)
    inner = fc[:, 1] >= 0
    rows = np.concatenate([fc[:, 0], fc[inner, 1]])
    cols = np.concatenate([f, f[inner]])
    vals = np.concatenate([np.ones(g.num_faces), -np.ones(inner.sum())])
    return sps.csr_matrix((vals, (rows, cols)), shape=(g.num_cells, g.num_faces))


def _node_incidence(index_array, num_nodes):
    n, k = index_array.shape
    rows = index_array.ravel()
    cols = np.repeat(np.arange(n), k)
    return sps.csr_matrix((np.ones(rows.size, dtype=bool), (rows, cols)), shape=(num_nodes, n))


def _prune(m: sps.csr_matrix, rel: float = 1e-14) -> sps.csr_matrix:
    m = m.tocsr()
    m.sum_duplicates()
    if m.nnz == 0:
        return m
    rowmax = np.maximum.reduceat(np.abs(m.data), m.indptr[:-1][np.diff(m.indptr) > 0])
    scale = np.zeros(m.shape[0])
    scale[np.diff(m.indptr) > 0] = rowmax
    row_of = np.repeat(np.arange(m.shape[0]), np.diff(m.indptr))
    m.data[np.abs(m.data) < rel * scale[row_of]] = 0.0
    m.eliminate_zeros()
    return m


def discretize(g: SubdomainGrid, coefficient, dirichlet_faces=None, eta: float | None = None,
               subcell: bool = False) -> MpfaOperators:
    """Assemble MPFA-O operators for a scalar conductivity per cell.

    Parameters
    ----------
    g : SubdomainGrid
        Grid with geometry.
    coefficient : array_like
        Positive conductivity per cell (already scaled by the cross-section
        for lower-dimensional grids).
    dirichlet_faces : array_like of bool, optional
        Boundary faces carrying Dirichlet data; all other boundary faces are
        Neumann.
    subcell : bool
        Also build the sub-cell gradient operators (cell potentials and
        Neumann data to the piecewise gradients of the interaction regions).
        The exact derivative of the discrete energy with respect to a cell
        coefficient is the sub-cell sum of gradient products, each weighted
        by ``|c| / (d + 1)``.
    """
    if not g.has_geometry:
        raise ValueError(f"grid {g.name!r} has no geometry")
    K = np.broadcast_to(np.asarray(coefficient, dtype=float), (g.num_cells,))
    if np.any(~np.isfinite(K)) or np.any(K <= 0):
        raise ValueError(f"grid {g.name!r}: conductivity must be positive and finite")
    nf, nc, d = g.num_faces, g.num_cells, g.dim
    if eta is None:
        eta = 1.0 / (d + 1)
    is_dir = np.zeros(nf, dtype=bool)
    if dirichlet_faces is not None:
        is_dir = np.asarray(dirichlet_faces, dtype=bool).copy()
    bnd = g.face_cells[:, 1] < 0
    is_dir &= bnd
    is_neu = bnd & ~is_dir

    E = tangent_bases(g)  # (nc, 3, d)
    con = cell_conormals(g)  # (nc, d+1, 3)
    # (cell, local face) -> n . E, in tangent coordinates
    nE = np.einsum("cfk,ckd->cfd", con, E)
    cf = g.cell_faces
    # local position of a face in each adjacent cell
    loc0 = np.argmax(cf[g.face_cells[:, 0]] == np.arange(nf)[:, None], axis=1)
    c1 = g.face_cells[:, 1]
    loc1 = np.zeros(nf, dtype=np.int64)
    inner = c1 >= 0
    loc1[inner] = np.argmax(cf[c1[inner]] == np.arange(nf)[inner, None], axis=1)

    node_cells = _node_incidence(g.cells, g.num_nodes)
    node_faces = _node_incidence(g.face_nodes, g.num_nodes)
    n_sub = g.face_nodes.shape[1]
    sub_area = g.face_areas / n_sub
    xc = g.cell_centers
    xf = g.face_centers
    xn = g.nodes

    fr, fcol, fv = [], [], []
    br, bcol, bv = [], [], []
    pr, pcol, pv = [], [], []
    qr, qcol, qv = [], [], []
    dr, dcol, dv = [], [], []
    sr, scol, sv = [], [], []
    gr, gcol, gv = [], [], []
    hr, hcol, hv = [], [], []

    for v in range(g.num_nodes):
        C = node_cells.indices[node_cells.indptr[v]:node_cells.indptr[v + 1]]
        F = node_faces.indices[node_faces.indptr[v]:node_faces.indptr[v + 1]]
        if C.size == 0:
            continue
        C = np.sort(C)
        F = np.sort(F)
        pos = {c: i for i, c in enumerate(C.tolist())}
        nu = d * C.size
        f_c0 = g.face_cells[F, 0]
        f_c1 = g.face_cells[F, 1]
        f_inner = f_c1 >= 0
        n_rows = F.size + int(f_inner.sum())
        if n_rows != nu:
            raise RuntimeError(f"grid {g.name!r}: inconsistent interaction region at node {v}")
        xbar = xf[F] + eta * (xn[v] - xf[F])
        As = sub_area[F]
        M = np.zeros((nu, nu))
        Ru = np.zeros((nu, C.size))
        Rb = np.zeros((nu, F.size))
        # Dirichlet data at the continuity point: (1 - eta) * mean(face nodes) + eta * node v
        Fn = g.face_nodes[F]
        Nn = np.unique(Fn)
        npos = np.searchsorted(Nn, Fn)
        Rg = np.zeros((nu, Nn.size))
        Dflux = np.zeros((F.size, nu))
        Ppot = np.zeros((F.size, nu))
        Pcell = np.zeros((F.size, C.size))
        row = 0
        for k in range(F.size):
            f = F[k]
            a = f_c0[k]
            ia = pos[a]
            sa = slice(d * ia, d * ia + d)
            fa = -K[a] * As[k] * nE[a, loc0[f]]
            ga = (xbar[k] - xc[a]) @ E[a]
            Dflux[k, sa] = fa
            Ppot[k, sa] = ga
            Pcell[k, ia] = 1.0
            if f_inner[k]:
                b = f_c1[k]
                ib = pos[b]
                sb = slice(d * ib, d * ib + d)
                M[row, sa] = fa
                M[row, sb] = -K[b] * As[k] * nE[b, loc1[f]]
                row += 1
                M[row, sa] = ga
                M[row, sb] = -((xbar[k] - xc[b]) @ E[b])
                Ru[row, ib] = 1.0
                Ru[row, ia] = -1.0
                row += 1
            elif is_dir[f]:
                M[row, sa] = ga
                np.add.at(Rg[row], npos[k], (1.0 - eta) / n_sub)
                Rg[row, np.searchsorted(Nn, v)] += eta
                Ru[row, ia] = -1.0
                row += 1
            else:
                M[row, sa] = fa
                Rb[row, k] = 1.0 / n_sub
                row += 1
        sol = np.linalg.solve(M, np.hstack([Ru, Rb, Rg]))
        Gu, Gb, Gg = sol[:, :C.size], sol[:, C.size:C.size + F.size], sol[:, C.size + F.size:]
        if subcell:
            lnode = np.argmax(g.cells[C] == v, axis=1)
            # (|C|, 3, n) gradients in global coordinates
            gu = np.einsum("ckd,cdn->ckn", E[C], Gu.reshape(C.size, d, C.size))
            gb = np.einsum("ckd,cdn->ckn", E[C], Gb.reshape(C.size, d, F.size))
            base = ((C * (d + 1) + lnode) * 3)[:, None] + np.arange(3)[None, :]
            gr.append(np.repeat(base.ravel(), C.size)); gcol.append(np.tile(C, 3 * C.size)); gv.append(gu.ravel())
            if F.size and np.any(is_neu[F]):
                gb = gb[:, :, is_neu[F]]
                Fn_ = F[is_neu[F]]
                hr.append(np.repeat(base.ravel(), Fn_.size)); hcol.append(np.tile(Fn_, 3 * C.size)); hv.append(gb.ravel())
        flux_u = Dflux @ Gu
        flux_b = Dflux @ Gb
        flux_g = Dflux @ Gg
        pot_u = Pcell + Ppot @ Gu
        pot_b = Ppot @ Gb
        pot_g = Ppot @ Gg
        # exact data on constrained sub-faces
        neu = is_neu[F]
        dirf = is_dir[F]
        flux_u[neu] = 0.0
        flux_b[neu] = 0.0
        flux_b[neu, np.flatnonzero(neu)] = 1.0 / n_sub
        flux_g[neu] = 0.0
        flux_b[:, ~neu] = 0.0
        fr.append(np.repeat(F, C.size)); fcol.append(np.tile(C, F.size)); fv.append(flux_u.ravel())
        br.append(np.repeat(F, F.size)); bcol.append(np.tile(F, F.size)); bv.append(flux_b.ravel())
        dr.append(np.repeat(F, Nn.size)); dcol.append(np.tile(Nn, F.size)); dv.append(flux_g.ravel())
        bf = F[~f_inner]
        if bf.size:
            sel = ~f_inner
            pr.append(np.repeat(bf, C.size)); pcol.append(np.tile(C, bf.size))
            pv.append((pot_u[sel] / n_sub).ravel())
            qr.append(np.repeat(bf, F.size)); qcol.append(np.tile(F, bf.size))
            qv.append((pot_b[sel] / n_sub).ravel())
            sr.append(np.repeat(bf, Nn.size)); scol.append(np.tile(Nn, bf.size))
            sv.append((pot_g[sel] / n_sub).ravel())

    def build(r, c, val, shape):
        if not r:
            return sps.csr_matrix(shape)
        m = sps.csr_matrix((np.concatenate(val), (np.concatenate(r), np.concatenate(c))), shape=shape)
        return _prune(m)

    return MpfaOperators(
        flux=build(fr, fcol, fv, (nf, nc)),
        bound_flux=build(br, bcol, bv, (nf, nf)),
        bound_pot_cell=build(pr, pcol, pv, (nf, nc)),
        bound_pot_face=build(qr, qcol, qv, (nf, nf)),
        dir_flux=build(dr, dcol, dv, (nf, g.num_nodes)),
        dir_pot=build(sr, scol, sv, (nf, g.num_nodes)),
        div=divergence(g),
        sub_grad=build(gr, gcol, gv, (nc * (d + 1) * 3, nc)) if subcell else None,
        sub_grad_bound=build(hr, hcol, hv, (nc * (d + 1) * 3, nf)) if subcell else None,
    )

