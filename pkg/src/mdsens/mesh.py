"""Mixed-dimensional simplicial meshes.

A :class:`MixedDimMesh` holds one tetrahedral grid for the ground volume, an
optional triangulated liner surface and a list of 1D electrode grids, together
with the mortar interfaces that couple them. Every lower-dimensional cell
coincides with a face (liner) or an edge (electrode) of the tetrahedral grid.

Grids are built in three stages: topology (:func:`build_box_mesh` or
:func:`mdsens.msh.read_msh`), :func:`compute_geometry`, and
:func:`build_mortars`. Each stage returns a new mesh object.
"""
from __future__ import annotations

import dataclasses
import enum
import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

GEOM_TOL = 1e-10


class MeshError(ValueError):
    """Raised for invalid mesh topology or geometry."""


class ConformityError(MeshError):
    """A lower-dimensional entity does not match the 3D grid."""


class FaceTag(enum.IntEnum):
    INTERIOR = 0
    TOP = 1
    OUTER = 2
    INTERNAL = 3


class MortarKind(enum.Enum):
    LINER_SIDE_PLUS = "liner_plus"
    LINER_SIDE_MINUS = "liner_minus"
    ELECTRODE = "electrode"


@dataclass
class SubdomainGrid:
    """Simplicial grid of dimension 1, 2 or 3 embedded in 3D space.

    Face ``i`` of a cell is the sub-simplex opposite its local node ``i``.
    ``face_cells[f, 0]`` is the cell that ``face_normals[f]`` points out of;
    ``face_cells[f, 1]`` is ``-1`` on boundary faces. For embedded 2D grids
    the normal lies in the tangent plane of ``face_cells[f, 0]``.
    """

    dim: int
    nodes: np.ndarray
    cells: np.ndarray
    name: str = ""
    face_nodes: np.ndarray = None
    cell_faces: np.ndarray = None
    face_cells: np.ndarray = None
    # id of the node in the 3D grid for every node (lower-dimensional grids)
    parent_nodes: np.ndarray | None = None
    cell_volumes: np.ndarray | None = None
    cell_centers: np.ndarray | None = None
    face_areas: np.ndarray | None = None
    face_centers: np.ndarray | None = None
    face_normals: np.ndarray | None = None
    face_tags: np.ndarray | None = None
    # reference orientation of 2D cells (unit normal), None otherwise
    cell_normals: np.ndarray | None = None

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 3)
        self.cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, self.dim + 1)
        if self.face_nodes is None:
            self.face_nodes, self.cell_faces, self.face_cells = _build_faces(
                self.cells, self.dim, self.name
            )

    @property
    def num_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def num_faces(self) -> int:
        return self.face_nodes.shape[0]

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def has_geometry(self) -> bool:
        return self.cell_volumes is not None

    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_cells[:, 1] < 0)

    def copy(self) -> "SubdomainGrid":
        kw = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            kw[f.name] = v.copy() if isinstance(v, np.ndarray) else v
        return SubdomainGrid(**kw)


def _build_faces(cells, dim, name=""):
    nc = cells.shape[0]
    local = [tuple(j for j in range(dim + 1) if j != i) for i in range(dim + 1)]
    all_faces = np.concatenate([cells[:, list(idx)] for idx in local], axis=0)
    keys = np.sort(all_faces, axis=1)
    uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        bad = uniq[np.argmax(counts > 2)]
        raise MeshError(f"grid {name!r}: face with nodes {bad.tolist()} shared by more than two cells")
    cell_faces = inverse.reshape(dim + 1, nc).T.copy()
    face_cells = -np.ones((uniq.shape[0], 2), dtype=np.int64)
    owner = np.tile(np.arange(nc), dim + 1)
    # stable ordering: first occurrence (lowest cell id) becomes face_cells[:, 0]
    order = np.lexsort((owner, inverse))
    inv_sorted = inverse[order]
    own_sorted = owner[order]
    first = np.ones(inv_sorted.size, dtype=bool)
    first[1:] = inv_sorted[1:] != inv_sorted[:-1]
    face_cells[inv_sorted[first], 0] = own_sorted[first]
    face_cells[inv_sorted[~first], 1] = own_sorted[~first]
    return uniq.astype(np.int64), cell_faces.astype(np.int64), face_cells


@dataclass
class MortarInterface:
    """Mortar grid between a lower-dimensional grid and the 3D grid.

    ``low_cells[k]`` is the liner/electrode cell of mortar cell ``k``;
    ``high_entities[k]`` is the 3D face (liner sides) or the 3D host cell
    (electrodes).
    """

    id: int
    kind: MortarKind
    low_cells: np.ndarray
    high_entities: np.ndarray
    measures: np.ndarray
    electrode: int | None = None

    @property
    def num_cells(self) -> int:
        return self.low_cells.size


@dataclass
class MixedDimMesh:
    domain: SubdomainGrid
    liner: SubdomainGrid | None = None
    electrodes: list = field(default_factory=list)
    interfaces: list | None = None
    electrode_anchors: np.ndarray | None = None
    electrode_lengths: np.ndarray | None = None
    z_top: float | None = None
    max_snap_distance: float = 0.0

    def __post_init__(self):
        if self.z_top is None:
            self.z_top = float(self.domain.nodes[:, 2].max())
        if self.electrode_anchors is None:
            self.electrode_anchors = np.array(
                [e.nodes[np.argmax(e.nodes[:, 2])] for e in self.electrodes]
            ).reshape(-1, 3)
        if self.electrode_lengths is None:
            self.electrode_lengths = np.array(
                [np.ptp(e.nodes[:, 2]) for e in self.electrodes], dtype=float
            )

    @property
    def num_electrodes(self) -> int:
        return len(self.electrodes)

    @property
    def has_mortars(self) -> bool:
        return self.interfaces is not None

    def liner_interfaces(self) -> list:
        if not self.interfaces:
            return []
        return [m for m in self.interfaces if m.kind is not MortarKind.ELECTRODE]

    def electrode_interface(self, e: int) -> MortarInterface | None:
        for m in self.interfaces or []:
            if m.kind is MortarKind.ELECTRODE and m.electrode == e:
                return m
        return None

    def grids(self):
        out = [self.domain]
        if self.liner is not None:
            out.append(self.liner)
        return out + list(self.electrodes)

    def replace(self, **kw) -> "MixedDimMesh":
        return dataclasses.replace(self, **kw)


# ---------------------------------------------------------------------------
# geometry


def _simplex_measure(p: np.ndarray) -> np.ndarray:
    """Measure of simplices given vertex coordinates of shape (n, k+1, 3)."""
    k = p.shape[1] - 1
    if k == 0:
        return np.ones(p.shape[0])
    edges = p[:, 1:, :] - p[:, :1, :]
    if k == 1:
        return np.linalg.norm(edges[:, 0], axis=1)
    if k == 2:
        return 0.5 * np.linalg.norm(np.cross(edges[:, 0], edges[:, 1]), axis=1)
    return np.abs(np.einsum("ij,ij->i", edges[:, 0], np.cross(edges[:, 1], edges[:, 2]))) / 6.0


def _outward_conormals(g: SubdomainGrid) -> np.ndarray:
    """Unit outward co-normal of every (cell, local face) pair, shape (nc, d+1, 3).

    The co-normal of face ``i`` is the component of the vector from the
    opposite node ``i`` to the face orthogonal to the face, i.e. it lies in
    the tangent space of the cell.
    """
    p = g.nodes[g.cells]  # (nc, d+1, 3)
    d = g.dim
    out = np.empty_like(p)
    for i in range(d + 1):
        others = [j for j in range(d + 1) if j != i]
        base = p[:, others[0], :]
        v = base - p[:, i, :]
        if d > 1:
            # orthonormal basis of the face directions (Gram-Schmidt)
            basis = []
            for j in others[1:]:
                w = p[:, j, :] - base
                for b in basis:
                    w = w - np.einsum("ij,ij->i", w, b)[:, None] * b
                w = w / np.linalg.norm(w, axis=1)[:, None]
                basis.append(w)
            for b in basis:
                v = v - np.einsum("ij,ij->i", v, b)[:, None] * b
        out[:, i, :] = v / np.linalg.norm(v, axis=1)[:, None]
    return out


def cell_conormals(g: SubdomainGrid) -> np.ndarray:
    return _outward_conormals(g)


def tangent_bases(g: SubdomainGrid) -> np.ndarray:
    """Orthonormal tangent basis of every cell, shape (nc, 3, d)."""
    p = g.nodes[g.cells]
    d = g.dim
    if d == 3:
        return np.broadcast_to(np.eye(3), (g.num_cells, 3, 3)).copy()
    basis = []
    for j in range(1, d + 1):
        w = p[:, j, :] - p[:, 0, :]
        for b in basis:
            w = w - np.einsum("ij,ij->i", w, b)[:, None] * b
        basis.append(w / np.linalg.norm(w, axis=1)[:, None])
    return np.stack(basis, axis=2)


def _geometry_of(g: SubdomainGrid, z_top: float) -> SubdomainGrid:
    g = g.copy()
    p = g.nodes[g.cells]
    vol = _simplex_measure(p)
    mean = vol.mean() if vol.size else 1.0
    bad = np.flatnonzero(vol < 1e-14 * mean)
    if bad.size:
        raise MeshError(f"grid {g.name!r}: degenerate cell {int(bad[0])} (measure {vol[bad[0]]:.3e})")
    g.cell_volumes = vol
    g.cell_centers = p.mean(axis=1)
    fp = g.nodes[g.face_nodes]
    g.face_areas = _simplex_measure(fp)
    g.face_centers = fp.mean(axis=1)
    con = _outward_conormals(g)
    c0 = g.face_cells[:, 0]
    local = np.argmax(g.cell_faces[c0] == np.arange(g.num_faces)[:, None], axis=1)
    g.face_normals = con[c0, local]
    tags = np.full(g.num_faces, FaceTag.INTERIOR, dtype=np.int64)
    bnd = g.face_cells[:, 1] < 0
    on_top = np.all(np.abs(fp[:, :, 2] - z_top) < GEOM_TOL, axis=1)
    tags[bnd & on_top] = FaceTag.TOP
    tags[bnd & ~on_top] = FaceTag.OUTER
    g.face_tags = tags
    if g.dim == 2:
        n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        g.cell_normals = n / np.linalg.norm(n, axis=1)[:, None]
    return g


def compute_geometry(mesh: MixedDimMesh) -> MixedDimMesh:
    """Populate measures, centroids, normals and boundary tags on all grids."""
    z_top = mesh.z_top
    dom = _geometry_of(mesh.domain, z_top)
    liner = _geometry_of(mesh.liner, z_top) if mesh.liner is not None else None
    elec = [_geometry_of(e, z_top) for e in mesh.electrodes]
    return mesh.replace(domain=dom, liner=liner, electrodes=elec)


# ---------------------------------------------------------------------------
# mortars


def _face_lookup(g: SubdomainGrid) -> dict:
    return {tuple(k): i for i, k in enumerate(np.sort(g.face_nodes, axis=1).tolist())}


def build_mortars(mesh: MixedDimMesh) -> MixedDimMesh:
    """Split the 3D grid along the liner and create all mortar interfaces.

    Each liner cell gets one mortar cell on either side. The 3D face it
    coincides with is duplicated so that every side owns a boundary face
    tagged ``INTERNAL``. Electrode segments are attached to the lowest-index
    tetrahedron that contains them.
    """
    if not mesh.domain.has_geometry:
        raise MeshError("compute_geometry must run before build_mortars")
    dom = mesh.domain.copy()
    interfaces = []
    if mesh.liner is not None and mesh.liner.num_cells:
        lin = mesh.liner
        lookup = _face_lookup(dom)
        keys = np.sort(lin.parent_nodes[lin.cells], axis=1)
        faces = np.empty(lin.num_cells, dtype=np.int64)
        for k, key in enumerate(keys.tolist()):
            f = lookup.get(tuple(key))
            if f is None:
                raise ConformityError(f"liner cell {k} does not match any 3D face")
            if dom.face_cells[f, 1] < 0:
                raise MeshError(f"liner cell {k} lies on the domain boundary (needs two adjacent 3D cells)")
            faces[k] = f
        # orientation: PLUS is the side the liner cell normal points to
        side = np.einsum(
            "ij,ij->i", dom.cell_centers[dom.face_cells[faces, 0]] - dom.face_centers[faces], lin.cell_normals
        )
        first_is_plus = side > 0
        nf = dom.num_faces
        new_ids = nf + np.arange(faces.size)
        # the duplicate keeps face_cells[:, 1]; it becomes the owner of the new face
        dom.face_nodes = np.vstack([dom.face_nodes, dom.face_nodes[faces]])
        new_fc = np.stack([dom.face_cells[faces, 1], -np.ones(faces.size, dtype=np.int64)], axis=1)
        dom.face_cells[faces, 1] = -1
        dom.face_cells = np.vstack([dom.face_cells, new_fc])
        for k, f in enumerate(faces):
            c = new_fc[k, 0]
            loc = np.flatnonzero(dom.cell_faces[c] == f)
            dom.cell_faces[c, loc] = new_ids[k]
        dom.face_areas = np.concatenate([dom.face_areas, dom.face_areas[faces]])
        dom.face_centers = np.vstack([dom.face_centers, dom.face_centers[faces]])
        dom.face_normals = np.vstack([dom.face_normals, -dom.face_normals[faces]])
        dom.face_tags = np.concatenate([dom.face_tags, np.full(faces.size, FaceTag.INTERNAL)])
        dom.face_tags[faces] = FaceTag.INTERNAL
        plus = np.where(first_is_plus, faces, new_ids)
        minus = np.where(first_is_plus, new_ids, faces)
        cells = np.arange(lin.num_cells)
        interfaces.append(
            MortarInterface(len(interfaces), MortarKind.LINER_SIDE_PLUS, cells, plus, lin.cell_volumes.copy())
        )
        interfaces.append(
            MortarInterface(len(interfaces), MortarKind.LINER_SIDE_MINUS, cells.copy(), minus, lin.cell_volumes.copy())
        )
    if mesh.electrodes:
        # edge -> lowest tetrahedron id
        edge_host: dict = {}
        cells3 = dom.cells
        for a, b in itertools.combinations(range(4), 2):
            ea = np.sort(cells3[:, [a, b]], axis=1)
            for c, (u, v) in enumerate(ea.tolist()):
                key = (u, v)
                if key not in edge_host:
                    edge_host[key] = c
        for e, eg in enumerate(mesh.electrodes):
            keys = np.sort(eg.parent_nodes[eg.cells], axis=1)
            hosts = np.empty(eg.num_cells, dtype=np.int64)
            for k, (u, v) in enumerate(keys.tolist()):
                c = edge_host.get((u, v))
                if c is None:
                    raise ConformityError(f"electrode {e} cell {k} is not contained in any tetrahedron")
                hosts[k] = c
            interfaces.append(
                MortarInterface(
                    len(interfaces),
                    MortarKind.ELECTRODE,
                    np.arange(eg.num_cells),
                    hosts,
                    eg.cell_volumes.copy(),
                    electrode=e,
                )
            )
    return mesh.replace(domain=dom, interfaces=interfaces)


def finalize(mesh: MixedDimMesh) -> MixedDimMesh:
    return build_mortars(compute_geometry(mesh))


# ---------------------------------------------------------------------------
# structured box mesher


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))


@dataclass(frozen=True)
class Grading:
    """Target lattice spacings (m).

    Spacing grows geometrically (ratio ``growth``) away from electrodes and the
    liner until it reaches ``boundary``.
    """

    near_electrode: float = 0.05
    near_liner: float = 0.05
    boundary: float = 0.5
    growth: float = 1.3
    uniform: float | None = None
    # extra (axis, a, b, spacing) targets, e.g. to share one lattice between runs
    refine: tuple = ()


@dataclass(frozen=True)
class LinerBox:
    """Open box (no lid): bottom plus four walls.

    ``lo``/``hi`` are the box corners; the rim is at ``hi[2]``.
    """

    lo: tuple
    hi: tuple
    hole_center: tuple | None = None
    hole_radius: float = 0.0


@dataclass(frozen=True)
class ElectrodeSpec:
    x: float
    y: float
    length: float


def _spacing_field(x, points, intervals, h_max, growth):
    h = np.full_like(x, h_max)
    for c, hc in points:
        h = np.minimum(h, hc + (growth - 1.0) * np.abs(x - c))
    for a, b, hc in intervals:
        d = np.maximum(0.0, np.maximum(a - x, x - b))
        h = np.minimum(h, hc + (growth - 1.0) * d)
    return h


def graded_axis(lo, hi, points=(), intervals=(), h_max=1.0, growth=1.3, mandatory=()):
    """Node coordinates along one axis.

    ``points`` are ``(coordinate, spacing)`` targets, ``intervals`` are
    ``(a, b, spacing)`` targets; all their coordinates plus ``mandatory``
    become lattice lines. Returns the coordinates and the largest distance by
    which a requested coordinate was moved when merging near-duplicates.
    """
    req = [lo, hi] + [c for c, _ in points] + [v for a, b, _ in intervals for v in (a, b)] + list(mandatory)
    req = np.array(sorted(float(np.clip(v, lo, hi)) for v in req))
    h_req = _spacing_field(req, points, intervals, h_max, growth)
    keep = [req[0]]
    snap = 0.0
    for v, hv in zip(req[1:], h_req[1:]):
        if v - keep[-1] < 0.25 * hv:
            if v - keep[-1] > 0:
                snap = max(snap, v - keep[-1])
            if v == hi:
                keep[-1] = hi
            continue
        keep.append(v)
    out = [keep[0]]
    for a, b in zip(keep[:-1], keep[1:]):
        s = np.linspace(a, b, 401)
        inv = 1.0 / _spacing_field(s, points, intervals, h_max, growth)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (inv[1:] + inv[:-1]) * np.diff(s))])
        n = max(1, int(np.ceil(cum[-1] - 1e-6)))
        if n > 1:
            targets = cum[-1] * np.arange(1, n) / n
            out.extend(np.interp(targets, cum, s).tolist())
        out.append(b)
    return np.array(out), snap


def _snap(v, axis):
    i = int(np.argmin(np.abs(axis - v)))
    return i, abs(axis[i] - v)


def _kuhn_tets(nx, ny, nz):
    """Six tetrahedra per hexahedron, all sharing the (0,0,0)-(1,1,1) diagonal."""
    i, j, k = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    i, j, k = (a.transpose(2, 1, 0).ravel() for a in (i, j, k))

    def nid(a, b, c):
        return a + (nx + 1) * (b + (ny + 1) * c)

    tets = []
    for perm in itertools.permutations(range(3)):
        off = np.zeros(3, dtype=int)
        verts = [nid(i, j, k)]
        for ax in perm:
            off[ax] += 1
            verts.append(nid(i + off[0], j + off[1], k + off[2]))
        tets.append(np.stack(verts, axis=1))
    # hexahedron-major ordering keeps neighbouring tets close in memory
    return np.stack(tets, axis=1).reshape(-1, 4)


def build_box_mesh(domain: Box, grading: Grading = Grading(), liner: LinerBox | None = None,
                   electrodes=()) -> MixedDimMesh:
    """Graded tensor-product lattice split into tetrahedra.

    Liner cells are the lattice triangles on the open-box surface; cells whose
    centroid lies within ``hole_radius`` of ``hole_center`` are left out.
    Electrodes are chains of vertical lattice edges hanging from the top
    surface. The result has topology only; run :func:`finalize` (or
    :func:`compute_geometry` then :func:`build_mortars`) next.
    """
    lo = np.asarray(domain.lo, float)
    hi = np.asarray(domain.hi, float)
    z_top = hi[2]
    electrodes = list(electrodes)
    for e in electrodes:
        if e.length > hi[2] - lo[2]:
            raise MeshError(f"electrode at ({e.x}, {e.y}) longer than the domain depth")
        if not (lo[0] <= e.x <= hi[0] and lo[1] <= e.y <= hi[1]):
            raise MeshError(f"electrode at ({e.x}, {e.y}) outside the domain")
    pts = [[], [], []]
    ivs = [[], [], []]
    mand = [[], [], []]
    if grading.uniform is None:
        for e in electrodes:
            pts[0].append((e.x, grading.near_electrode))
            pts[1].append((e.y, grading.near_electrode))
            ivs[2].append((z_top - e.length, z_top, grading.near_electrode))
    for e in electrodes:
        mand[2].append(z_top - e.length)
    if liner is not None:
        llo = np.asarray(liner.lo, float)
        lhi = np.asarray(liner.hi, float)
        if np.any(llo <= lo) or np.any(lhi[:2] >= hi[:2]) or lhi[2] > hi[2] or np.any(lhi <= llo):
            raise MeshError("liner box not inside the domain")
        if liner.hole_center is not None and liner.hole_radius > 0:
            hc = np.asarray(liner.hole_center, float)
            if liner.hole_radius > 0.5 * min(lhi[0] - llo[0], lhi[1] - llo[1]):
                raise MeshError("hole radius larger than the liner bottom")
            if grading.uniform is None:
                hh = min(grading.near_liner, liner.hole_radius / 2.0)
                for ax in range(2):
                    ivs[ax].append((hc[ax] - liner.hole_radius, hc[ax] + liner.hole_radius, hh))
        for ax in range(3):
            mand[ax] += [llo[ax], lhi[ax]]
            if grading.uniform is None:
                ivs[ax].append((llo[ax], lhi[ax], grading.near_liner))
    if grading.uniform is None:
        for ax, a, b, hc in grading.refine:
            ivs[ax].append((a, b, hc))
    axes = []
    snap = 0.0
    for ax in range(3):
        h_max = grading.uniform if grading.uniform is not None else grading.boundary
        a, s = graded_axis(lo[ax], hi[ax], pts[ax], ivs[ax], h_max, grading.growth, mand[ax])
        axes.append(a)
        snap = max(snap, s)
    xs, ys, zs = axes
    nx, ny, nz = len(xs) - 1, len(ys) - 1, len(zs) - 1
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    nodes = np.stack([X.transpose(2, 1, 0).ravel(), Y.transpose(2, 1, 0).ravel(), Z.transpose(2, 1, 0).ravel()], axis=1)
    tets = _kuhn_tets(nx, ny, nz)
    dom = SubdomainGrid(3, nodes, tets, name="domain")

    def nid(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    liner_grid = None
    if liner is not None:
        liner_grid = _liner_from_lattice(dom, liner, xs, ys, zs, snap_tol=GEOM_TOL)
    egrids = []
    anchors = []
    lengths = []
    for n, e in enumerate(electrodes):
        i, di = _snap(e.x, xs)
        j, dj = _snap(e.y, ys)
        snap = max(snap, float(np.hypot(di, dj)))
        k_tip, _ = _snap(z_top - e.length, zs)
        ks = np.arange(nz, k_tip - 1, -1)
        if ks.size < 2:
            raise MeshError(f"electrode {n} shorter than one lattice layer")
        parent = nid(i, j, ks)
        eg = SubdomainGrid(1, nodes[parent], np.stack([np.arange(ks.size - 1), np.arange(1, ks.size)], axis=1),
                           name=f"electrode_{n}", parent_nodes=parent)
        egrids.append(eg)
        anchors.append(nodes[parent[0]])
        lengths.append(z_top - zs[k_tip])
    if snap > 0:
        logger.info("box mesh: max snap distance %.3g m", snap)
    return MixedDimMesh(
        domain=dom,
        liner=liner_grid,
        electrodes=egrids,
        electrode_anchors=np.array(anchors).reshape(-1, 3),
        electrode_lengths=np.array(lengths, dtype=float),
        z_top=float(z_top),
        max_snap_distance=snap,
    )


def _liner_from_lattice(dom: SubdomainGrid, liner: LinerBox, xs, ys, zs, snap_tol):
    llo = np.array([xs[np.argmin(abs(xs - liner.lo[0]))], ys[np.argmin(abs(ys - liner.lo[1]))],
                    zs[np.argmin(abs(zs - liner.lo[2]))]])
    lhi = np.array([xs[np.argmin(abs(xs - liner.hi[0]))], ys[np.argmin(abs(ys - liner.hi[1]))],
                    zs[np.argmin(abs(zs - liner.hi[2]))]])
    fp = dom.nodes[dom.face_nodes]  # (nf, 3, 3)
    tol = snap_tol
    inside = np.all((fp >= llo - tol) & (fp <= lhi + tol), axis=(1, 2))
    on_plane = np.zeros(dom.num_faces, dtype=bool)
    outward = np.zeros((dom.num_faces, 3))
    # bottom
    m = inside & np.all(np.abs(fp[:, :, 2] - llo[2]) < tol, axis=1)
    on_plane |= m
    outward[m] = (0, 0, -1)
    for ax in range(2):
        for val, sgn in ((llo[ax], -1.0), (lhi[ax], 1.0)):
            m = inside & np.all(np.abs(fp[:, :, ax] - val) < tol, axis=1)
            on_plane |= m
            v = np.zeros(3)
            v[ax] = sgn
            outward[m] = v
    faces = np.flatnonzero(on_plane)
    if liner.hole_center is not None and liner.hole_radius > 0:
        cen = fp[faces].mean(axis=1)
        d = np.linalg.norm(cen - np.asarray(liner.hole_center, float), axis=1)
        faces = faces[~((d < liner.hole_radius) & (outward[faces, 2] < 0))]
    tri = dom.face_nodes[faces].copy()
    # orient every triangle so that its normal points out of the box
    p = dom.nodes[tri]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    flip = np.einsum("ij,ij->i", n, outward[faces]) < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    used, local = np.unique(tri, return_inverse=True)
    return SubdomainGrid(2, dom.nodes[used], local.reshape(-1, 3), name="liner", parent_nodes=used)
