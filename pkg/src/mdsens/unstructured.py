"""Graded unstructured tetrahedral meshes of a box with surface electrodes.

Points come from an octree refined against a sizing function that grows
linearly with the distance to the nearest electrode. Interior points are
jittered to break the cospherical ties of the octree lattice, boundary points
are projected onto the box faces, and the Delaunay tetrahedralization of the
cloud is taken as the mesh. Flat tetrahedra that Qhull leaves on planar hull
facets are removed.

Electrodes become mesh edges by keeping a clearance around every segment free
of other points; the resulting edges are checked after triangulation.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import Delaunay

from .mesh import Box, ConformityError, ElectrodeSpec, MeshError, MixedDimMesh, SubdomainGrid


def _segment_distance(p, a, b):
    ab = b - a
    t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)


def _sizing(p, segments, h_near, h_max, growth):
    h = np.full(p.shape[0], float(h_max))
    for a, b in segments:
        h = np.minimum(h, h_near + (growth - 1.0) * _segment_distance(p, a, b))
    return h


def _octree_leaves(lo, hi, segments, h_near, h_max, growth):
    ext = hi - lo
    n = np.maximum(1, np.ceil(ext / h_max).astype(int))
    size = ext / n
    idx = np.stack(np.meshgrid(*(np.arange(k) for k in n), indexing="ij"), axis=-1).reshape(-1, 3)
    centers = lo + (idx + 0.5) * size
    sizes = np.tile(size, (centers.shape[0], 1))
    leaves_c, leaves_s = [], []
    while centers.size:
        h = _sizing(centers, segments, h_near, h_max, growth)
        split = sizes.max(axis=1) > h
        leaves_c.append(centers[~split])
        leaves_s.append(sizes[~split])
        c, s = centers[split], sizes[split] / 2.0
        off = np.array([[i, j, k] for i in (-0.5, 0.5) for j in (-0.5, 0.5) for k in (-0.5, 0.5)])
        centers = (c[:, None, :] + off[None] * s[:, None, :]).reshape(-1, 3)
        sizes = np.repeat(s, 8, axis=0)
    return np.concatenate(leaves_c), np.concatenate(leaves_s)


def build_unstructured_mesh(domain: Box, electrodes=(), h_near: float = 0.05, h_max: float = 0.5,
                            growth: float = 1.5, jitter: float = 0.2, seed: int = 0) -> MixedDimMesh:
    """Delaunay mesh of ``domain`` graded from ``h_near`` at the electrodes to ``h_max``.

    Each electrode is a single vertical segment of the requested length
    hanging from the top face. The result carries topology only.
    """
    lo = np.asarray(domain.lo, float)
    hi = np.asarray(domain.hi, float)
    z_top = hi[2]
    electrodes = [e if isinstance(e, ElectrodeSpec) else ElectrodeSpec(*e) for e in electrodes]
    segments = []
    for n, e in enumerate(electrodes):
        if not (lo[0] < e.x < hi[0] and lo[1] < e.y < hi[1]):
            raise MeshError(f"electrode {n} at ({e.x}, {e.y}) not strictly inside the top face")
        if not 0 < e.length < hi[2] - lo[2]:
            raise MeshError(f"electrode {n} length {e.length} outside (0, domain depth)")
        segments.append((np.array([e.x, e.y, z_top]), np.array([e.x, e.y, z_top - e.length])))
    centers, sizes = _octree_leaves(lo, hi, segments, h_near, h_max, growth)
    rng = np.random.default_rng(seed)
    pts = centers + jitter * sizes * rng.uniform(-1.0, 1.0, centers.shape)
    # leaves touching the boundary contribute projected points on the faces
    extra = []
    for ax in range(3):
        for val in (lo[ax], hi[ax]):
            touch = np.abs(centers[:, ax] - val) <= 0.5 * sizes[:, ax] + 1e-12
            q = pts[touch].copy()
            q[:, ax] = val
            extra.append(q)
    pts = np.concatenate([pts] + extra)
    # anything pushed outside (edges, corners) is clamped onto the box
    pts = np.clip(pts, lo, hi)
    corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    pts = np.concatenate([pts, corners])
    keep = np.ones(pts.shape[0], dtype=bool)
    for a, b in segments:
        keep &= _segment_distance(pts, a, b) > 0.75 * h_near
    pts = pts[keep]
    # remove near-duplicates created by clamping
    key = np.round((pts - lo) / (1e-6 * h_near)).astype(np.int64)
    _, first = np.unique(key, axis=0, return_index=True)
    pts = pts[np.sort(first)]
    enodes = []
    for a, b in segments:
        k = max(1, int(np.ceil(np.linalg.norm(b - a) / h_near - 1e-9)))
        t = np.linspace(0.0, 1.0, k + 1)
        enodes.append(pts.shape[0] + np.arange(k + 1))
        pts = np.concatenate([pts, a + t[:, None] * (b - a)])
    tri = Delaunay(pts, qhull_options="Qbb Qz Q12")
    if tri.coplanar.size:
        raise MeshError(f"{tri.coplanar.shape[0]} points were left out of the triangulation")
    tets = tri.simplices.astype(np.int64)
    p = pts[tets]
    vol = np.einsum("ij,ij->i", p[:, 1] - p[:, 0], np.cross(p[:, 2] - p[:, 0], p[:, 3] - p[:, 0])) / 6.0
    flip = vol < 0
    tets[flip] = tets[flip][:, [0, 2, 1, 3]]
    h_loc = _sizing(p.mean(axis=1), segments, h_near, h_max, growth)
    tets = tets[np.abs(vol) > 1e-9 * h_loc ** 3]
    used, inv = np.unique(tets, return_inverse=True)
    renum = -np.ones(pts.shape[0], dtype=np.int64)
    renum[used] = np.arange(used.size)
    dom = SubdomainGrid(3, pts[used], inv.reshape(-1, 4), name="domain")
    # every boundary face must lie on the box
    fp = dom.nodes[dom.face_nodes[dom.boundary_faces()]]
    on_box = np.zeros(fp.shape[0], dtype=bool)
    for ax in range(3):
        for val in (lo[ax], hi[ax]):
            on_box |= np.all(np.abs(fp[:, :, ax] - val) < 1e-9, axis=1)
    if not on_box.all():
        raise MeshError("Delaunay mesh has boundary faces inside the box (removed sliver)")
    egrids = []
    edges = set()
    for a, b in ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)):
        e = np.sort(dom.cells[:, [a, b]], axis=1)
        edges.update(map(tuple, e.tolist()))
    for n, en in enumerate(enodes):
        parent = renum[en]
        if np.any(parent < 0):
            raise ConformityError(f"electrode {n} nodes dropped from the triangulation")
        for k in range(parent.size - 1):
            if tuple(sorted((int(parent[k]), int(parent[k + 1])))) not in edges:
                raise ConformityError(f"electrode {n} segment {k} is not a mesh edge")
        cells = np.stack([np.arange(parent.size - 1), np.arange(1, parent.size)], axis=1)
        egrids.append(SubdomainGrid(1, dom.nodes[parent], cells, name=f"electrode_{n}", parent_nodes=parent))
    return MixedDimMesh(domain=dom, electrodes=egrids, z_top=float(z_top))
