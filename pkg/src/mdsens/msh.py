"""Reader and writer for a small subset of the gmsh MSH 4.1 ASCII format.

Supported sections are ``$MeshFormat``, ``$PhysicalNames``, ``$Entities``,
``$Nodes`` and ``$Elements``; anything else is skipped with a warning. Only
line (1), triangle (2) and tetrahedron (4) elements are accepted. Subdomain
membership comes from the physical names ``domain``, ``liner`` and
``electrode_<k>``.
"""
from __future__ import annotations

import re
import warnings

import numpy as np

from .mesh import ConformityError, MeshError, MixedDimMesh, SubdomainGrid

ELEMENT_NODES = {1: 2, 2: 3, 4: 4}
_KNOWN = ("MeshFormat", "PhysicalNames", "Entities", "Nodes", "Elements")
_ELECTRODE = re.compile(r"^electrode_(\d+)$")


class MshError(MeshError):
    """Malformed or unsupported MSH content."""


class MshHeaderError(MshError):
    pass


class MshBinaryError(MshError):
    pass


class UnsupportedElementError(MshError):
    pass


class LinerConformityError(ConformityError):
    pass


class ElectrodeConformityError(ConformityError):
    pass


def _sections(text: str) -> dict:
    lines = text.splitlines()
    out = {}
    i = 0
    while i < len(lines):
        s = lines[i].strip()
        i += 1
        if not s:
            continue
        if not s.startswith("$") or s.startswith("$End"):
            raise MshError(f"line {i}: expected a section header, got {s[:40]!r}")
        name = s[1:]
        end = "$End" + name
        body = []
        while i < len(lines) and lines[i].strip() != end:
            body.append(lines[i])
            i += 1
        if i == len(lines):
            raise MshError(f"section ${name} is not terminated by {end}")
        i += 1
        if name not in _KNOWN:
            warnings.warn(f"MSH section ${name} ignored", stacklevel=3)
            continue
        if name in out:
            raise MshError(f"duplicate section ${name}")
        out[name] = body
    return out


class _Tokens:
    def __init__(self, body, section):
        self._it = iter(" ".join(body).split())
        self.section = section

    def next(self, kind=int):
        try:
            tok = next(self._it)
        except StopIteration:
            raise MshError(f"${self.section}: unexpected end of section") from None
        try:
            return kind(tok)
        except ValueError:
            raise MshError(f"${self.section}: cannot parse {tok!r}") from None


def _check_header(body):
    toks = " ".join(body).split()
    if len(toks) != 3:
        raise MshHeaderError(f"$MeshFormat must read '4.1 0 8', got {' '.join(toks)!r}")
    version, ftype, dsize = toks
    if ftype == "1":
        raise MshBinaryError("binary MSH files are not supported (file-type flag is 1)")
    if version != "4.1" or ftype != "0" or dsize != "8":
        raise MshHeaderError(f"$MeshFormat must read '4.1 0 8', got {' '.join(toks)!r}")


def _physical_names(body) -> dict:
    names = {}
    if not body:
        return names
    n = int(body[0].split()[0])
    for line in body[1:1 + n]:
        m = re.match(r'^\s*(\d+)\s+(\d+)\s+"(.*)"\s*$', line)
        if not m:
            raise MshError(f"$PhysicalNames: malformed line {line!r}")
        names[(int(m.group(1)), int(m.group(2)))] = m.group(3)
    return names


def _entities(body) -> dict:
    """Map (dim, entity tag) to its list of physical tags."""
    t = _Tokens(body, "Entities")
    counts = [t.next() for _ in range(4)]
    out = {}
    for dim, n in enumerate(counts):
        for _ in range(n):
            tag = t.next()
            for _ in range(3 if dim == 0 else 6):
                t.next(float)
            phys = [t.next() for _ in range(t.next())]
            if dim > 0:
                for _ in range(t.next()):
                    t.next()
            out[(dim, tag)] = phys
    return out


def _nodes(body):
    t = _Tokens(body, "Nodes")
    nblocks, nnodes = t.next(), t.next()
    t.next(), t.next()
    tags = np.empty(nnodes, dtype=np.int64)
    xyz = np.empty((nnodes, 3))
    k = 0
    for _ in range(nblocks):
        t.next(), t.next()
        parametric = t.next()
        n = t.next()
        if parametric:
            raise MshError("parametric node coordinates are not supported")
        if k + n > nnodes:
            raise MshError("$Nodes: more nodes than declared")
        for i in range(n):
            tags[k + i] = t.next()
        for i in range(n):
            xyz[k + i] = (t.next(float), t.next(float), t.next(float))
        k += n
    if k != nnodes:
        raise MshError(f"$Nodes: declared {nnodes} nodes, found {k}")
    return tags, xyz


def _elements(body):
    """Yield (entity dim, entity tag, element tags, node tags) per block."""
    t = _Tokens(body, "Elements")
    nblocks = t.next()
    t.next(), t.next(), t.next()
    for _ in range(nblocks):
        dim, etag, etype, n = t.next(), t.next(), t.next(), t.next()
        if etype not in ELEMENT_NODES:
            raise UnsupportedElementError(f"element type {etype} in entity ({dim}, {etag}) is not supported")
        k = ELEMENT_NODES[etype]
        ids = np.empty(n, dtype=np.int64)
        conn = np.empty((n, k), dtype=np.int64)
        for i in range(n):
            ids[i] = t.next()
            for j in range(k):
                conn[i, j] = t.next()
        yield dim, etag, ids, conn


def read_msh(text: str) -> MixedDimMesh:
    """Parse MSH 4.1 ASCII content into a topology-only mesh.

    Raises
    ------
    MshHeaderError, MshBinaryError
        Bad or binary ``$MeshFormat``.
    UnsupportedElementError
        Element types other than 1, 2 and 4.
    LinerConformityError, ElectrodeConformityError
        A liner triangle that is not a tetrahedron face, or an electrode
        segment that is not a tetrahedron edge.
    """
    sec = _sections(text)
    if "MeshFormat" not in sec:
        raise MshHeaderError("missing $MeshFormat section")
    _check_header(sec["MeshFormat"])
    for name in ("Nodes", "Elements"):
        if name not in sec:
            raise MshError(f"missing ${name} section")
    names = _physical_names(sec.get("PhysicalNames", []))
    ents = _entities(sec["Entities"]) if "Entities" in sec else {}
    node_tags, xyz = _nodes(sec["Nodes"])
    index = {int(tg): i for i, tg in enumerate(node_tags)}
    if len(index) != node_tags.size:
        raise MshError("$Nodes: duplicate node tags")

    def rows(conn):
        try:
            return np.vectorize(index.__getitem__, otypes=[np.int64])(conn)
        except KeyError as exc:
            raise MshError(f"element references unknown node {exc.args[0]}") from None

    tets, tris, tri_ids, segs = [], [], [], {}
    for dim, etag, ids, conn in _elements(sec["Elements"]):
        groups = [names.get((dim, p)) for p in ents.get((dim, etag), [])]
        groups = [g for g in groups if g is not None]
        if not groups:
            warnings.warn(f"elements of entity ({dim}, {etag}) have no known physical group; ignored", stacklevel=2)
            continue
        for g in groups:
            m = _ELECTRODE.match(g)
            if dim == 3 and g == "domain" and conn.shape[1] == 4:
                tets.append(rows(conn))
            elif dim == 2 and g == "liner" and conn.shape[1] == 3:
                tris.append(rows(conn))
                tri_ids.append(ids)
            elif dim == 1 and m and conn.shape[1] == 2:
                segs.setdefault(int(m.group(1)), []).append((ids, rows(conn)))
            else:
                warnings.warn(f"physical group {g!r} on entity ({dim}, {etag}) ignored", stacklevel=2)
    if not tets:
        raise MshError("no tetrahedra in physical group 'domain'")
    tets = np.concatenate(tets)
    used = np.unique(tets)
    renum = -np.ones(xyz.shape[0], dtype=np.int64)
    renum[used] = np.arange(used.size)
    dom = SubdomainGrid(3, xyz[used], renum[tets], name="domain")
    face_keys = {tuple(k) for k in dom.face_nodes.tolist()}

    liner = None
    if tris:
        tris = np.concatenate(tris)
        tri_ids = np.concatenate(tri_ids)
        parent = renum[tris]
        for k in range(parent.shape[0]):
            if np.any(parent[k] < 0) or tuple(sorted(parent[k].tolist())) not in face_keys:
                raise LinerConformityError(f"liner triangle {int(tri_ids[k])} does not match any tetrahedron face")
        lnodes, local = np.unique(parent, return_inverse=True)
        liner = SubdomainGrid(2, dom.nodes[lnodes], local.reshape(-1, 3), name="liner", parent_nodes=lnodes)

    edges = set()
    for a, b in ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)):
        edges.update(map(tuple, np.sort(dom.cells[:, [a, b]], axis=1).tolist()))
    electrodes = []
    if segs and sorted(segs) != list(range(len(segs))):
        raise MshError(f"electrode groups must be numbered 0..{len(segs) - 1}, got {sorted(segs)}")
    for k in range(len(segs)):
        ids = np.concatenate([s[0] for s in segs[k]])
        conn = renum[np.concatenate([s[1] for s in segs[k]])]
        for i in range(conn.shape[0]):
            if np.any(conn[i] < 0) or tuple(sorted(conn[i].tolist())) not in edges:
                raise ElectrodeConformityError(
                    f"electrode_{k} segment {int(ids[i])} does not match any tetrahedron edge"
                )
        # nodes ordered from the top down
        enodes = np.unique(conn)
        enodes = enodes[np.argsort(-dom.nodes[enodes, 2], kind="stable")]
        pos = {int(n): i for i, n in enumerate(enodes)}
        local = np.vectorize(pos.__getitem__, otypes=[np.int64])(conn)
        electrodes.append(SubdomainGrid(1, dom.nodes[enodes], local, name=f"electrode_{k}", parent_nodes=enodes))
    return MixedDimMesh(domain=dom, liner=liner, electrodes=electrodes)


def _bbox(p):
    return " ".join(repr(float(v)) for v in np.concatenate([p.min(axis=0), p.max(axis=0)]))


def write_msh(mesh: MixedDimMesh) -> str:
    """Serialize the topology of ``mesh`` (3D grid, liner, electrodes) as MSH 4.1 ASCII.

    All nodes are stored in the volume entity; node and element tags start
    at 1 and follow the grid ordering.
    """
    dom = mesh.domain
    ne = mesh.num_electrodes
    has_liner = mesh.liner is not None and mesh.liner.num_cells > 0
    out = ["$MeshFormat", "4.1 0 8", "$EndMeshFormat"]
    phys = [(3, 1, "domain")]
    if has_liner:
        phys.append((2, 2, "liner"))
    phys += [(1, 10 + k, f"electrode_{k}") for k in range(ne)]
    out.append("$PhysicalNames")
    out.append(str(len(phys)))
    out += [f'{d} {t} "{n}"' for d, t, n in phys]
    out.append("$EndPhysicalNames")
    out.append("$Entities")
    out.append(f"0 {ne} {1 if has_liner else 0} 1")
    for k, e in enumerate(mesh.electrodes):
        out.append(f"{k + 1} {_bbox(e.nodes)} 1 {10 + k} 0")
    if has_liner:
        out.append(f"1 {_bbox(mesh.liner.nodes)} 1 2 0")
    out.append(f"1 {_bbox(dom.nodes)} 1 1 0")
    out.append("$EndEntities")
    nn = dom.num_nodes
    out.append("$Nodes")
    out.append(f"1 {nn} 1 {nn}")
    out.append(f"3 1 0 {nn}")
    out += [str(i + 1) for i in range(nn)]
    out += [" ".join(repr(float(v)) for v in p) for p in dom.nodes]
    out.append("$EndNodes")
    blocks = []
    for k, e in enumerate(mesh.electrodes):
        blocks.append((1, k + 1, 1, e.parent_nodes[e.cells]))
    if has_liner:
        blocks.append((2, 1, 2, mesh.liner.parent_nodes[mesh.liner.cells]))
    blocks.append((3, 1, 4, dom.cells))
    total = sum(b[3].shape[0] for b in blocks)
    out.append("$Elements")
    out.append(f"{len(blocks)} {total} 1 {total}")
    tag = 1
    for dim, etag, etype, conn in blocks:
        out.append(f"{dim} {etag} {etype} {conn.shape[0]}")
        for row in conn:
            out.append(f"{tag} " + " ".join(str(int(v) + 1) for v in row))
            tag += 1
    out.append("$EndElements")
    return "\n".join(out) + "\n"
