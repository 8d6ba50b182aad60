"""Legacy ASCII VTK (3.0) unstructured grids with double-precision cell data.

Floats are written with ``repr`` (shortest round-trip form) and the header
carries no timestamp, so identical inputs give identical files.
"""
from __future__ import annotations

import numpy as np

VTK_CELL_TYPES = {1: 3, 2: 5, 3: 10}  # line, triangle, tetra


class VtkFormatError(ValueError):
    pass


def _fmt(v) -> str:
    return repr(float(v))


def write_vtk(nodes, cells, cell_data: dict, title: str = "mdsens field") -> str:
    """Serialize a simplicial grid with scalar cell fields and return the text."""
    nodes = np.asarray(nodes, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    if cells.ndim != 2 or cells.shape[1] - 1 not in VTK_CELL_TYPES:
        raise ValueError("cells must be simplices of dimension 1, 2 or 3")
    if "\n" in title:
        raise ValueError("title must be a single line")
    nc, k = cells.shape
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    out.append(f"POINTS {nodes.shape[0]} double")
    out += [" ".join(_fmt(v) for v in p) for p in nodes]
    out.append(f"CELLS {nc} {nc * (k + 1)}")
    out += [f"{k} " + " ".join(str(int(v)) for v in c) for c in cells]
    out.append(f"CELL_TYPES {nc}")
    out += [str(VTK_CELL_TYPES[k - 1])] * nc
    if cell_data:
        out.append(f"CELL_DATA {nc}")
        for name, values in cell_data.items():
            values = np.asarray(values, dtype=float).ravel()
            if values.size != nc:
                raise ValueError(f"field {name!r} has {values.size} values for {nc} cells")
            if not name or any(ch.isspace() for ch in name):
                raise ValueError(f"invalid field name {name!r}")
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [_fmt(v) for v in values]
    return "\n".join(out) + "\n"


def read_vtk(text: str):
    """Parse text produced by :func:`write_vtk`.

    Returns ``(nodes, cells, cell_data)``.
    """
    lines = text.splitlines()
    if len(lines) < 4 or not lines[0].startswith("# vtk DataFile Version"):
        raise VtkFormatError("not a legacy VTK file")
    if lines[2].strip() != "ASCII":
        raise VtkFormatError("only ASCII VTK files are supported")
    if lines[3].strip() != "DATASET UNSTRUCTURED_GRID":
        raise VtkFormatError("only UNSTRUCTURED_GRID datasets are supported")
    toks = " ".join(lines[4:]).split()
    pos = 0

    def take(n=1):
        nonlocal pos
        if pos + n > len(toks):
            raise VtkFormatError("unexpected end of file")
        v = toks[pos:pos + n]
        pos += n
        return v

    nodes = cells = None
    types = None
    data = {}
    nc = 0
    try:
        while pos < len(toks):
            key = take()[0]
            if key == "POINTS":
                n, _ = take(2)
                nodes = np.array(take(3 * int(n)), dtype=float).reshape(-1, 3)
            elif key == "CELLS":
                nc, size = (int(v) for v in take(2))
                flat = np.array(take(size), dtype=np.int64)
                k = flat[0]
                if size != nc * (k + 1):
                    raise VtkFormatError("mixed cell sizes are not supported")
                cells = flat.reshape(nc, k + 1)[:, 1:]
            elif key == "CELL_TYPES":
                types = np.array(take(int(take()[0])), dtype=np.int64)
            elif key == "CELL_DATA":
                if int(take()[0]) != nc:
                    raise VtkFormatError("CELL_DATA size does not match CELLS")
            elif key == "SCALARS":
                name, _, ncomp = take(3)
                if int(ncomp) != 1:
                    raise VtkFormatError("only single-component scalars are supported")
                if take(2) != ["LOOKUP_TABLE", "default"]:
                    raise VtkFormatError("expected LOOKUP_TABLE default")
                data[name] = np.array(take(nc), dtype=float)
            else:
                raise VtkFormatError(f"unsupported keyword {key!r}")
    except ValueError as exc:
        if isinstance(exc, VtkFormatError):
            raise
        raise VtkFormatError(str(exc)) from exc
    if nodes is None or cells is None:
        raise VtkFormatError("missing POINTS or CELLS")
    if types is not None and np.any(types != VTK_CELL_TYPES.get(cells.shape[1] - 1)):
        raise VtkFormatError("cell types do not match the connectivity")
    return nodes, cells, data
