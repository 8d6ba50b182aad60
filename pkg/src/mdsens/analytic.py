"""Closed-form half-space expressions for surface electrodes.

All functions take positions in metres with the ground surface at ``z = 0``
(or at the z of the source point) and return SI values.
"""
from __future__ import annotations

import numpy as np

ABSENT = -1


class DegenerateGeometry(ValueError):
    """Coincident points or a vanishing geometric factor."""


def halfspace_potential(rho: float, current: float, src, obs) -> np.ndarray:
    """Potential ``rho I / (2 pi r)`` of a surface point source."""
    src = np.asarray(src, dtype=float)
    obs = np.asarray(obs, dtype=float)
    r = np.linalg.norm(obs - src, axis=-1)
    if np.any(r == 0):
        raise DegenerateGeometry("observation point coincides with the source")
    return rho * current / (2.0 * np.pi * r)


def pole_pole_kernel(a, b, p, current: float = 1.0) -> np.ndarray:
    """Per-volume pole-pole sensitivity ``I/(4 pi^2) (p-a).(p-b) / (|p-a|^3 |p-b|^3)``.

    ``p`` may be an array of points of shape ``(..., 3)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.array_equal(a, b):
        raise DegenerateGeometry("pole-pole kernel needs two distinct electrodes")
    p = np.asarray(p, dtype=float)
    ra = p - a
    rb = p - b
    da = np.linalg.norm(ra, axis=-1)
    db = np.linalg.norm(rb, axis=-1)
    if np.any(da == 0) or np.any(db == 0):
        raise DegenerateGeometry("kernel evaluated at an electrode")
    return current / (4.0 * np.pi ** 2) * np.sum(ra * rb, axis=-1) / (da ** 3 * db ** 3)


def _positions(q, positions):
    """Map a quadrupole to four points (None for remote electrodes).

    ``q`` is either an object with ``x0, x1, y0, y1`` indices into
    ``positions`` or a 4-sequence of points / None.
    """
    if positions is not None:
        pts = []
        for i in (q.x0, q.x1, q.y0, q.y1):
            pts.append(None if i == ABSENT else np.asarray(positions[i], dtype=float))
    else:
        pts = [None if v is None else np.asarray(v, dtype=float) for v in q]
    present = [p for p in pts if p is not None]
    for i in range(len(present)):
        for j in range(i + 1, len(present)):
            if np.array_equal(present[i], present[j]):
                raise DegenerateGeometry("quadrupole electrodes coincide")
    return pts


def quadrupole_kernel(q, p, current: float = 1.0, positions=None) -> np.ndarray:
    """Signed sum ``K(x0,y0) - K(x1,y0) - K(x0,y1) + K(x1,y1)``; remote terms are dropped."""
    x0, x1, y0, y1 = _positions(q, positions)
    out = 0.0
    for a, b, s in ((x0, y0, 1.0), (x1, y0, -1.0), (x0, y1, -1.0), (x1, y1, 1.0)):
        if a is None or b is None:
            continue
        out = out + s * pole_pole_kernel(a, b, p, current)
    return np.asarray(out, dtype=float)


def geometric_factor(q, positions=None) -> float:
    """``|K|`` with ``K = 2 pi / (1/r00 - 1/r10 - 1/r01 + 1/r11)``.

    Raises
    ------
    DegenerateGeometry
        If the denominator vanishes (to relative precision) or points coincide.
    """
    x0, x1, y0, y1 = _positions(q, positions)
    den = 0.0
    scale = 0.0
    for a, b, s in ((x0, y0, 1.0), (x1, y0, -1.0), (x0, y1, -1.0), (x1, y1, 1.0)):
        if a is None or b is None:
            continue
        t = 1.0 / np.linalg.norm(a - b)
        den += s * t
        scale += t
    if scale == 0.0 or abs(den) <= 1e-12 * scale:
        raise DegenerateGeometry("zero geometric-factor denominator")
    return float(abs(2.0 * np.pi / den))
