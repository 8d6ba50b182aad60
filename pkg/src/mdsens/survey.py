"""Electrode layouts, named arrays and configuration enumeration."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

ABSENT = -1


@dataclass(frozen=True, order=True)
class Quadrupole:
    """Current electrodes ``x0`` (C1), ``x1`` (C2); potential electrodes ``y0`` (P1), ``y1`` (P2).

    ``ABSENT`` (-1) marks a remote electrode.
    """

    x0: int
    x1: int
    y0: int
    y1: int

    def __post_init__(self):
        idx = (self.x0, self.x1, self.y0, self.y1)
        if any(i < ABSENT for i in idx):
            raise ValueError(f"invalid electrode index in {idx}")
        present = [i for i in idx if i != ABSENT]
        if len(set(present)) != len(present):
            raise ValueError(f"electrodes repeat in {idx}")
        if self.x0 == ABSENT and self.x1 == ABSENT:
            raise ValueError("no current electrode")
        if self.y0 == ABSENT and self.y1 == ABSENT:
            raise ValueError("no potential electrode")

    def as_tuple(self) -> tuple:
        return (self.x0, self.x1, self.y0, self.y1)

    def reciprocal(self) -> "Quadrupole":
        return Quadrupole(self.y0, self.y1, self.x0, self.x1)

    def canonical(self) -> "Quadrupole":
        """Representative shared by a configuration and its reciprocal.

        Pairs are sorted internally. For pole-dipoles the single electrode is
        the current side; otherwise the lexicographically smaller pair is.
        """
        c = _sorted_pair(self.x0, self.x1)
        p = _sorted_pair(self.y0, self.y1)
        c_pole = c[1] == ABSENT
        p_pole = p[1] == ABSENT
        if c_pole != p_pole:
            swap = p_pole
        else:
            swap = _pair_key(p) < _pair_key(c)
        if swap:
            c, p = p, c
        return Quadrupole(*c, *p)


def _sorted_pair(a, b):
    # present electrodes first, ascending; remote last
    if a == ABSENT:
        return (b, a)
    if b == ABSENT:
        return (a, b)
    return (a, b) if a < b else (b, a)


def _pair_key(p):
    big = 1 << 30
    return tuple(big if i == ABSENT else i for i in p)


@dataclass(frozen=True)
class ElectrodeLayout:
    positions: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "positions", pos)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"e{i}" for i in range(len(pos))))
        if len(self.labels) != len(pos):
            raise ValueError("one label per electrode required")
        if len(pos) > 1:
            d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
            d[np.diag_indices(len(pos))] = np.inf
            if d.min() == 0:
                raise ValueError("electrode positions must be distinct")

    def __len__(self) -> int:
        return len(self.positions)


def wenner_alpha(line, step: int = 1) -> list:
    """In-line Wenner-alpha quadrupoles C1-P1-P2-C2 with spacing ``step``."""
    line = list(line)
    if len(line) < 4:
        raise ValueError("Wenner-alpha needs at least 4 electrodes")
    if step < 1:
        raise ValueError("step must be positive")
    out = []
    for i in range(len(line) - 3 * step):
        c1, p1, p2, c2 = (line[i + k * step] for k in range(4))
        out.append(Quadrupole(c1, c2, p1, p2))
    return out


def dipole_dipole(line, step: int = 1, n: int = 1) -> list:
    """In-line dipole-dipole quadrupoles C2-C1-P1-P2, ``n`` dipole lengths between C1 and P1."""
    line = list(line)
    if len(line) < 4:
        raise ValueError("dipole-dipole needs at least 4 electrodes")
    if step < 1 or n < 1:
        raise ValueError("step and n must be positive")
    span = (n + 2) * step
    out = []
    for i in range(len(line) - span):
        c2 = line[i]
        c1 = line[i + step]
        p1 = line[i + step + n * step]
        p2 = line[i + 2 * step + n * step]
        out.append(Quadrupole(c1, c2, p1, p2))
    return out


def _kfactor_arrays(pos, x0, x1, y0, y1):
    """Vectorized ``|K|``; entries with a vanishing denominator are ``inf``."""
    den = np.zeros(x0.shape)
    scale = np.zeros(x0.shape)
    for a, b, s in ((x0, y0, 1.0), (x1, y0, -1.0), (x0, y1, -1.0), (x1, y1, 1.0)):
        ok = (a != ABSENT) & (b != ABSENT)
        t = np.zeros(x0.shape)
        t[ok] = 1.0 / np.linalg.norm(pos[a[ok]] - pos[b[ok]], axis=1)
        den += s * t
        scale += t
    with np.errstate(divide="ignore"):
        k = np.abs(2.0 * np.pi / den)
    k[np.abs(den) <= 1e-12 * scale] = np.inf
    return k


def enumerate_configs(layout: ElectrodeLayout, k_max: float = np.inf, return_k: bool = False):
    """All canonical configurations with ``|K| < k_max`` (no filter for ``k_max = inf``).

    Four-electrode configurations use unordered current and potential pairs,
    with reciprocals removed. Pole-dipole configurations pair one current
    electrode with an unordered potential pair; pole-pole configurations are
    unordered pairs. Output is sorted by canonical form.
    """
    n = len(layout)
    if n < 2:
        raise ValueError("at least 2 electrodes required")
    pos = layout.positions
    blocks = []
    # four electrodes: pairs (a<b), (c<d), (a,b) < (c,d) lexicographically, disjoint
    iu, ju = np.triu_indices(n, 1)
    npairs = iu.size
    if n >= 4:
        P, Q = np.triu_indices(npairs, 1)
        a, b, c, d = iu[P], ju[P], iu[Q], ju[Q]
        keep = (a != c) & (a != d) & (b != c) & (b != d)
        blocks.append(np.stack([a[keep], b[keep], c[keep], d[keep]], axis=1))
    # pole-dipole: one current electrode, unordered potential pair; the reciprocal
    # (pair current, pole potential) maps to the same canonical entry
    if n >= 3:
        e = np.repeat(np.arange(n), npairs)
        c = np.tile(iu, n)
        d = np.tile(ju, n)
        keep = (e != c) & (e != d)
        blocks.append(np.stack([e[keep], np.full(keep.sum(), ABSENT), c[keep], d[keep]], axis=1))
    # pole-pole
    blocks.append(np.stack([iu, np.full(npairs, ABSENT), ju, np.full(npairs, ABSENT)], axis=1))
    allq = np.concatenate(blocks, axis=0).astype(np.int64)
    k = _kfactor_arrays(pos, allq[:, 0], allq[:, 1], allq[:, 2], allq[:, 3])
    # an infinite cap disables the filter, degenerate geometries included
    sel = np.ones(k.size, dtype=bool) if np.isinf(k_max) else k < k_max
    allq = allq[sel]
    k = k[sel]
    big = n + 1
    keyed = np.where(allq == ABSENT, big, allq)
    order = np.lexsort(keyed.T[::-1])
    allq = allq[order]
    k = k[order]
    if return_k:
        return allq, k
    return [Quadrupole(*map(int, r)) for r in allq]


def count_configs(n: int) -> int:
    """Unfiltered canonical count for ``n`` electrodes."""
    from math import comb

    return comb(n, 2) * comb(n - 2, 2) // 2 + n * comb(n - 1, 2) + comb(n, 2)


def configs_to_csv(rows, k_factors, stream=None) -> str:
    """Write ``x0,x1,y0,y1,k_factor`` rows; returns the text when no stream is given."""
    own = stream is None
    if own:
        stream = io.StringIO()
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["x0", "x1", "y0", "y1", "k_factor"])
    for r, kf in zip(rows, k_factors):
        t = r.as_tuple() if isinstance(r, Quadrupole) else tuple(int(v) for v in r)
        w.writerow([*t, repr(float(kf))])
    return stream.getvalue() if own else ""


def configs_from_csv(text: str):
    rd = csv.reader(io.StringIO(text))
    header = next(rd)
    if header != ["x0", "x1", "y0", "y1", "k_factor"]:
        raise ValueError(f"unexpected header {header}")
    qs, ks = [], []
    for row in rd:
        qs.append(Quadrupole(*(int(v) for v in row[:4])))
        ks.append(float(row[4]))
    return qs, np.array(ks)
