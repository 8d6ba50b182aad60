"""Sparse direct solver backends.

MKL Pardiso (through pypardiso) is used when it can be loaded; it needs far
less memory than SuperLU on 3D MPFA matrices. SuperLU from scipy is the
fallback and the reference.
"""
from __future__ import annotations

import importlib.metadata
import logging
import os

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

logger = logging.getLogger(__name__)


class FactorizationError(RuntimeError):
    pass


def _locate_mkl_rt() -> str | None:
    # pip installs libmkl_rt next to the interpreter prefix, which pypardiso
    # does not always search (e.g. /usr/local on Debian-based images)
    try:
        dist = importlib.metadata.distribution("mkl")
    except importlib.metadata.PackageNotFoundError:
        return None
    for f in dist.files or []:
        if "mkl_rt" in f.name:
            p = dist.locate_file(f)
            if os.path.exists(p):
                return os.path.realpath(p)
    return None


def _load_pardiso():
    if "PYPARDISO_MKL_RT" not in os.environ:
        path = _locate_mkl_rt()
        if path:
            os.environ["PYPARDISO_MKL_RT"] = path
    try:
        import pypardiso
    except (ImportError, OSError) as exc:
        logger.debug("pypardiso unavailable: %s", exc)
        return None
    return pypardiso


class SuperLUSolver:
    name = "superlu"

    def __init__(self, A: sps.spmatrix):
        try:
            self._lu = spla.splu(A.tocsc(), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise FactorizationError(str(exc)) from exc
        d = np.abs(self._lu.U.diagonal())
        bad = np.flatnonzero(d <= 1e-300)
        if bad.size:
            raise FactorizationError(f"zero pivot in column {int(self._lu.perm_c[bad[0]])}")

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(b)


class PardisoSolver:
    name = "pardiso"

    def __init__(self, A: sps.spmatrix, threads: int | None = None):
        mod = _load_pardiso()
        if mod is None:
            raise FactorizationError("pypardiso is not available")
        self._A = sps.csr_matrix(A, dtype=np.float64)
        self._A.sort_indices()
        self._ps = mod.PyPardisoSolver(mtype=11)
        if threads:
            self._ps.libmkl.MKL_Set_Num_Threads(int(threads))
        try:
            self._ps.factorize(self._A)
        except Exception as exc:  # pypardiso raises its own error type
            raise FactorizationError(str(exc)) from exc
        perturbed = int(self._ps.get_iparm(14))
        if perturbed:
            logger.debug("pardiso perturbed %d pivots", perturbed)

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._ps.solve(self._A, np.asfortranarray(b, dtype=np.float64))

    def __del__(self):
        ps = getattr(self, "_ps", None)
        if ps is not None:
            try:
                ps.free_memory(everything=True)
            except Exception:
                pass


def available_backends() -> list:
    out = ["superlu"]
    if _load_pardiso() is not None:
        out.insert(0, "pardiso")
    return out


def make_solver(A: sps.spmatrix, backend: str = "auto", threads: int | None = None):
    """Factorize ``A`` with the requested backend (``auto``, ``pardiso`` or ``superlu``)."""
    if backend not in ("auto", "pardiso", "superlu"):
        raise ValueError(f"unknown solver backend {backend!r}")
    if backend in ("auto", "pardiso"):
        try:
            return PardisoSolver(A, threads)
        except FactorizationError:
            if backend == "pardiso":
                raise
    return SuperLUSolver(A)
