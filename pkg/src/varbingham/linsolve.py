"""Sparse linear solves with an explicit residual contract."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError

RTOL = 1e-10


def _check_residual(A, x, b, rtol, what):
    bn = np.linalg.norm(b)
    if not np.isfinite(x).all():
        raise SolverError(f"{what}: non-finite solution")
    if bn == 0.0:
        return
    res = np.linalg.norm(A @ x - b) / bn
    if res > rtol:
        raise SolverError(f"{what}: relative residual {res:.3e} exceeds {rtol:.1e}")


class FactorizedSolver:
    """Sparse LU factorization reused across time steps.

    Every solve is checked against ``rtol``; one step of iterative
    refinement is attempted before giving up.
    """

    def __init__(self, A: sp.spmatrix, rtol: float = RTOL, name: str = "linear solve"):
        self.A = sp.csc_matrix(A)
        self.rtol = rtol
        self.name = name
        # minimum degree on A + A^T: all matrices here are structurally symmetric
        self._lu = spla.splu(self.A, permc_spec="MMD_AT_PLUS_A")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = self._lu.solve(b)
        bn = np.linalg.norm(b)
        if bn == 0.0:
            return x
        r = b - self.A @ x
        if not np.linalg.norm(r) <= self.rtol * bn:
            x = x + self._lu.solve(r)
            _check_residual(self.A, x, b, self.rtol, self.name)
        return x


def cg_solve(A, b, rtol: float = RTOL, x0=None, name: str = "cg"):
    """Conjugate gradients, capped at ``10 n`` iterations."""
    n = A.shape[0]
    x, info = spla.cg(A, b, x0=x0, rtol=rtol, atol=0.0, maxiter=10 * n)
    if info != 0:
        raise SolverError(f"{name}: no convergence in {10 * n} iterations")
    _check_residual(A, x, b, rtol * 1.0001, name)
    return x
