"""Pore fluid pressure: explicit upwind advection, backward-Euler diffusion.

With ``advective_cfl <= 1`` the advection update is a convex combination of
neighbouring values and the diffusion matrix is an M-matrix, so every step
satisfies a discrete maximum principle over the old field and the Dirichlet
boundary values.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ParameterError, StepSizeError
from .linsolve import FactorizedSolver
from .mesh import SIDES, BoundarySpec, Grid, StaggeredVelocity, cell_velocity, laplacian_matrix_cells, laplacian_scalar
from .rheology import PhysicalParams

PfBoundarySpec = BoundarySpec


def check_pf_bc(bc: BoundarySpec) -> BoundarySpec:
    for s in SIDES:
        b = bc.side(s)
        if b.kind == "dirichlet" and np.any(np.asarray(b.value) < 0):
            raise ConfigError(f"negative Dirichlet value for p_f on the {s} side")
    return bc


def dirichlet_values(bc: BoundarySpec) -> list[float]:
    vals = []
    for s in SIDES:
        b = bc.side(s)
        if b.kind == "dirichlet":
            vals.extend(np.ravel(b.value).tolist())
    return vals


def truncate_initial(p: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if lo > hi:
        raise ParameterError(f"truncation bounds reversed: lo={lo} > hi={hi}")
    return np.clip(p, lo, hi)


def advective_cfl(vel: StaggeredVelocity, dt: float) -> float:
    uc, vc = cell_velocity(vel)
    g = vel.grid
    return float(dt * np.max(np.abs(uc) / g.hx + np.abs(vc) / g.hy))


def _upwind_pad(p: np.ndarray, grid: Grid, bc: BoundarySpec) -> np.ndarray:
    # inflow through a Dirichlet side carries the wall value itself
    out = np.zeros((grid.nx + 2, grid.ny + 2))
    out[1:-1, 1:-1] = p
    for side, sl, edge in (
        ("left", (0, slice(1, -1)), p[0, :]),
        ("right", (-1, slice(1, -1)), p[-1, :]),
        ("bottom", (slice(1, -1), 0), p[:, 0]),
        ("top", (slice(1, -1), -1), p[:, -1]),
    ):
        b = bc.side(side)
        out[sl] = np.broadcast_to(b.value, edge.shape) if b.kind == "dirichlet" else edge
    return out


class PfTransport:
    """Stepper for ``dp/dt + v.grad p - K lap p = 0`` on a fixed grid and boundary set."""

    def __init__(self, grid: Grid, K: float, bc: BoundarySpec):
        if not K > 0:
            raise ParameterError("K must be > 0")
        self.grid = grid
        self.K = K
        self.bc = check_pf_bc(bc)
        self._lap = laplacian_matrix_cells(grid, bc)
        self._bc_source = laplacian_scalar(np.zeros(grid.cell_shape), grid, bc)
        self._solvers: dict[float, FactorizedSolver] = {}

    def _solver(self, dt: float) -> FactorizedSolver:
        if dt not in self._solvers:
            A = sp.identity(self._lap.shape[0]) - dt * self.K * self._lap
            self._solvers[dt] = FactorizedSolver(A, name="p_f diffusion")
        return self._solvers[dt]

    def advect(self, p: np.ndarray, vel: StaggeredVelocity, dt: float) -> np.ndarray:
        g = self.grid
        uc, vc = cell_velocity(vel)
        q = _upwind_pad(p, g, self.bc)
        c = q[1:-1, 1:-1]
        dxm = (c - q[:-2, 1:-1]) / g.hx
        dxp = (q[2:, 1:-1] - c) / g.hx
        dym = (c - q[1:-1, :-2]) / g.hy
        dyp = (q[1:-1, 2:] - c) / g.hy
        adv = (np.maximum(uc, 0) * dxm + np.minimum(uc, 0) * dxp
               + np.maximum(vc, 0) * dym + np.minimum(vc, 0) * dyp)
        return p - dt * adv

    def diffuse(self, p: np.ndarray, dt: float) -> np.ndarray:
        rhs = p + dt * self.K * self._bc_source
        return self._solver(dt).solve(rhs.ravel()).reshape(self.grid.cell_shape)

    def advance(self, p: np.ndarray, vel: StaggeredVelocity, dt: float) -> np.ndarray:
        p = self.grid.check_cell(p, "p_f")
        cfl = advective_cfl(vel, dt)
        if cfl > 1.0:
            raise StepSizeError(f"advective CFL {cfl:.3f} > 1 (dt={dt})")
        return self.diffuse(self.advect(p, vel, dt), dt)


def advance_pf(p_f, vel: StaggeredVelocity, dt: float, params: PhysicalParams, bc: BoundarySpec) -> np.ndarray:
    """One transport step with a throwaway stepper (factorization not reused)."""
    return PfTransport(vel.grid, params.K, bc).advance(p_f, vel, dt)
