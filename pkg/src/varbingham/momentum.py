"""Velocity/pressure stepping: BDF2 + AB2 incremental pressure correction on the MAC grid.

One step of the scheme, for ``n >= 1``::

    rho (3 v* - 4 v^n + v^{n-1}) / (2 dt) + rho (2 N(v^n) - N(v^{n-1}))
        = -grad p^n + eta lap v* + div sigma + f
    lap phi = 3 rho / (2 dt) div v*
    v^{n+1} = v* - 2 dt / (3 rho) grad phi,     p^{n+1} = p^n + phi

The first step uses backward Euler with explicit convection. The Bingham
stress enters either through the regularized map evaluated on ``v^n``
(with a constant stabilizing viscosity), or through a multiplier ``lam``
with ``sigma = q lam`` updated by ``lam <- P(lam + r D v)``. In the second
case the yield iteration is the outer loop and every iterate ``v`` is
pressure-projected before the multiplier update; the multiplier is
warm-started from the previous step, so a stationary state satisfies the
yield graph exactly even when a step stops at ``max_iters``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CompatibilityError, ConfigError, DivergenceError, ParameterError, SolverError
from .linsolve import FactorizedSolver
from .mesh import (
    SIDES,
    BoundarySpec,
    Grid,
    SideBC,
    SiteTensors,
    StaggeredVelocity,
    SymTensorField,
    cells_to_corners,
    div_tensor,
    divergence,
    field_from_sites,
    gradient_p,
    grad_sq_integral,
    laplacian_matrix_cells,
    laplacian_matrix_u,
    laplacian_matrix_v,
    pad_u_y,
    pad_v_x,
    site_tensors,
    sym_gradient,
    tensor_inner,
    vector_laplacian,
    velocity_inner,
)
from .rheology import PhysicalParams, project_unit_ball, regularized_stress, solid_pressure_field, yield_field

DIV_TOL = 1e-8


# --- boundary conditions -----------------------------------------------------


@dataclass(frozen=True)
class Inflow:
    """Poiseuille-type inflow with peak velocity ``umax``."""

    umax: float = 1.0

    def profile(self, s: np.ndarray, length: float) -> np.ndarray:
        return 4.0 * self.umax * s * (length - s) / length**2


_PLAIN = ("noslip", "slip", "outflow")


@dataclass(frozen=True)
class VelocityBoundarySpec:
    left: str | Inflow = "noslip"
    right: str | Inflow = "noslip"
    bottom: str | Inflow = "noslip"
    top: str | Inflow = "noslip"

    def __post_init__(self):
        for s in SIDES:
            k = getattr(self, s)
            if not (isinstance(k, Inflow) or k in _PLAIN):
                raise ConfigError(f"unknown velocity boundary kind {k!r}", field=f"bc.vel.{s}")
            if (isinstance(k, Inflow) or k == "outflow") and s in ("bottom", "top"):
                raise ConfigError("inflow/outflow supported on left/right sides only", field=f"bc.vel.{s}")
        if sum(getattr(self, s) == "outflow" for s in SIDES) > 1:
            raise ConfigError("at most one outflow side", field="bc.vel")

    @classmethod
    def channel(cls, umax: float = 1.0) -> "VelocityBoundarySpec":
        return cls(Inflow(umax), "outflow", "noslip", "noslip")

    def kind(self, side: str) -> str:
        k = getattr(self, side)
        return "inflow" if isinstance(k, Inflow) else k

    @property
    def outflow_side(self) -> str | None:
        for s in SIDES:
            if self.kind(s) == "outflow":
                return s
        return None

    def tangential(self) -> BoundarySpec:
        """Wall closure for the tangential component."""
        return BoundarySpec(*(SideBC("neumann") if self.kind(s) in ("slip", "outflow") else SideBC("dirichlet", 0.0)
                              for s in SIDES))

    def pressure_bc(self) -> BoundarySpec:
        return BoundarySpec(*(SideBC("dirichlet", 0.0) if self.kind(s) == "outflow" else SideBC("neumann")
                              for s in SIDES))


def boundary_net_outflux(vel: StaggeredVelocity) -> float:
    g = vel.grid
    return float(np.sum(vel.u[-1] - vel.u[0]) * g.hy + np.sum(vel.v[:, -1] - vel.v[:, 0]) * g.hx)


def apply_velocity_bc(vel: StaggeredVelocity, bc: VelocityBoundarySpec, extrapolate_outflow=True) -> StaggeredVelocity:
    """Write boundary-normal face values in place and return ``vel``.

    An outflow side gets a zero normal gradient followed by a uniform shift
    that balances the net boundary flux.
    """
    g = vel.grid
    for side, arr, idx, coord, length in (
        ("left", vel.u, 0, g.yc, g.Ly),
        ("right", vel.u, -1, g.yc, g.Ly),
        ("bottom", vel.v, 0, g.xc, g.Lx),
        ("top", vel.v, -1, g.xc, g.Lx),
    ):
        k = getattr(bc, side)
        axis0 = side in ("left", "right")
        if isinstance(k, Inflow):
            vals = k.profile(coord, length)
            if side == "right":
                vals = -vals
        elif k in ("noslip", "slip"):
            vals = 0.0
        else:
            if not extrapolate_outflow:
                continue
            vals = arr[1] if idx == 0 else arr[-2]
        if axis0:
            arr[idx, :] = vals
        else:
            arr[:, idx] = vals
    out = bc.outflow_side
    if out is not None:
        F = boundary_net_outflux(vel)
        if out == "right":
            vel.u[-1] -= F / g.Ly
        else:
            vel.u[0] += F / g.Ly
    return vel


# --- state and modes -------------------------------------------------------


@dataclass(frozen=True)
class Regularized:
    """Explicit regularized stress ``q D/(|D| + eps)`` evaluated on ``v^n``.

    ``stab`` is a constant viscosity added implicitly and subtracted on
    ``v^n``; it cancels at steady state and keeps the explicit stress stable.
    ``None`` picks ``q_bound / (2 eps)``, the smallest value that kept the
    kinetic energy non-increasing in our stopping-flow tests.
    """

    eps: float = 1e-3
    stab: float | None = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ParameterError("eps must be > 0")


@dataclass(frozen=True)
class Projection:
    r_uzawa: float = 1.0
    max_iters: int = 500
    tol: float = 1e-8

    def __post_init__(self):
        if not self.r_uzawa > 0:
            raise ParameterError("r_uzawa must be > 0")
        if self.max_iters < 1 or not self.tol > 0:
            raise ParameterError("max_iters >= 1 and tol > 0 required")


@dataclass
class StepInfo:
    iterations: int = 0
    converged: bool = True
    lam_increment: float = 0.0
    div_max: float = 0.0
    plastic_rate: float = 0.0
    viscous_rate: float = 0.0
    forcing_rate: float = 0.0


@dataclass
class MomentumState:
    v: StaggeredVelocity
    p: np.ndarray
    sigma: SymTensorField
    lam: SiteTensors
    v_prev: StaggeredVelocity | None = None
    t: float = 0.0
    step_index: int = 0
    info: StepInfo = field(default_factory=StepInfo)

    @classmethod
    def initial(cls, v0: StaggeredVelocity, p0: np.ndarray | None = None) -> "MomentumState":
        g = v0.grid
        p = np.zeros(g.cell_shape) if p0 is None else g.check_cell(p0, "p0").copy()
        return cls(v0.copy(), p, SymTensorField.zeros(g), SiteTensors.zeros(g))

    def copy(self) -> "MomentumState":
        return MomentumState(
            self.v.copy(), self.p.copy(), self.sigma.copy(), self.lam.copy(),
            None if self.v_prev is None else self.v_prev.copy(), self.t, self.step_index, replace(self.info),
        )


# --- pointwise pieces --------------------------------------------------------


def convection(w: StaggeredVelocity, tbc: BoundarySpec) -> StaggeredVelocity:
    """Divergence-form ``(w.grad) w`` on interior faces."""
    g = w.grid
    u, v = w.u, w.v
    uc = 0.5 * (u[1:] + u[:-1])
    vc = 0.5 * (v[:, 1:] + v[:, :-1])
    up = pad_u_y(u, g, tbc)
    vp = pad_v_x(v, g, tbc)
    uv = 0.25 * (up[:, 1:] + up[:, :-1]) * (vp[1:] + vp[:-1])
    nu = np.zeros(g.u_shape)
    nv = np.zeros(g.v_shape)
    nu[1:-1] = np.diff(uc**2, axis=0) / g.hx + np.diff(uv[1:-1], axis=1) / g.hy
    nv[:, 1:-1] = np.diff(uv[:, 1:-1], axis=0) / g.hx + np.diff(vc**2, axis=1) / g.hy
    return StaggeredVelocity(nu, nv, g)


def ab2_convection(v_n: StaggeredVelocity, v_nm1: StaggeredVelocity | None, tbc: BoundarySpec) -> StaggeredVelocity:
    if v_nm1 is None:
        return convection(v_n, tbc)
    return 2.0 * convection(v_n, tbc) - convection(v_nm1, tbc)


def site_yield(q: np.ndarray):
    return q, cells_to_corners(q)


def stress_from_multiplier(q: np.ndarray, lam: SiteTensors, grid: Grid) -> SymTensorField:
    qc, qk = site_yield(q)
    return field_from_sites(SiteTensors(qc[..., None, None] * lam.center, qk[..., None, None] * lam.corner), grid)


def bingham_update_regularized(q: np.ndarray, v: StaggeredVelocity, eps: float,
                               tbc: BoundarySpec | None = None) -> SymTensorField:
    tbc = BoundarySpec() if tbc is None else tbc
    D = site_tensors(sym_gradient(v, tbc))
    qc, qk = site_yield(q)
    S = SiteTensors(regularized_stress(qc, D.center, eps), regularized_stress(qk, D.corner, eps))
    return field_from_sites(S, v.grid)


def bingham_update_projection(q: np.ndarray, v_iter: StaggeredVelocity, lam: SiteTensors, r_uzawa: float,
                              tbc: BoundarySpec | None = None):
    """One multiplier update; returns ``(sigma, lam_new)`` with ``sigma = q lam_new``."""
    tbc = BoundarySpec() if tbc is None else tbc
    D = site_tensors(sym_gradient(v_iter, tbc))
    new = SiteTensors(project_unit_ball(lam.center + r_uzawa * D.center),
                      project_unit_ball(lam.corner + r_uzawa * D.corner))
    return stress_from_multiplier(q, new, v_iter.grid), new


# --- the stepper -----------------------------------------------------------


class MomentumStepper:
    """Owns the factorized Helmholtz and pressure operators for one grid and ``dt``."""

    def __init__(self, grid: Grid, params: PhysicalParams, bc: VelocityBoundarySpec, dt: float,
                 mode: Regularized | Projection | None = None, convection: bool = True,
                 forcing: StaggeredVelocity | None = None, rheology: bool = True):
        if not dt > 0:
            raise ParameterError("dt must be > 0")
        self.grid = grid
        self.params = params
        self.bc = bc
        self.dt = dt
        self.mode = Regularized() if mode is None else mode
        self.convection = convection
        self.rheology = rheology and params.q0 > 0
        self.forcing = forcing
        self.tbc = bc.tangential()
        self.p_s = solid_pressure_field(grid, params)
        self.q_bound = float(params.q0 * max(self.p_s.max(), 0.0))
        self.stab = 0.0
        if self.rheology and isinstance(self.mode, Regularized):
            self.stab = self.mode.stab if self.mode.stab is not None else 0.5 * self.q_bound / self.mode.eps
        self._Lu = laplacian_matrix_u(grid, self.tbc)
        self._Lv = laplacian_matrix_v(grid, self.tbc)
        self._helm: dict[tuple, tuple[FactorizedSolver, FactorizedSolver]] = {}
        pbc = bc.pressure_bc()
        self._pinned = bc.outflow_side is None
        L = laplacian_matrix_cells(grid, pbc).tolil()
        if self._pinned:
            L[0, :] = 0.0
            L[0, 0] = 1.0
        self._poisson = FactorizedSolver(L.tocsc(), name="pressure Poisson")

    # -- linear algebra
    def _helmholtz(self, a0: float):
        key = (a0,)
        if key not in self._helm:
            import scipy.sparse as sp

            mu = self.params.eta + self.stab
            c = self.params.rho * a0 / self.dt
            Au = c * sp.identity(self._Lu.shape[0]) - mu * self._Lu
            Av = c * sp.identity(self._Lv.shape[0]) - mu * self._Lv
            self._helm[key] = (FactorizedSolver(Au, name="Helmholtz u"), FactorizedSolver(Av, name="Helmholtz v"))
        return self._helm[key]

    def _solve_helmholtz(self, rhs: StaggeredVelocity, a0: float) -> tuple[np.ndarray, np.ndarray]:
        su, sv = self._helmholtz(a0)
        xu = su.solve(rhs.u[1:-1].ravel()).reshape(self.grid.nx - 1, self.grid.ny)
        xv = sv.solve(rhs.v[:, 1:-1].ravel()).reshape(self.grid.nx, self.grid.ny - 1)
        return xu, xv

    # -- building blocks
    def yield_field(self, p_f: np.ndarray) -> np.ndarray:
        return yield_field(p_f, self.p_s, self.params)

    def boundary_template(self, state: MomentumState) -> StaggeredVelocity:
        """Velocity with current boundary-normal values and zero interior."""
        w = apply_velocity_bc(state.v.copy(), self.bc, extrapolate_outflow=False)
        w.u[1:-1] = 0.0
        w.v[:, 1:-1] = 0.0
        return w

    def predict_rhs(self, state: MomentumState, bdf2: bool):
        """Right-hand side of the Helmholtz solve without the stress term.

        Returns ``(rhs, template, a0)``; ``template`` carries the boundary
        normal values of the intermediate velocity.
        """
        g, rho, dt = self.grid, self.params.rho, self.dt
        a0 = 1.5 if bdf2 else 1.0
        hist = (2.0 * state.v - 0.5 * state.v_prev) if bdf2 else state.v
        rhs = hist * (rho / dt) - self._convection(state, bdf2) * rho - gradient_p(state.p, g)
        if self.forcing is not None:
            rhs = rhs + self.forcing
        if self.stab:
            # lagged on v^n rather than extrapolated: mu_s lap(v* - v^n) is dissipative
            rhs = rhs - vector_laplacian(state.v, self.tbc) * self.stab
        tmpl = self.boundary_template(state)
        rhs = rhs + vector_laplacian(tmpl, self.tbc) * (self.params.eta + self.stab)
        return rhs, tmpl, a0

    def solve_intermediate(self, rhs: StaggeredVelocity, tmpl: StaggeredVelocity, a0: float,
                           sigma: SymTensorField | None = None) -> StaggeredVelocity:
        if sigma is not None:
            rhs = rhs + div_tensor(sigma)
        xu, xv = self._solve_helmholtz(rhs, a0)
        v = tmpl.copy()
        v.u[1:-1] = xu
        v.v[:, 1:-1] = xv
        return self._finish_predict(v)

    def predict_velocity(self, state: MomentumState, sigma: SymTensorField, bdf2: bool | None = None) -> StaggeredVelocity:
        """Intermediate velocity for a given stress (no yield iteration)."""
        bdf2 = state.v_prev is not None if bdf2 is None else bdf2
        rhs, tmpl, a0 = self.predict_rhs(state, bdf2)
        return self.solve_intermediate(rhs, tmpl, a0, sigma)

    def _finish_predict(self, v_star: StaggeredVelocity) -> StaggeredVelocity:
        if not v_star.is_finite():
            raise DivergenceError("non-finite intermediate velocity")
        return apply_velocity_bc(v_star, self.bc)

    def _convection(self, state, bdf2):
        if not self.convection:
            return StaggeredVelocity.zeros(self.grid)
        return ab2_convection(state.v, state.v_prev if bdf2 else None, self.tbc)

    def pressure_correct(self, v_star: StaggeredVelocity, state: MomentumState, a0: float = 1.5):
        """Project ``v_star``; returns ``(v_new, p_new)``."""
        g = self.grid
        c = self.params.rho * a0 / self.dt
        div = divergence(v_star)
        rhs = c * div
        if self._pinned:
            net = float(np.sum(div)) * g.cell_area
            scale = max(1.0, float(np.abs(v_star.u[[0, -1]]).sum() * g.hy + np.abs(v_star.v[:, [0, -1]]).sum() * g.hx))
            if abs(net) > 1e-10 * scale:
                raise CompatibilityError(f"net boundary flux {net:.3e} with all-Neumann pressure")
            rhs = rhs.copy()
            rhs[0, 0] = 0.0
        phi = self._poisson.solve(rhs.ravel()).reshape(g.cell_shape)
        if self._pinned:
            phi -= phi.mean()
        gp = gradient_p(phi, g)
        out = self.bc.outflow_side
        if out == "right":
            gp.u[-1] = -2.0 * phi[-1] / g.hx
        elif out == "left":
            gp.u[0] = 2.0 * phi[0] / g.hx
        v_new = v_star - gp * (1.0 / c)
        dmax = float(np.abs(divergence(v_new)).max())
        if not np.isfinite(dmax):
            raise DivergenceError("non-finite velocity after projection")
        if dmax > DIV_TOL:
            raise SolverError(f"divergence {dmax:.3e} after projection exceeds {DIV_TOL}")
        return v_new, state.p + phi

    # -- full step
    def step(self, state: MomentumState, p_f: np.ndarray) -> MomentumState:
        bdf2 = state.v_prev is not None
        q = self.yield_field(p_f) if self.rheology else None
        rhs, tmpl, a0 = self.predict_rhs(state, bdf2)
        info = StepInfo()
        lam = state.lam
        sigma_is_zero = q is None or not q.any()
        if sigma_is_zero:
            sigma = SymTensorField.zeros(self.grid)
            v_star = self.solve_intermediate(rhs, tmpl, a0)
        elif isinstance(self.mode, Regularized):
            sigma = bingham_update_regularized(q, state.v, self.mode.eps, self.tbc)
            v_star = self.solve_intermediate(rhs, tmpl, a0, sigma)
        else:
            m = self.mode
            info.converged = False
            for k in range(1, m.max_iters + 1):
                sigma = stress_from_multiplier(q, lam, self.grid)
                v_star = self.solve_intermediate(rhs, tmpl, a0, sigma)
                # the multiplier sees the projected iterate, so it never has to
                # absorb the divergence of the intermediate velocity
                v_new, p_new = self.pressure_correct(v_star, state, a0)
                _, new = bingham_update_projection(q, v_new, lam, m.r_uzawa, self.tbc)
                info.lam_increment = float(new.max_abs_diff(lam))
                lam = new
                info.iterations = k
                if info.lam_increment <= m.tol:
                    info.converged = True
                    break
        if not isinstance(self.mode, Projection) or sigma_is_zero:
            v_new, p_new = self.pressure_correct(v_star, state, a0)
        D_new = sym_gradient(v_new, self.tbc)
        info.div_max = float(np.abs(divergence(v_new)).max())
        info.plastic_rate = tensor_inner(sigma, D_new)
        info.viscous_rate = self.params.eta * grad_sq_integral(v_new, self.tbc)
        if self.forcing is not None:
            info.forcing_rate = velocity_inner(self.forcing, v_new)
        n = state.step_index + 1
        return MomentumState(v_new, p_new, sigma, lam, state.v.copy(), state.t + self.dt, n, info)

    def bootstrap_first_step(self, state: MomentumState, p_f: np.ndarray) -> MomentumState:
        if state.step_index != 0 or state.v_prev is not None:
            raise ParameterError("bootstrap applies to the first step only")
        return self.step(state, p_f)


def kinetic_energy(v: StaggeredVelocity, rho: float) -> float:
    return 0.5 * rho * velocity_inner(v, v)


def save_state(state: MomentumState, path) -> None:
    """Write both time levels and the multiplier; enough for a bitwise restart."""
    g = state.v.grid
    arrays = dict(
        grid=np.array([g.nx, g.ny, g.Lx, g.Ly]), u=state.v.u, v=state.v.v, p=state.p,
        s11=state.sigma.d11, s22=state.sigma.d22, s12=state.sigma.d12,
        lam_center=state.lam.center, lam_corner=state.lam.corner,
        t=np.array(state.t), step_index=np.array(state.step_index),
    )
    if state.v_prev is not None:
        arrays.update(u_prev=state.v_prev.u, v_prev=state.v_prev.v)
    np.savez(path, **arrays)


def load_state(path) -> MomentumState:
    with np.load(path) as z:
        nx, ny, Lx, Ly = z["grid"]
        g = Grid(int(nx), int(ny), float(Lx), float(Ly))
        prev = StaggeredVelocity(z["u_prev"], z["v_prev"], g) if "u_prev" in z else None
        return MomentumState(
            StaggeredVelocity(z["u"], z["v"], g), z["p"], SymTensorField(z["s11"], z["s22"], z["s12"], g),
            SiteTensors(z["lam_center"], z["lam_corner"]), prev, float(z["t"]), int(z["step_index"]),
        )
