"""Scenario set-up and the coupled transport/momentum time loop."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig, serialize
from .diagnostics import (
    AuditReport,
    EnergyRecorder,
    EnergySample,
    RigidZoneReport,
    asymptotic_width,
    energy_audit,
    plug_onset,
    profile_extract,
    rigid_zone,
)
from .errors import NumericalError
from .io import state_fields, write_field_dump, write_profiles, write_summary, write_timeseries
from .mesh import Grid, StaggeredVelocity, cell_norm, cells_to_corners, sym_gradient, tensor_norm
from .momentum import MomentumState, MomentumStepper, Projection, apply_velocity_bc, save_state
from .transport import PfTransport, advective_cfl, dirichlet_values, truncate_initial

PF_TOL = 1e-12
DIV_TOL = 1e-8
PLASTIC_TOL = 1e-12
YIELD_TOL = 1e-12


def channel_poiseuille(grid: Grid, cfg: RunConfig):
    """Steady Newtonian channel flow: parabolic u and a linear pressure vanishing at the outlet."""
    y = grid.yc
    u = 4.0 * cfg.umax * y * (grid.Ly - y) / grid.Ly**2
    vel = StaggeredVelocity(np.broadcast_to(u, grid.u_shape).copy(), np.zeros(grid.v_shape), grid)
    G = 8.0 * cfg.params.eta * cfg.umax / grid.Ly**2
    p = np.broadcast_to((G * (grid.Lx - grid.xc))[:, None], grid.cell_shape).copy()
    return vel, p


def taylor_green(grid: Grid):
    X, Y = np.meshgrid(grid.xf, grid.yc, indexing="ij")
    u = np.sin(np.pi * X / grid.Lx) * np.cos(np.pi * Y / grid.Ly)
    X, Y = np.meshgrid(grid.xc, grid.yf, indexing="ij")
    v = -(grid.Ly / grid.Lx) * np.cos(np.pi * X / grid.Lx) * np.sin(np.pi * Y / grid.Ly)
    return StaggeredVelocity(u, v, grid)


def initial_fields(cfg: RunConfig):
    """Velocity, pressure and pore pressure at t = 0 for the configured scenario."""
    g = cfg.grid
    p = np.zeros(g.cell_shape)
    pf = np.full(g.cell_shape, cfg.pf_init)
    if cfg.scenario.startswith("channel"):
        vel, p = channel_poiseuille(g, cfg)
    elif cfg.scenario == "stokes_decay":
        vel = taylor_green(g)
    else:
        vel = StaggeredVelocity.zeros(g)
    if cfg.scenario == "diffusion_only":
        X, Y = np.meshgrid(g.xc / g.Lx, g.yc / g.Ly, indexing="ij")
        pf = np.sin(np.pi * X) * np.sin(np.pi * Y)
    vel = apply_velocity_bc(vel, cfg.vel_bc)
    hi = max([float(pf.max())] + dirichlet_values(cfg.pf_bc))
    return vel, p, truncate_initial(pf, 0.0, hi)


@dataclass
class RunReport:
    config: RunConfig
    state: MomentumState
    p_f: np.ndarray
    q: np.ndarray
    samples: list[EnergySample]
    rigid: RigidZoneReport
    audit: AuditReport | None
    steps: int
    dt: float
    dt_halvings: int
    nonconverged_steps: int
    max_uzawa_iters: int
    pf_bounds: tuple[float, float]
    pf_extremes: tuple[float, float]
    div_max: float
    min_plastic_per_site: float
    max_yield_excess: float
    steady: bool
    wall_time: float
    profiles: list[np.ndarray] = field(default_factory=list)

    @property
    def flags(self) -> dict[str, bool]:
        lo, hi = self.pf_bounds
        return {
            "pf_bounds_ok": self.pf_extremes[0] >= lo - PF_TOL and self.pf_extremes[1] <= hi + PF_TOL,
            "div_ok": self.div_max <= DIV_TOL,
            "plastic_ok": self.min_plastic_per_site >= -PLASTIC_TOL,
            "yield_bound_ok": self.max_yield_excess <= YIELD_TOL,
            "energy_ok": True if self.audit is None else self.audit.ok,
        }

    def summary(self) -> dict:
        g = self.config.grid
        last = self.samples[-1]
        asym = asymptotic_width(self.rigid)
        onset = plug_onset(self.rigid, 0.5 * asym) if asym > 0 else math.inf
        out = {
            "scenario": self.config.scenario,
            "grid": [g.nx, g.ny, g.Lx, g.Ly],
            "t_final": last.t,
            "steps": self.steps,
            "dt_final": self.dt,
            "dt_halvings": self.dt_halvings,
            "steady_reached": self.steady,
            "kinetic": last.kinetic,
            "viscous_cum": last.viscous_cum,
            "plastic_cum": last.plastic_cum,
            "div_max": self.div_max,
            "pf_min": self.pf_extremes[0],
            "pf_max": self.pf_extremes[1],
            "rigid_fraction": self.rigid.area_fraction,
            "plug_asymptotic_width": asym,
            "plug_onset_x": None if math.isinf(onset) else onset,
            "min_plastic_per_site": self.min_plastic_per_site,
            "max_yield_excess": self.max_yield_excess,
            "uzawa_nonconverged_steps": self.nonconverged_steps,
            "uzawa_max_iters": self.max_uzawa_iters,
            "flags": self.flags,
        }
        if self.audit is not None:
            a = self.audit
            out["energy_audit"] = {"ok": a.ok, "first_violation": a.first_violation, "worst_margin": a.worst_margin,
                                   "sup_v_sq": a.sup_v_sq, "grad_sq": a.grad_sq, "plastic_l1": a.plastic_l1}
        return out


class ScenarioFailure(NumericalError):
    def __init__(self, cause: NumericalError, dump_dir: Path | None):
        self.cause = cause
        self.dump_dir = dump_dir
        where = f" (state dumped to {dump_dir})" if dump_dir else ""
        super().__init__(f"{type(cause).__name__}: {cause}{where}")


def _site_count(g: Grid) -> int:
    return g.nx * g.ny + (g.nx + 1) * (g.ny + 1)


def run_scenario(cfg: RunConfig, until: float | None = None, output_dir=None, write: bool = True,
                 record_every_step: bool = True, progress=None) -> RunReport:
    """Run one scenario; writes dumps, ``timeseries.csv``, ``profiles.csv`` and ``summary.json``.

    On a numerical failure the current state is written to
    ``<output_dir>/failure`` and :class:`ScenarioFailure` is raised.
    """
    t0 = time.perf_counter()
    g, params = cfg.grid, cfg.params
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(serialize(cfg), encoding="ascii")
    t_end = cfg.t_end if until is None else until

    vel, p, pf = initial_fields(cfg)
    pf_data = [float(pf.min()), float(pf.max())] + dirichlet_values(cfg.pf_bc)
    pf_bounds = (min(pf_data), max(pf_data))
    momentum_on = cfg.scenario != "diffusion_only"
    dt = cfg.dt
    steppers: dict[float, MomentumStepper] = {}

    def stepper(dt_):
        if dt_ not in steppers:
            steppers[dt_] = MomentumStepper(g, params, cfg.vel_bc, dt_, cfg.mode, convection=cfg.convection)
        return steppers[dt_]

    st = stepper(dt)
    transport = PfTransport(g, params.K, cfg.pf_bc)
    tbc = st.tbc
    tol_rigid = cfg.rigid_threshold
    state = MomentumState.initial(vel, p)
    rec = EnergyRecorder(params.rho)

    def rigid_fraction(v):
        return float(np.mean(cell_norm(sym_gradient(v, tbc)) <= tol_rigid))

    rec.start(state, pf, rigid_fraction(state.v))
    pf_ext = [float(pf.min()), float(pf.max())]
    div_max = 0.0
    min_plastic = math.inf
    max_excess = -math.inf
    nonconv = max_iters = halvings = 0
    n = 0
    steady = False
    nsites = _site_count(g)
    proj = isinstance(cfg.mode, Projection)

    def dump(step):
        q = st.yield_field(pf)
        write_field_dump(state_fields(g, state.v, state.p, pf, q, tbc, tol_rigid, state.t), out, step)

    if write:
        dump(0)
    try:
        while t_end - state.t > 0.5 * dt:
            if momentum_on:
                while advective_cfl(state.v, dt) > 1.0:
                    dt *= 0.5
                    halvings += 1
                    st = stepper(dt)
                    state.v_prev = None  # restart the two-level history at the new step size
            pf = transport.advance(pf, state.v, dt)
            if momentum_on:
                v_old = state.v
                state = st.step(state, pf)
            else:
                v_old = state.v
                state = MomentumState(state.v, state.p, state.sigma, state.lam, state.v, state.t + dt,
                                      state.step_index + 1)
            n += 1
            info = state.info
            pf_ext = [min(pf_ext[0], float(pf.min())), max(pf_ext[1], float(pf.max()))]
            div_max = max(div_max, info.div_max)
            if momentum_on:
                min_plastic = min(min_plastic, info.plastic_rate / g.cell_area / nsites)
                if proj and st.rheology:
                    nonconv += not info.converged
                    max_iters = max(max_iters, info.iterations)
                    q = st.yield_field(pf)
                    excess = max(float((q * (tensor_norm(state.lam.center) - 1.0)).max()),
                                 float((cells_to_corners(q) * (tensor_norm(state.lam.corner) - 1.0)).max()))
                    max_excess = max(max_excess, excess)
            if record_every_step or t_end - state.t <= 0.5 * dt:
                rec.record(state, pf, rigid_fraction(state.v))
            if write and cfg.dump_every and n % cfg.dump_every == 0:
                dump(n)
            if progress is not None:
                progress(state, pf)
            if cfg.steady_tol > 0 and (state.v - v_old).max_abs() / dt < cfg.steady_tol:
                steady = True
                break
    except NumericalError as e:
        dump_dir = None
        if write:
            dump_dir = out / "failure"
            dump_dir.mkdir(exist_ok=True)
            save_state(state, dump_dir / "state.npz")
            np.save(dump_dir / "p_f.npy", pf)
            try:
                write_field_dump(state_fields(g, state.v, state.p, pf, st.yield_field(pf), tbc, tol_rigid, state.t),
                                 dump_dir, n)
            except Exception:  # a non-finite state can still be saved as npz above
                pass
        raise ScenarioFailure(e, dump_dir) from e

    if not record_every_step and rec.samples[-1].t != state.t:
        rec.record(state, pf, rigid_fraction(state.v))
    q = st.yield_field(pf)
    rz = rigid_zone(sym_gradient(state.v, tbc), tol_rigid)
    no_inflow = all(cfg.vel_bc.kind(s) in ("noslip", "slip") for s in ("left", "right", "bottom", "top"))
    audit = energy_audit(rec.samples, params.rho, params.eta) if (momentum_on and no_inflow) else None
    profiles = profile_extract(state.v, cfg.stations) if cfg.stations else []
    report = RunReport(
        cfg, state, pf, q, rec.samples, rz, audit, n, dt, halvings, nonconv, max_iters, pf_bounds, tuple(pf_ext),
        div_max, 0.0 if math.isinf(min_plastic) else min_plastic, 0.0 if math.isinf(max_excess) else max_excess,
        steady, time.perf_counter() - t0, profiles,
    )
    if write:
        if not cfg.dump_every or n % cfg.dump_every:
            dump(n)
        write_timeseries(rec.samples, out / "timeseries.csv")
        if profiles:
            write_profiles(g.yc, cfg.stations, profiles, out / "profiles.csv")
        write_summary(report.summary(), out / "summary.json")
    return report
