"""Energy audits, rigid-zone geometry, graph residual sweeps and profiles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .mesh import (
    BoundarySpec,
    StaggeredVelocity,
    SymTensorField,
    cell_norm,
    cells_to_corners,
    site_tensors,
    sym_gradient,
)
from .momentum import MomentumState, kinetic_energy
from .rheology import GraphSample, graph_residual, regularized_stress


@dataclass(frozen=True)
class EnergySample:
    t: float
    kinetic: float
    viscous_cum: float
    plastic_cum: float
    div_max: float
    pf_min: float
    pf_max: float
    rigid_fraction: float = 0.0
    forcing_cum: float = 0.0


CSV_FIELDS = ("t", "kinetic", "viscous_cum", "plastic_cum", "div_max", "pf_min", "pf_max", "rigid_fraction")


class EnergyRecorder:
    """Accumulates the time integrals with the rectangle rule at step ends."""

    def __init__(self, rho: float = 1.0):
        self.rho = rho
        self.samples: list[EnergySample] = []

    def start(self, state: MomentumState, p_f: np.ndarray, rigid_fraction: float = 0.0) -> EnergySample:
        s = EnergySample(state.t, kinetic_energy(state.v, self.rho), 0.0, 0.0, state.info.div_max,
                         float(p_f.min()), float(p_f.max()), rigid_fraction)
        self.samples = [s]
        return s

    def record(self, state: MomentumState, p_f: np.ndarray, rigid_fraction: float = 0.0) -> EnergySample:
        if not self.samples:
            raise ParameterError("call start() before record()")
        prev = self.samples[-1]
        dt = state.t - prev.t
        info = state.info
        s = EnergySample(
            state.t,
            kinetic_energy(state.v, self.rho),
            prev.viscous_cum + dt * info.viscous_rate,
            prev.plastic_cum + dt * info.plastic_rate,
            info.div_max,
            float(p_f.min()),
            float(p_f.max()),
            rigid_fraction,
            prev.forcing_cum + dt * info.forcing_rate,
        )
        self.samples.append(s)
        return s


@dataclass(frozen=True)
class AuditReport:
    ok: bool
    first_violation: int | None
    worst_margin: float
    sup_v_sq: float
    grad_sq: float
    plastic_l1: float
    steps: int


def energy_audit(samples: list[EnergySample], rho: float = 1.0, eta: float = 1.0, rel_slack: float = 1e-8) -> AuditReport:
    """Check ``kinetic + viscous_cum/2 + plastic_cum <= kinetic(0) + forcing_cum + slack``.

    ``slack = rel_slack * kinetic(0) * steps``. The three aggregates are
    ``sup_t |v|^2``, ``int |grad v|^2`` and ``int sigma:Dv``.
    """
    if not samples:
        return AuditReport(True, None, 0.0, 0.0, 0.0, 0.0, 0)
    k0 = samples[0].kinetic
    first = None
    worst = -np.inf
    for n, s in enumerate(samples):
        lhs = s.kinetic + 0.5 * s.viscous_cum + s.plastic_cum
        margin = lhs - (k0 + s.forcing_cum + rel_slack * k0 * n)
        worst = max(worst, margin)
        if margin > 0 and first is None:
            first = n
    last = samples[-1]
    return AuditReport(
        first is None, first, float(worst),
        max(2.0 * s.kinetic / rho for s in samples), last.viscous_cum / eta, last.plastic_cum, len(samples) - 1,
    )


def eps_trend_table(audits: dict[float, AuditReport]) -> list[tuple]:
    """Rows ``(eps, sup_v_sq, grad_sq, plastic_l1)`` sorted by decreasing eps."""
    return [(e, a.sup_v_sq, a.grad_sq, a.plastic_l1) for e, a in sorted(audits.items(), reverse=True)]


# --- rigid zone --------------------------------------------------------------


@dataclass(frozen=True)
class RigidZoneReport:
    mask: np.ndarray
    area_fraction: float
    x: np.ndarray
    widths: np.ndarray

    def half_widths(self) -> np.ndarray:
        return 0.5 * self.widths


def _midline_span(col: np.ndarray) -> int:
    ny = col.size
    centre = [ny // 2 - 1, ny // 2] if ny % 2 == 0 else [ny // 2]
    seeds = [j for j in centre if col[j]]
    if not seeds:
        return 0
    lo, hi = min(seeds), max(seeds)
    while lo > 0 and col[lo - 1]:
        lo -= 1
    while hi < ny - 1 and col[hi + 1]:
        hi += 1
    return hi - lo + 1


def rigid_zone(D: SymTensorField, tol_rigid: float) -> RigidZoneReport:
    """Mask of cells with ``|Dv| <= tol_rigid`` and the plug width of each cell column."""
    if not tol_rigid > 0:
        raise ParameterError("tol_rigid must be > 0")
    g = D.grid
    mask = cell_norm(D) <= tol_rigid
    widths = np.array([_midline_span(mask[i]) for i in range(g.nx)]) * g.hy
    return RigidZoneReport(mask, float(mask.mean()), g.xc.copy(), widths)


def default_tol_rigid(umax: float, Ly: float) -> float:
    """``1e-2 umax/Ly``: above the |Dv| floor that a resolved plug shows at cell centres.

    A plug a few cells wide still reports |Dv| of a few 1e-3 umax/Ly at its
    centre because the cell-centred shear averages corner values taken across
    the yield surface.
    """
    return 1e-2 * umax / Ly


def asymptotic_width(report: RigidZoneReport, frac: float = 0.25) -> float:
    """Median plug width over the downstream ``frac`` of the columns."""
    n = max(1, int(round(frac * report.widths.size)))
    return float(np.median(report.widths[-n:]))


def plug_onset(report: RigidZoneReport, threshold: float) -> float:
    """First column centre whose plug width exceeds ``threshold`` (``inf`` if none)."""
    idx = np.nonzero(report.widths > threshold)[0]
    return float(report.x[idx[0]]) if idx.size else float("inf")


# --- graph residuals -----------------------------------------------------------


def snapshot_sites(q_cells: np.ndarray, vel: StaggeredVelocity, tbc: BoundarySpec | None = None):
    """Flatten ``(q, Dv)`` over both storage-site families."""
    tbc = BoundarySpec() if tbc is None else tbc
    D = site_tensors(sym_gradient(vel, tbc))
    q = np.concatenate([q_cells.ravel(), cells_to_corners(q_cells).ravel()])
    Ds = np.concatenate([D.center.reshape(-1, 2, 2), D.corner.reshape(-1, 2, 2)])
    return q, Ds


@dataclass(frozen=True)
class SweepRow:
    eps: float
    mean_r_eq: float
    max_r_eq: float
    max_r_bound: float
    bound: float
    within_bound: bool


def graph_limit_sweep(q: np.ndarray, D: np.ndarray, eps_list) -> list[SweepRow]:
    """Graph residuals of the regularized stress on a frozen ``(q, D)`` snapshot."""
    eps_list = [float(e) for e in eps_list]
    if not eps_list or min(eps_list) <= 0 or np.any(np.diff(eps_list) >= 0):
        raise ParameterError("eps_list must be positive and strictly decreasing")
    q = np.asarray(q, dtype=float)
    rows = []
    for eps in eps_list:
        r_eq, r_b = graph_residual(GraphSample(regularized_stress(q, D, eps), D, q))
        # the sitewise bound is q*eps; compare with a relative rounding allowance
        ok = bool(np.all(r_eq <= q * eps * (1 + 1e-12) + 1e-300))
        rows.append(SweepRow(eps, float(r_eq.mean()), float(r_eq.max()), float(r_b.max()), float(q.max()) * eps, ok))
    return rows


def multiplier_graph_residual(q_cells: np.ndarray, state: MomentumState, tbc: BoundarySpec | None = None):
    """``(r_eq, r_bound)`` for ``sigma = q lam`` at every site, as iterated in projection mode."""
    q, D = snapshot_sites(q_cells, state.v, tbc)
    lam = np.concatenate([state.lam.center.reshape(-1, 2, 2), state.lam.corner.reshape(-1, 2, 2)])
    return graph_residual(GraphSample(q[:, None, None] * lam, D, q))


# --- profiles ----------------------------------------------------------------


def profile_extract(vel: StaggeredVelocity, stations) -> list[np.ndarray]:
    """``u(y)`` at cell-centre heights, linearly interpolated to each station ``x``."""
    g = vel.grid
    out = []
    for x in stations:
        x = float(x)
        if not 0.0 <= x <= g.Lx:
            raise ParameterError(f"station x={x} outside [0, {g.Lx}]")
        s = x / g.hx
        i = min(int(np.floor(s)), g.nx - 1)
        w = s - i
        out.append((1 - w) * vel.u[i] + w * vel.u[i + 1])
    return out


def sample_row(s: EnergySample) -> tuple:
    return tuple(getattr(s, f) for f in CSV_FIELDS)

