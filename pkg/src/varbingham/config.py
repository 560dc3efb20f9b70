"""Flat ``key = value`` run configuration.

Every key has a global default; a scenario then overrides some of them,
and the file overrides both. :func:`serialize` writes every key, so
``parse_config(serialize(cfg)) == cfg`` for any valid config.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .diagnostics import default_tol_rigid
from .errors import ConfigError, ParameterError
from .mesh import SIDES, BoundarySpec, Grid, SideBC
from .momentum import Inflow, Projection, Regularized, VelocityBoundarySpec
from .rheology import PhysicalParams

SCENARIOS = ("channel_fluidized", "channel_bingham", "newtonian_poiseuille", "stokes_decay", "diffusion_only")
VEL_KINDS = ("noslip", "slip", "inflow", "outflow")


# --- value codecs ------------------------------------------------------------


def _float(s: str) -> float:
    v = float(s)
    if v != v or v in (float("inf"), float("-inf")):
        raise ValueError("not finite")
    return v


def _int(s: str) -> int:
    return int(s)


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _auto_float(s: str):
    return None if s == "auto" else _float(s)


def _fmt_auto(v) -> str:
    return "auto" if v is None else repr(float(v))


def _floats(s: str) -> tuple[float, ...]:
    s = s.strip()
    return tuple(_float(t) for t in s.split(",")) if s else ()


def _fmt_floats(v) -> str:
    return ", ".join(repr(float(x)) for x in v)


_PS_RE = re.compile(r"^constant\(\s*([^)]+)\)$")


def _ps_mode(s: str):
    if s == "lithostatic":
        return None
    m = _PS_RE.match(s)
    if not m:
        raise ValueError("expected 'lithostatic' or 'constant(<value>)'")
    return _float(m.group(1))


def _fmt_ps(v) -> str:
    return "lithostatic" if v is None else f"constant({float(v)!r})"


_PF_RE = re.compile(r"^dirichlet\(\s*([^)]+)\)$")


def _pf_side(s: str) -> SideBC:
    if s == "neumann":
        return SideBC("neumann")
    m = _PF_RE.match(s)
    if not m:
        raise ValueError("expected 'neumann' or 'dirichlet(<value>)'")
    return SideBC("dirichlet", _float(m.group(1)))


def _fmt_pf(b: SideBC) -> str:
    return "neumann" if b.kind == "neumann" else f"dirichlet({float(b.value)!r})"


def _choice(options):
    def parse(s: str) -> str:
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s

    return parse


# key -> (parser, formatter, default, help)
KEYS: dict[str, tuple] = {
    "scenario": (_choice(SCENARIOS), str, None, "one of " + ", ".join(SCENARIOS) + " (required)"),
    "grid.nx": (_int, str, 64, "cells along x"),
    "grid.ny": (_int, str, 64, "cells along y"),
    "grid.Lx": (_float, repr, 1.0, "domain length"),
    "grid.Ly": (_float, repr, 1.0, "domain height"),
    "time.dt": (_float, repr, 1e-3, "time step (halved automatically on CFL violation)"),
    "time.t_end": (_float, repr, 1.0, "final time"),
    "time.dump_every": (_int, str, 0, "field dump interval in steps; 0 dumps the final state only"),
    "time.steady_tol": (_float, repr, 0.0, "stop once max|v^{n+1}-v^n|/dt falls below this; 0 disables"),
    "params.rho": (_float, repr, 1.0, "density"),
    "params.eta": (_float, repr, 1.0, "viscosity"),
    "params.q0": (_float, repr, 0.2, "yield coefficient in q = q0 (p_s - p_f)^+"),
    "params.K": (_float, repr, 0.1, "pore pressure diffusivity"),
    "params.ps0": (_float, repr, 1.0, "lithostatic reference pressure"),
    "params.y0": (_float, repr, 1.0, "lithostatic reference height"),
    "params.g_mag": (_float, repr, 0.0, "gravity magnitude in the lithostatic profile"),
    "params.ps_mode": (_ps_mode, _fmt_ps, 1.0, "solid pressure: constant(<value>) or lithostatic"),
    "mode.kind": (_choice(("regularized", "projection")), str, "regularized", "stress treatment"),
    "mode.eps": (_float, repr, 1e-3, "regularization parameter"),
    "mode.stab": (_auto_float, _fmt_auto, None, "stabilizing viscosity for regularized mode; auto = max(q)/(2 eps)"),
    "mode.r_uzawa": (_float, repr, 1.0, "multiplier step"),
    "mode.max_iters": (_int, str, 500, "multiplier iterations per step"),
    "mode.tol": (_float, repr, 1e-8, "max multiplier increment for convergence"),
    "flow.convection": (_bool, lambda b: "true" if b else "false", True, "include the convective term"),
    "bc.vel.left": (_choice(VEL_KINDS), str, "noslip", "noslip | slip | inflow | outflow"),
    "bc.vel.right": (_choice(VEL_KINDS), str, "noslip", "noslip | slip | inflow | outflow"),
    "bc.vel.bottom": (_choice(VEL_KINDS[:2]), str, "noslip", "noslip | slip"),
    "bc.vel.top": (_choice(VEL_KINDS[:2]), str, "noslip", "noslip | slip"),
    "bc.inflow_umax": (_float, repr, 1.0, "peak velocity of the Poiseuille inflow"),
    "bc.pf.left": (_pf_side, _fmt_pf, SideBC("dirichlet", 0.0), "neumann | dirichlet(<value>)"),
    "bc.pf.right": (_pf_side, _fmt_pf, SideBC("dirichlet", 0.0), "neumann | dirichlet(<value>)"),
    "bc.pf.bottom": (_pf_side, _fmt_pf, SideBC("dirichlet", 0.0), "neumann | dirichlet(<value>)"),
    "bc.pf.top": (_pf_side, _fmt_pf, SideBC("dirichlet", 0.0), "neumann | dirichlet(<value>)"),
    "init.pf": (_float, repr, 0.0, "initial interior pore pressure (truncated to the data bounds)"),
    "output_dir": (str, str, "out", "directory for dumps, time series and summary"),
    "tol_rigid": (_auto_float, _fmt_auto, None, "rigid threshold on |Dv|; auto = 1e-2 umax/Ly"),
    "stations": (_floats, _fmt_floats, (), "comma-separated x positions for velocity profiles"),
}

_CHANNEL = {
    "grid.nx": 256, "grid.ny": 64, "grid.Lx": 4.0, "grid.Ly": 1.0,
    "time.dt": 2e-3, "time.t_end": 30.0, "time.dump_every": 2500,
    "bc.vel.left": "inflow", "bc.vel.right": "outflow",
    "stations": (0.25, 0.5, 1.0, 2.0, 3.0),
}

SCENARIO_DEFAULTS: dict[str, dict] = {
    "channel_bingham": dict(_CHANNEL),
    "channel_fluidized": dict(_CHANNEL, **{"bc.pf.left": SideBC("dirichlet", 1.0), "init.pf": 1.0}),
    "newtonian_poiseuille": {
        "grid.nx": 64, "grid.ny": 32, "grid.Lx": 2.0, "grid.Ly": 1.0, "params.q0": 0.0,
        "time.dt": 1e-2, "time.t_end": 20.0, "time.steady_tol": 1e-7,
        "bc.vel.left": "inflow", "bc.vel.right": "outflow", "stations": (1.5,),
    },
    "stokes_decay": {
        "grid.nx": 64, "grid.ny": 64, "params.q0": 0.0, "flow.convection": False,
        "time.dt": 1e-3, "time.t_end": 0.5,
        **{f"bc.vel.{s}": "slip" for s in SIDES}, **{f"bc.pf.{s}": SideBC("neumann") for s in SIDES},
    },
    "diffusion_only": {"grid.nx": 128, "grid.ny": 128, "time.dt": 1e-3, "time.t_end": 0.5, "params.q0": 0.0},
}


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    grid: Grid
    dt: float
    t_end: float
    dump_every: int
    steady_tol: float
    params: PhysicalParams
    mode: Regularized | Projection
    convection: bool
    vel_bc: VelocityBoundarySpec
    pf_bc: BoundarySpec
    pf_init: float
    output_dir: str
    tol_rigid: float | None
    stations: tuple[float, ...] = field(default=())
    inflow_umax: float = 1.0

    @property
    def umax(self) -> float:
        """Velocity scale: the inflow peak velocity."""
        return self.inflow_umax

    @property
    def rigid_threshold(self) -> float:
        return self.tol_rigid if self.tol_rigid is not None else default_tol_rigid(self.umax, self.grid.Ly)

    def with_updates(self, updates: dict) -> "RunConfig":
        """Copy with flat keys (``{"mode.eps": 1e-2}``) replaced and revalidated."""
        flat = to_flat(self)
        for key, v in updates.items():
            if key not in KEYS:
                raise ConfigError("unknown key", field=key)
            flat[key] = v
        return from_flat(flat)


# --- flat <-> structured -------------------------------------------------------


def defaults_for(scenario: str | None) -> dict:
    flat = {k: spec[2] for k, spec in KEYS.items()}
    if scenario is not None:
        flat.update(SCENARIO_DEFAULTS[scenario])
        flat["scenario"] = scenario
    return flat


def _mode_from_flat(f: dict):
    if f["mode.kind"] == "regularized":
        return Regularized(f["mode.eps"], f["mode.stab"])
    return Projection(f["mode.r_uzawa"], f["mode.max_iters"], f["mode.tol"])


def from_flat(f: dict, lines: dict | None = None) -> RunConfig:
    lines = lines or {}

    def fail(key, msg):
        raise ConfigError(msg, field=key, line=lines.get(key))

    if f.get("scenario") is None:
        fail("scenario", "scenario missing")
    for key in ("time.dt", "params.K", "params.rho", "params.eta", "mode.eps", "mode.r_uzawa", "mode.tol"):
        if not f[key] > 0:
            fail(key, "must be > 0")
    if f["time.t_end"] < f["time.dt"]:
        fail("time.t_end", "must be >= time.dt")
    if f["time.dump_every"] < 0:
        fail("time.dump_every", "must be >= 0")
    if f["time.steady_tol"] < 0:
        fail("time.steady_tol", "must be >= 0")
    if f["mode.max_iters"] < 1:
        fail("mode.max_iters", "must be >= 1")
    if f["mode.stab"] is not None and f["mode.stab"] < 0:
        fail("mode.stab", "must be >= 0")
    if f["tol_rigid"] is not None and not f["tol_rigid"] > 0:
        fail("tol_rigid", "must be > 0")
    if f["bc.inflow_umax"] < 0:
        fail("bc.inflow_umax", "must be >= 0")
    for key in ("grid.nx", "grid.ny"):
        if f[key] < 4:
            fail(key, "must be >= 4")
    try:
        grid = Grid(f["grid.nx"], f["grid.ny"], f["grid.Lx"], f["grid.Ly"])
    except ParameterError as e:
        fail("grid", str(e))
    for x in f["stations"]:
        if not 0.0 <= x <= grid.Lx:
            fail("stations", f"station {x!r} outside [0, {grid.Lx!r}]")
    try:
        params = PhysicalParams(
            rho=f["params.rho"], eta=f["params.eta"], q0=f["params.q0"], K=f["params.K"], ps0=f["params.ps0"],
            y0=f["params.y0"], g_mag=f["params.g_mag"], ps_const=f["params.ps_mode"],
        )
    except ParameterError as e:
        fail("params", str(e))
    inflow = Inflow(f["bc.inflow_umax"])
    sides = [inflow if f[f"bc.vel.{s}"] == "inflow" else f[f"bc.vel.{s}"] for s in SIDES]
    vel_bc = VelocityBoundarySpec(*sides)
    pf_sides = [f[f"bc.pf.{s}"] for s in SIDES]
    for s, b in zip(SIDES, pf_sides):
        if b.kind == "dirichlet" and b.value < 0:
            fail(f"bc.pf.{s}", "pore pressure boundary value must be >= 0")
    if f["init.pf"] < 0:
        fail("init.pf", "must be >= 0")
    return RunConfig(
        scenario=f["scenario"], grid=grid, dt=f["time.dt"], t_end=f["time.t_end"], dump_every=f["time.dump_every"],
        steady_tol=f["time.steady_tol"], params=params, mode=_mode_from_flat(f), convection=f["flow.convection"],
        vel_bc=vel_bc, pf_bc=BoundarySpec(*pf_sides), pf_init=f["init.pf"], output_dir=f["output_dir"],
        tol_rigid=f["tol_rigid"], stations=tuple(f["stations"]), inflow_umax=f["bc.inflow_umax"],
    )


def to_flat(cfg: RunConfig) -> dict:
    g, p, m = cfg.grid, cfg.params, cfg.mode
    f = defaults_for(cfg.scenario)
    f.update({
        "grid.nx": g.nx, "grid.ny": g.ny, "grid.Lx": g.Lx, "grid.Ly": g.Ly,
        "time.dt": cfg.dt, "time.t_end": cfg.t_end, "time.dump_every": cfg.dump_every, "time.steady_tol": cfg.steady_tol,
        "params.rho": p.rho, "params.eta": p.eta, "params.q0": p.q0, "params.K": p.K, "params.ps0": p.ps0,
        "params.y0": p.y0, "params.g_mag": p.g_mag, "params.ps_mode": p.ps_const,
        "flow.convection": cfg.convection, "init.pf": cfg.pf_init, "output_dir": cfg.output_dir,
        "tol_rigid": cfg.tol_rigid, "stations": cfg.stations, "bc.inflow_umax": cfg.umax,
    })
    if isinstance(m, Regularized):
        f.update({"mode.kind": "regularized", "mode.eps": m.eps, "mode.stab": m.stab})
    else:
        f.update({"mode.kind": "projection", "mode.r_uzawa": m.r_uzawa, "mode.max_iters": m.max_iters, "mode.tol": m.tol})
    for s in SIDES:
        f[f"bc.vel.{s}"] = cfg.vel_bc.kind(s)
        f[f"bc.pf.{s}"] = cfg.pf_bc.side(s)
    return f


# --- text ------------------------------------------------------------------


def parse_config(text: str, scenario: str | None = None) -> RunConfig:
    """Parse flat ``key = value`` text; ``scenario`` overrides the file's value."""
    raw: dict[str, tuple[str, int]] = {}
    for n, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("expected 'key = value'", line=n)
        key, value = (t.strip() for t in body.split("=", 1))
        if key not in KEYS:
            raise ConfigError("unknown key", field=key, line=n)
        if key in raw:
            raise ConfigError("duplicate key", field=key, line=n)
        raw[key] = (value, n)

    lines = {k: n for k, (_, n) in raw.items()}
    scen_text = scenario if scenario is not None else raw.get("scenario", (None, None))[0]
    if scen_text is None:
        raise ConfigError("scenario missing", field="scenario")
    if scen_text not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scen_text!r}", field="scenario", line=lines.get("scenario"))
    flat = defaults_for(scen_text)
    for key, (value, n) in raw.items():
        if key == "scenario":
            continue
        try:
            flat[key] = KEYS[key][0](value)
        except ValueError as e:
            raise ConfigError(f"bad value {value!r}: {e}", field=key, line=n) from None
    return from_flat(flat, lines)


def serialize(cfg: RunConfig) -> str:
    f = to_flat(cfg)
    return "".join(f"{k} = {KEYS[k][1](f[k])}\n" for k in KEYS)


def print_defaults(scenario: str | None = None) -> str:
    """Documented defaults; scenario-specific values when a scenario is given."""
    f = defaults_for(scenario)
    out = ["# varbingham run configuration: flat 'key = value', '#' starts a comment"]
    if scenario is None:
        out.append("# scenario-specific defaults: --print-defaults --scenario NAME")
    for k, (_, fmt, _, help_) in KEYS.items():
        v = f[k]
        out.append(f"# {help_}")
        if k == "scenario" and v is None:
            out.append("# scenario = <required>")
        else:
            out.append(f"{k} = {fmt(v)}")
    return "\n".join(out) + "\n"


def load_config(path, scenario: str | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}", field=str(path)) from None
    return parse_config(text, scenario)
