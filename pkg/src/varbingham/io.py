"""Legacy VTK text dumps, CSV time series and profile tables.

Numbers are written with ``repr`` so every float64 survives a round trip,
and nothing time-dependent (wall clock, hostnames) goes into the files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diagnostics import CSV_FIELDS, EnergySample, sample_row
from .errors import ConfigError, ContractError
from .mesh import Grid, cell_norm, cell_velocity, sym_gradient

FIELD_NAMES = ("u", "v", "p", "p_f", "q", "Dv_norm", "rigid")


@dataclass
class VtkField:
    name: str
    title: str
    dims: tuple[int, int]
    origin: tuple[float, float]
    spacing: tuple[float, float]
    values: np.ndarray  # shape dims, indexed [i, j]


def _num(x) -> str:
    return repr(float(x))


def format_vtk(f: VtkField) -> str:
    nx, ny = f.dims
    if f.values.shape != (nx, ny):
        raise ContractError(f"{f.name}: values shape {f.values.shape} != {(nx, ny)}")
    head = [
        "# vtk DataFile Version 3.0",
        f.title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nx} {ny} 1",
        f"ORIGIN {_num(f.origin[0])} {_num(f.origin[1])} 0.0",
        f"SPACING {_num(f.spacing[0])} {_num(f.spacing[1])} 1.0",
        f"POINT_DATA {nx * ny}",
        f"SCALARS {f.name} double 1",
        "LOOKUP_TABLE default",
    ]
    # x runs fastest
    body = [repr(float(x)) for x in f.values.T.ravel()]
    return "\n".join(head + body) + "\n"


def write_vtk(f: VtkField, path) -> Path:
    path = Path(path)
    try:
        path.write_text(format_vtk(f), encoding="ascii")
    except OSError as e:
        raise ConfigError(f"cannot write {path}: {e}") from None
    return path


def read_vtk(path) -> VtkField:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    if not lines or not lines[0].startswith("# vtk DataFile"):
        raise ContractError(f"{path}: not a legacy VTK file")
    if lines[2] != "ASCII" or lines[3] != "DATASET STRUCTURED_POINTS":
        raise ContractError(f"{path}: only ASCII structured points are supported")
    nx, ny, _ = (int(t) for t in lines[4].split()[1:])
    ox, oy, _ = (float(t) for t in lines[5].split()[1:])
    sx, sy, _ = (float(t) for t in lines[6].split()[1:])
    name = lines[8].split()[1]
    vals = np.array([float(t) for t in lines[10:10 + nx * ny]])
    if vals.size != nx * ny:
        raise ContractError(f"{path}: expected {nx * ny} values, found {vals.size}")
    return VtkField(name, lines[1], (nx, ny), (ox, oy), (sx, sy), vals.reshape(ny, nx).T)


def state_fields(grid: Grid, vel, p, p_f, q, tbc, tol_rigid: float, t: float) -> list[VtkField]:
    uc, vc = cell_velocity(vel)
    dn = cell_norm(sym_gradient(vel, tbc))
    arrays = {"u": uc, "v": vc, "p": p, "p_f": p_f, "q": q, "Dv_norm": dn, "rigid": (dn <= tol_rigid).astype(float)}
    return [
        VtkField(name, f"varbingham {name} t={t!r}", grid.cell_shape, (grid.hx / 2, grid.hy / 2),
                 (grid.hx, grid.hy), np.asarray(arrays[name], dtype=float))
        for name in FIELD_NAMES
    ]


def write_field_dump(fields: list[VtkField], out_dir, step: int) -> list[Path]:
    out = Path(out_dir)
    return [write_vtk(f, out / f"{f.name}_{step:07d}.vtk") for f in fields]


def write_timeseries(samples: list[EnergySample], path) -> Path:
    path = Path(path)
    ts = [s.t for s in samples]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ContractError("time series rows must be strictly increasing in t")
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for s in samples:
            w.writerow([repr(float(x)) for x in sample_row(s)])
    return path


def read_timeseries(path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != CSV_FIELDS:
        raise ContractError(f"{path}: unexpected header {rows[0]}")
    data = np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, len(CSV_FIELDS))
    return {k: data[:, i] for i, k in enumerate(CSV_FIELDS)}


def write_profiles(y: np.ndarray, stations, profiles, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y"] + [f"x={float(x)!r}" for x in stations])
        for j, yy in enumerate(y):
            w.writerow([repr(float(yy))] + [repr(float(p[j])) for p in profiles])
    return path


def write_summary(summary: dict, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="ascii")
    return path
