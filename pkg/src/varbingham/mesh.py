"""Uniform MAC staggered grid and its discrete operators.

Storage convention (all arrays indexed ``[i, j]`` with ``i`` along x):

* cell scalars (p, p_f, q, ...): ``(nx, ny)``
* u on vertical faces: ``(nx + 1, ny)``, face ``i`` sits at ``x = i * hx``
* v on horizontal faces: ``(nx, ny + 1)``, face ``j`` sits at ``y = j * hy``
* tensor diagonal at cell centers, off-diagonal at cell corners ``(nx + 1, ny + 1)``

Wall closures for tangential velocity use ghost reflection: a Dirichlet
wall value ``w`` gives ``ghost = 2 w - interior``, a Neumann wall gives
``ghost = interior``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ContractError, ParameterError

SIDES = ("left", "right", "bottom", "top")
_KINDS = ("dirichlet", "neumann")


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    Lx: float = 1.0
    Ly: float = 1.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ParameterError("nx, ny must be integers")
        if self.nx < 4 or self.ny < 4:
            raise ParameterError(f"grid needs nx, ny >= 4, got {self.nx}x{self.ny}")
        if not (self.Lx > 0 and self.Ly > 0):
            raise ParameterError("domain lengths must be positive")

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def xc(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.hx

    @property
    def yc(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.hy

    @property
    def xf(self) -> np.ndarray:
        return np.arange(self.nx + 1) * self.hx

    @property
    def yf(self) -> np.ndarray:
        return np.arange(self.ny + 1) * self.hy

    @property
    def u_shape(self):
        return (self.nx + 1, self.ny)

    @property
    def v_shape(self):
        return (self.nx, self.ny + 1)

    @property
    def cell_shape(self):
        return (self.nx, self.ny)

    @property
    def corner_shape(self):
        return (self.nx + 1, self.ny + 1)

    def check_cell(self, a: np.ndarray, name="field") -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if a.shape != self.cell_shape:
            raise ContractError(f"{name} has shape {a.shape}, expected {self.cell_shape}")
        return a


@dataclass(frozen=True)
class SideBC:
    """Boundary treatment on one side: ``dirichlet`` with a value, or zero-gradient ``neumann``."""

    kind: str = "dirichlet"
    value: float | np.ndarray = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unsupported boundary kind {self.kind!r}")


@dataclass(frozen=True)
class BoundarySpec:
    left: SideBC = field(default_factory=SideBC)
    right: SideBC = field(default_factory=SideBC)
    bottom: SideBC = field(default_factory=SideBC)
    top: SideBC = field(default_factory=SideBC)

    def __post_init__(self):
        for s in SIDES:
            if not isinstance(getattr(self, s), SideBC):
                raise ConfigError(f"side {s} is not a SideBC")

    @classmethod
    def uniform(cls, kind="dirichlet", value=0.0) -> "BoundarySpec":
        b = SideBC(kind, value)
        return cls(b, b, b, b)

    def side(self, name: str) -> SideBC:
        return getattr(self, name)


NOSLIP = BoundarySpec()


@dataclass
class StaggeredVelocity:
    u: np.ndarray
    v: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.shape != self.grid.u_shape or self.v.shape != self.grid.v_shape:
            raise ContractError(
                f"velocity shapes {self.u.shape}, {self.v.shape} do not match "
                f"grid {self.grid.u_shape}, {self.grid.v_shape}"
            )

    @classmethod
    def zeros(cls, grid: Grid) -> "StaggeredVelocity":
        return cls(np.zeros(grid.u_shape), np.zeros(grid.v_shape), grid)

    def copy(self) -> "StaggeredVelocity":
        return StaggeredVelocity(self.u.copy(), self.v.copy(), self.grid)

    def __add__(self, other):
        return StaggeredVelocity(self.u + other.u, self.v + other.v, self.grid)

    def __sub__(self, other):
        return StaggeredVelocity(self.u - other.u, self.v - other.v, self.grid)

    def __mul__(self, a: float):
        return StaggeredVelocity(a * self.u, a * self.v, self.grid)

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return max(np.abs(self.u).max(), np.abs(self.v).max())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.u).all() and np.isfinite(self.v).all())


@dataclass
class SymTensorField:
    d11: np.ndarray
    d22: np.ndarray
    d12: np.ndarray
    grid: Grid

    def __post_init__(self):
        g = self.grid
        if (
            np.shape(self.d11) != g.cell_shape
            or np.shape(self.d22) != g.cell_shape
            or np.shape(self.d12) != g.corner_shape
        ):
            raise ContractError("tensor field components do not match grid")

    @classmethod
    def zeros(cls, grid: Grid) -> "SymTensorField":
        return cls(np.zeros(grid.cell_shape), np.zeros(grid.cell_shape), np.zeros(grid.corner_shape), grid)

    def copy(self) -> "SymTensorField":
        return SymTensorField(self.d11.copy(), self.d22.copy(), self.d12.copy(), self.grid)


@dataclass
class SiteTensors:
    """Full 2x2 tensors at both storage-site families.

    ``center`` has shape ``(nx, ny, 2, 2)``, ``corner`` ``(nx + 1, ny + 1, 2, 2)``.
    """

    center: np.ndarray
    corner: np.ndarray

    @classmethod
    def zeros(cls, grid: Grid) -> "SiteTensors":
        return cls(np.zeros(grid.cell_shape + (2, 2)), np.zeros(grid.corner_shape + (2, 2)))

    def copy(self) -> "SiteTensors":
        return SiteTensors(self.center.copy(), self.corner.copy())

    def max_abs_diff(self, other: "SiteTensors") -> float:
        return max(np.abs(self.center - other.center).max(), np.abs(self.corner - other.corner).max())


def _check_vel(vel: StaggeredVelocity):
    g = vel.grid
    if vel.u.shape != g.u_shape or vel.v.shape != g.v_shape:
        raise ContractError("velocity arrays do not match their grid")


def _side_values(b: SideBC, n: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(b.value, dtype=float), (n,))


def _ghost(b: SideBC, edge: np.ndarray, n: int) -> np.ndarray:
    if b.kind == "dirichlet":
        return 2.0 * _side_values(b, n) - edge
    return edge


def pad_u_y(u: np.ndarray, grid: Grid, bc: BoundarySpec = NOSLIP) -> np.ndarray:
    """u with one ghost row below and above, shape ``(nx + 1, ny + 2)``."""
    n = grid.nx + 1
    lo = _ghost(bc.bottom, u[:, 0], n)
    hi = _ghost(bc.top, u[:, -1], n)
    return np.concatenate([lo[:, None], u, hi[:, None]], axis=1)


def pad_v_x(v: np.ndarray, grid: Grid, bc: BoundarySpec = NOSLIP) -> np.ndarray:
    """v with one ghost column left and right, shape ``(nx + 2, ny + 1)``."""
    n = grid.ny + 1
    lo = _ghost(bc.left, v[0, :], n)
    hi = _ghost(bc.right, v[-1, :], n)
    return np.concatenate([lo[None, :], v, hi[None, :]], axis=0)


def pad_cells(s: np.ndarray, grid: Grid, bc: BoundarySpec) -> np.ndarray:
    """Cell scalar with a ghost ring, shape ``(nx + 2, ny + 2)``; ghost corners are 0."""
    out = np.zeros((grid.nx + 2, grid.ny + 2))
    out[1:-1, 1:-1] = s
    out[0, 1:-1] = _ghost(bc.left, s[0, :], grid.ny)
    out[-1, 1:-1] = _ghost(bc.right, s[-1, :], grid.ny)
    out[1:-1, 0] = _ghost(bc.bottom, s[:, 0], grid.nx)
    out[1:-1, -1] = _ghost(bc.top, s[:, -1], grid.nx)
    return out


def divergence(vel: StaggeredVelocity) -> np.ndarray:
    _check_vel(vel)
    g = vel.grid
    return np.diff(vel.u, axis=0) / g.hx + np.diff(vel.v, axis=1) / g.hy


def sym_gradient(vel: StaggeredVelocity, bc: BoundarySpec = NOSLIP) -> SymTensorField:
    """Symmetric velocity gradient; ``bc`` gives the tangential wall closure."""
    _check_vel(vel)
    g = vel.grid
    d11 = np.diff(vel.u, axis=0) / g.hx
    d22 = np.diff(vel.v, axis=1) / g.hy
    du_dy = np.diff(pad_u_y(vel.u, g, bc), axis=1) / g.hy
    dv_dx = np.diff(pad_v_x(vel.v, g, bc), axis=0) / g.hx
    return SymTensorField(d11, d22, 0.5 * (du_dy + dv_dx), g)


def div_tensor(S: SymTensorField) -> StaggeredVelocity:
    """Row-wise divergence of a symmetric tensor field, on interior faces.

    Boundary faces are left at zero. This is minus the adjoint of
    :func:`sym_gradient` for the inner products of :func:`tensor_inner`
    and :func:`velocity_inner`.
    """
    g = S.grid
    fu = np.zeros(g.u_shape)
    fv = np.zeros(g.v_shape)
    fu[1:-1, :] = np.diff(S.d11, axis=0) / g.hx + np.diff(S.d12[1:-1, :], axis=1) / g.hy
    fv[:, 1:-1] = np.diff(S.d12[:, 1:-1], axis=0) / g.hx + np.diff(S.d22, axis=1) / g.hy
    return StaggeredVelocity(fu, fv, g)


def gradient_p(p: np.ndarray, grid: Grid) -> StaggeredVelocity:
    p = grid.check_cell(p, "p")
    gu = np.zeros(grid.u_shape)
    gv = np.zeros(grid.v_shape)
    gu[1:-1, :] = np.diff(p, axis=0) / grid.hx
    gv[:, 1:-1] = np.diff(p, axis=1) / grid.hy
    return StaggeredVelocity(gu, gv, grid)


def laplacian_scalar(s: np.ndarray, grid: Grid, bc: BoundarySpec) -> np.ndarray:
    s = grid.check_cell(s, "s")
    if not isinstance(bc, BoundarySpec):
        raise ConfigError("scalar Laplacian needs a BoundarySpec")
    q = pad_cells(s, grid, bc)
    c = q[1:-1, 1:-1]
    return (q[2:, 1:-1] - 2 * c + q[:-2, 1:-1]) / grid.hx**2 + (q[1:-1, 2:] - 2 * c + q[1:-1, :-2]) / grid.hy**2


def vector_laplacian(vel: StaggeredVelocity, bc: BoundarySpec = NOSLIP) -> StaggeredVelocity:
    """Component-wise 5-point Laplacian on interior faces (boundary faces zero)."""
    g = vel.grid
    u, v = vel.u, vel.v
    up = pad_u_y(u, g, bc)
    lu = np.zeros(g.u_shape)
    lu[1:-1, :] = (u[2:, :] - 2 * u[1:-1, :] + u[:-2, :]) / g.hx**2 + (
        up[1:-1, 2:] - 2 * up[1:-1, 1:-1] + up[1:-1, :-2]
    ) / g.hy**2
    vp = pad_v_x(v, g, bc)
    lv = np.zeros(g.v_shape)
    lv[:, 1:-1] = (vp[2:, 1:-1] - 2 * vp[1:-1, 1:-1] + vp[:-2, 1:-1]) / g.hx**2 + (
        v[:, 2:] - 2 * v[:, 1:-1] + v[:, :-2]
    ) / g.hy**2
    return StaggeredVelocity(lu, lv, g)


def cell_velocity(vel: StaggeredVelocity):
    """u and v averaged to cell centers."""
    return 0.5 * (vel.u[1:, :] + vel.u[:-1, :]), 0.5 * (vel.v[:, 1:] + vel.v[:, :-1])


# --- weights and inner products -------------------------------------------


def _trap(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def corner_weights(grid: Grid) -> np.ndarray:
    return np.outer(_trap(grid.nx + 1), _trap(grid.ny + 1))


def velocity_inner(a: StaggeredVelocity, b: StaggeredVelocity) -> float:
    """Face inner product; boundary-normal faces carry half weight."""
    g = a.grid
    wu = _trap(g.nx + 1)[:, None]
    wv = _trap(g.ny + 1)[None, :]
    return g.cell_area * (float(np.sum(wu * a.u * b.u)) + float(np.sum(wv * a.v * b.v)))


def tensor_inner(S: SymTensorField, D: SymTensorField) -> float:
    """``sum S:D dA`` with the off-diagonal counted twice and trapezoid corner weights."""
    g = S.grid
    diag = np.sum(S.d11 * D.d11) + np.sum(S.d22 * D.d22)
    off = 2.0 * np.sum(corner_weights(g) * S.d12 * D.d12)
    return g.cell_area * float(diag + off)


def grad_sq_integral(vel: StaggeredVelocity, bc: BoundarySpec = NOSLIP) -> float:
    """Discrete ``sum |grad v|^2 dA``, consistent with :func:`vector_laplacian`."""
    g = vel.grid
    w = corner_weights(g)
    dudx = np.diff(vel.u, axis=0) / g.hx
    dvdy = np.diff(vel.v, axis=1) / g.hy
    dudy = np.diff(pad_u_y(vel.u, g, bc), axis=1) / g.hy
    dvdx = np.diff(pad_v_x(vel.v, g, bc), axis=0) / g.hx
    total = np.sum(dudx**2) + np.sum(dvdy**2) + np.sum(w * dudy**2) + np.sum(w * dvdx**2)
    return g.cell_area * float(total)


# --- site tensors ----------------------------------------------------------


def corners_to_cells(c: np.ndarray) -> np.ndarray:
    return 0.25 * (c[:-1, :-1] + c[1:, :-1] + c[:-1, 1:] + c[1:, 1:])


def cells_to_corners(s: np.ndarray) -> np.ndarray:
    """Bilinear average of cell values at corners (edge-replicated at the boundary)."""
    p = np.pad(s, 1, mode="edge")
    return corners_to_cells(p)


def _assemble(t11, t22, t12):
    out = np.empty(t11.shape + (2, 2))
    out[..., 0, 0] = t11
    out[..., 1, 1] = t22
    out[..., 0, 1] = t12
    out[..., 1, 0] = t12
    return out


def site_tensors(T: SymTensorField) -> SiteTensors:
    center = _assemble(T.d11, T.d22, corners_to_cells(T.d12))
    corner = _assemble(cells_to_corners(T.d11), cells_to_corners(T.d22), T.d12)
    return SiteTensors(center, corner)


def field_from_sites(S: SiteTensors, grid: Grid) -> SymTensorField:
    """Take each component from its home storage site."""
    return SymTensorField(
        S.center[..., 0, 0].copy(), S.center[..., 1, 1].copy(), S.corner[..., 0, 1].copy(), grid
    )


def tensor_norm(A: np.ndarray) -> np.ndarray:
    """Frobenius norm over the trailing 2x2 axes."""
    return np.sqrt(np.sum(A * A, axis=(-2, -1)))


def cell_norm(T: SymTensorField) -> np.ndarray:
    """|T| at cell centers: sqrt(d11^2 + d22^2 + 2 avg4(d12)^2)."""
    a12 = corners_to_cells(T.d12)
    return np.sqrt(T.d11**2 + T.d22**2 + 2.0 * a12**2)


# --- sparse operators ------------------------------------------------------


def laplacian_1d(n: int, h: float, lo: str, hi: str) -> sp.csr_matrix:
    """Second-difference matrix on ``n`` unknowns.

    End kinds: ``"face"`` (known neighbour value, moved to the right-hand
    side), ``"dirichlet"`` (reflection about a wall half a cell away) or
    ``"neumann"``.
    """
    shift = {"face": 0.0, "dirichlet": -1.0, "neumann": 1.0}
    main = np.full(n, -2.0)
    main[0] += shift[lo]
    main[-1] += shift[hi]
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


def _kron2(ax, ay, nx, ny):
    return (sp.kron(ax, sp.identity(ny)) + sp.kron(sp.identity(nx), ay)).tocsr()


def laplacian_matrix_cells(grid: Grid, bc: BoundarySpec) -> sp.csr_matrix:
    ax = laplacian_1d(grid.nx, grid.hx, bc.left.kind, bc.right.kind)
    ay = laplacian_1d(grid.ny, grid.hy, bc.bottom.kind, bc.top.kind)
    return _kron2(ax, ay, grid.nx, grid.ny)


def laplacian_matrix_u(grid: Grid, bc: BoundarySpec = NOSLIP) -> sp.csr_matrix:
    """Laplacian on interior u faces ``u[1:-1, :]`` (C order)."""
    ax = laplacian_1d(grid.nx - 1, grid.hx, "face", "face")
    ay = laplacian_1d(grid.ny, grid.hy, bc.bottom.kind, bc.top.kind)
    return _kron2(ax, ay, grid.nx - 1, grid.ny)


def laplacian_matrix_v(grid: Grid, bc: BoundarySpec = NOSLIP) -> sp.csr_matrix:
    """Laplacian on interior v faces ``v[:, 1:-1]`` (C order)."""
    ax = laplacian_1d(grid.nx, grid.hx, bc.left.kind, bc.right.kind)
    ay = laplacian_1d(grid.ny - 1, grid.hy, "face", "face")
    return _kron2(ax, ay, grid.nx, grid.ny - 1)
