"""Bingham constitutive graph with a pressure-dependent yield.

Tensors are arrays with trailing shape ``(2, 2)``; every function
broadcasts over leading axes. The magnitude is the Frobenius norm
``|A| = sqrt(A:A)``, so an off-diagonal entry counts twice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ParameterError
from .mesh import Grid, tensor_norm


@dataclass(frozen=True)
class PhysicalParams:
    """Material and gravity parameters.

    ``ps_const`` switches the solid pressure from the lithostatic profile to
    a constant value; ``None`` means lithostatic.
    """

    rho: float = 1.0
    eta: float = 1.0
    q0: float = 0.2
    K: float = 0.1
    ps0: float = 1.0
    y0: float = 1.0
    g_mag: float = 0.0
    ps_const: float | None = 1.0

    def __post_init__(self):
        if not self.rho > 0:
            raise ParameterError("rho must be > 0")
        if not self.eta > 0:
            raise ParameterError("eta must be > 0")
        if not self.K > 0:
            raise ParameterError("K must be > 0")
        for name in ("q0", "g_mag", "ps0"):
            if not getattr(self, name) >= 0:
                raise ParameterError(f"{name} must be >= 0")

    @property
    def ps_mode(self) -> str:
        return "lithostatic" if self.ps_const is None else f"constant({self.ps_const!r})"


@dataclass
class GraphSample:
    """A (stress, strain rate, yield) triple, possibly batched."""

    sigma: np.ndarray
    D: np.ndarray
    q: np.ndarray | float

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.D = np.asarray(self.D, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        if self.sigma.shape[-2:] != (2, 2) or self.D.shape[-2:] != (2, 2):
            raise ContractError("graph samples need 2x2 tensors")
        if np.any(self.q < 0):
            raise ContractError("yield q must be >= 0")


def ddot(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.sum(A * B, axis=(-2, -1))


def lithostatic_pressure(y, params: PhysicalParams):
    if params.ps_const is not None:
        return np.full_like(np.asarray(y, dtype=float), params.ps_const)
    return params.ps0 + params.rho * params.g_mag * (params.y0 - np.asarray(y, dtype=float))


def solid_pressure_field(grid: Grid, params: PhysicalParams) -> np.ndarray:
    y = np.broadcast_to(grid.yc[None, :], grid.cell_shape)
    return lithostatic_pressure(y, params)


def yield_field(p_f: np.ndarray, p_s: np.ndarray, params: PhysicalParams) -> np.ndarray:
    return params.q0 * np.maximum(np.asarray(p_s) - np.asarray(p_f), 0.0)


def regularized_stress(q, D: np.ndarray, eps: float) -> np.ndarray:
    """``q D / (|D| + eps)``; strictly inside the yield ball for ``q > 0``."""
    if not np.all(np.asarray(eps) > 0):
        raise ParameterError(f"regularization eps must be > 0, got {eps}")
    scale = np.asarray(q, dtype=float) / (tensor_norm(D) + eps)
    return scale[..., None, None] * D


def exact_stress(q, D: np.ndarray) -> np.ndarray:
    """``q D / |D|`` where ``D != 0``, zero on rigid points."""
    n = tensor_norm(D)
    q = np.asarray(q, dtype=float)
    safe = np.where(n > 0, n, 1.0)
    scale = np.where(n > 0, q / safe, 0.0)
    return scale[..., None, None] * D


def project_unit_ball(A: np.ndarray) -> np.ndarray:
    """``A / max(1, |A|)`` sitewise."""
    return A / np.maximum(1.0, tensor_norm(A))[..., None, None]


def graph_residual(s: GraphSample):
    """Return ``(r_eq, r_bound)``; both vanish iff the sample lies in the graph."""
    r_eq = np.abs(ddot(s.sigma, s.D) - s.q * tensor_norm(s.D))
    r_bound = np.maximum(tensor_norm(s.sigma) - s.q, 0.0)
    return r_eq, r_bound


def monotonicity_gap(s1: GraphSample, s2: GraphSample) -> np.ndarray:
    if not np.array_equal(np.broadcast_to(s1.q, np.shape(s2.q)), s2.q):
        raise ContractError("monotonicity is only defined for samples with the same yield q")
    return ddot(s1.sigma - s2.sigma, s1.D - s2.D)


def in_graph_explicit(s: GraphSample, tol: float) -> np.ndarray:
    """Membership using the case split: sigma = qD/|D| if D != 0, else |sigma| <= q."""
    n = tensor_norm(s.D)
    scale = np.maximum(1.0, s.q)
    dev = tensor_norm(s.sigma - exact_stress(s.q, s.D))
    return np.where(n > 0, dev <= tol * scale, tensor_norm(s.sigma) <= s.q + tol * scale)


def in_graph_dual(s: GraphSample, tol: float) -> np.ndarray:
    """Membership using sigma:D = q|D| together with |sigma| <= q.

    ``r_eq`` is compared per unit ``|D|`` so both tests measure stress.
    """
    r_eq, r_bound = graph_residual(s)
    scale = np.maximum(1.0, s.q)
    return (r_eq <= tol * scale * tensor_norm(s.D)) & (r_bound <= tol * scale)


def check_equivalence(s: GraphSample, tol: float = 1e-9) -> np.ndarray:
    """True where both formulations give the same membership verdict."""
    return in_graph_explicit(s, tol) == in_graph_dual(s, tol)
