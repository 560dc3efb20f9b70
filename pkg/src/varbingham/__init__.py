"""Two-dimensional Bingham flow with a yield stress set by a transported pore pressure."""

from .config import RunConfig, load_config, parse_config, serialize
from .errors import (
    CompatibilityError,
    ConfigError,
    ContractError,
    DivergenceError,
    NumericalError,
    ParameterError,
    SolverError,
    StepSizeError,
    VarBinghamError,
)
from .mesh import BoundarySpec, Grid, SideBC, StaggeredVelocity, SymTensorField
from .momentum import (
    Inflow,
    MomentumState,
    MomentumStepper,
    Projection,
    Regularized,
    VelocityBoundarySpec,
)
from .rheology import PhysicalParams
from .runner import RunReport, run_scenario
from .transport import PfTransport

__version__ = "0.1.0"

__all__ = [
    "BoundarySpec", "CompatibilityError", "ConfigError", "ContractError", "DivergenceError", "Grid", "Inflow",
    "MomentumState", "MomentumStepper", "NumericalError", "ParameterError", "PfTransport", "PhysicalParams",
    "Projection", "Regularized", "RunConfig", "RunReport", "SideBC", "SolverError", "StaggeredVelocity",
    "StepSizeError", "SymTensorField", "VarBinghamError", "VelocityBoundarySpec", "load_config", "parse_config",
    "run_scenario", "serialize",
]
