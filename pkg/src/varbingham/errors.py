"""Exception hierarchy.

Configuration problems map to CLI exit code 2, numerical failures to 3.
"""


class VarBinghamError(Exception):
    pass


class ContractError(VarBinghamError, ValueError):
    """Array shapes or samples do not satisfy an operation's precondition."""


class ConfigError(VarBinghamError, ValueError):
    """Invalid configuration or boundary specification."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if field is not None:
            prefix += f"{field}: "
        super().__init__(prefix + message)


class ParameterError(VarBinghamError, ValueError):
    pass


class NumericalError(VarBinghamError, RuntimeError):
    pass


class StepSizeError(NumericalError):
    """CFL bound exceeded for the explicit advection sub-step."""


class SolverError(NumericalError):
    pass


class CompatibilityError(NumericalError):
    """Net boundary flux is nonzero for an all-Neumann pressure solve."""


class DivergenceError(NumericalError):
    """NaN or Inf appeared in the solution."""
