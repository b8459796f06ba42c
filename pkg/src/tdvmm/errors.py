"""Exception hierarchy shared by the simulator modules."""


class TdvmmError(Exception):
    """Base class for all simulator errors."""


class ContractViolation(TdvmmError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class ConfigurationError(TdvmmError, ValueError):
    """A design point or run configuration is inconsistent or degenerate."""


class SolverError(TdvmmError, RuntimeError):
    """A numerical solver failed to converge."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class UndefinedRatioError(TdvmmError, ArithmeticError):
    """A relative metric was requested at a vanishing reference current."""
