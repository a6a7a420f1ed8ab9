"""Exception hierarchy shared across the package."""


class PnFemError(Exception):
    """Base class for all package errors."""


class ConfigurationError(PnFemError, ValueError):
    """Invalid problem parameters (even PN order, non-coercive collision, ...)."""


class InputDomainError(PnFemError, ValueError):
    """Argument outside its mathematical domain (non-unit direction, ...)."""


class MeshError(PnFemError, ValueError):
    """Malformed or degenerate triangulation."""


class ContractViolation(PnFemError, ValueError):
    """Shapes or preconditions of an operation do not hold."""


class SolverError(PnFemError, RuntimeError):
    """An iterative solve did not reach its tolerance."""

    def __init__(self, message, residual=None, iterations=None, step=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.step = step
