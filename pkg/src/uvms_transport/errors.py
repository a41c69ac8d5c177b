"""Exception types raised by the model, controller and simulator."""


class UvmsError(Exception):
    """Base class for all package errors."""


class DimensionError(UvmsError, ValueError):
    pass


class RepresentationSingularity(UvmsError):
    """Euler-angle pitch too close to +-pi/2 for the rate map to be inverted."""


class NearSingular(UvmsError):
    """det(J J^T) fell below the configured kinematic-singularity floor."""


class IllConditioned(UvmsError):
    pass


class OutOfFreeSpace(UvmsError):
    pass


class SingularKKT(UvmsError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class InfeasibleStart(UvmsError):
    pass


class ScenarioError(UvmsError, ValueError):
    """Scenario file failed validation; ``diagnostics`` holds one line per problem."""

    def __init__(self, message, diagnostics=None):
        if diagnostics is None:
            diagnostics = [message]
        elif isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__(message)


class IsolationViolation(UvmsError):
    """A controller touched data owned by another agent."""
