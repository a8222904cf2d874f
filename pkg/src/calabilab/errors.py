"""Exception hierarchy shared by all calabilab modules."""


class CalabiLabError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(CalabiLabError, ValueError):
    """Inputs are structurally wrong: bad grid size, mismatched domains, bad config."""


class DomainError(CalabiLabError, ValueError):
    """A numerical argument lies outside the domain of the operation."""


class PositivityError(CalabiLabError):
    """The Kähler condition failed somewhere on the grid.

    ``margin`` is the offending minimum (density or Hessian margin) and
    ``location`` the grid coordinates where it was attained.
    """

    def __init__(self, message, margin=None, location=None):
        super().__init__(message)
        self.margin = margin
        self.location = location


class PolytopeError(ConfigurationError):
    """Invalid polytope data; ``lineno`` is set when parsed from text."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class UnsupportedTestbed(CalabiLabError):
    """The operation has no meaning on the given testbed."""


class PreconditionError(CalabiLabError):
    """A stated precondition was verified and found false."""


class ConvergenceError(CalabiLabError):
    """An iterative solver did not converge."""

    def __init__(self, message, last_value=None):
        super().__init__(message)
        self.last_value = last_value


class StepRejected(CalabiLabError):
    """A time step was rejected (positivity loss or energy increase). Not fatal."""

    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


class FlowStalled(CalabiLabError):
    """Step-size control drove dt below dt_min; carries the partial run."""

    def __init__(self, message, trace=None, state=None):
        super().__init__(message)
        self.trace = trace
        self.state = state
