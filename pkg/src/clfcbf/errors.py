"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(ToolkitError):
    """An array argument has the wrong shape for the model it is used with."""


class InvalidParameterError(ToolkitError):
    """A parameter violates its contract (non-SPD cost metric, p <= 0, ...)."""


class NumericalError(ToolkitError):
    """A numeric evaluation produced a non-finite or unusable value."""


class PreconditionError(ToolkitError):
    """A documented precondition of an operation does not hold."""


class InfeasibleQPError(ToolkitError):
    """The pointwise QP admits no feasible point at the queried state.

    Attributes
    ----------
    x : ndarray
        State at which the QP was posed.
    feasibility : FeasibilityReport or None
        Certificate evaluation at ``x`` when one was computed.
    """

    def __init__(self, message, x=None, feasibility=None):
        super().__init__(message)
        self.x = x
        self.feasibility = feasibility


class OracleFailureError(ToolkitError):
    """The independent reference solver did not converge; never treat as pass."""


class IntegrationError(ToolkitError):
    """Closed-loop integration hit a non-finite state.

    Carries the partial trajectory up to the last valid sample in
    ``partial_trajectory``.
    """

    def __init__(self, message, partial_trajectory=None):
        super().__init__(message)
        self.partial_trajectory = partial_trajectory


class ScenarioError(ToolkitError):
    """Scenario text failed validation.  ``problems`` lists every violation."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
