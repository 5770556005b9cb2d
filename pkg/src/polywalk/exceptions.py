"""Exception hierarchy shared by every rounding routine."""


class PolywalkError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(PolywalkError, ValueError):
    """Malformed numeric input (non-finite entries, bad shapes, ...)."""


class InfeasiblePointError(PolywalkError, ValueError):
    """A point violates its polytope beyond the tolerance."""


class AtVertexError(PolywalkError):
    """A random move was requested at a vertex of the polytope."""


class DegenerateDirectionError(PolywalkError):
    """No nullspace direction allows positive travel both ways."""


class NothingToRoundError(PolywalkError):
    """Dependent rounding was asked to step a graph with no fractional edge."""


class SolverFailureError(PolywalkError):
    """The simplex solver gave up (pivot limit or numerical breakdown)."""


class InfeasibleInstanceError(PolywalkError):
    """No threshold or guess makes the instance's relaxation feasible."""


class BudgetExceededError(PolywalkError):
    """An enumeration would exceed its configured budget."""


class InternalInvariantError(PolywalkError):
    """A guard that the algorithm's analysis rules out has fired.

    ``diagnostics`` carries whatever state the raising routine dumped.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ParseError(PolywalkError, ValueError):
    """An instance file could not be parsed."""

    def __init__(self, message, field=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.field = field
        self.line = line
