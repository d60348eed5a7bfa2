"""Exception types shared across the package."""

from __future__ import annotations


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition or invariant."""


class DimensionMismatchError(ValidationError):
    """Raised when operators, states, or bases of different sizes are combined."""


class DegenerateGroundStateError(ValidationError):
    """Raised by the zero-temperature Gibbs limit when the ground level is degenerate."""


class EigensolverError(RuntimeError):
    """Raised when the dense eigensolver fails to converge."""


class BoundViolationError(RuntimeError):
    """An entropy inequality that holds unconditionally was violated beyond slack.

    This signals an implementation defect, never a physics outcome, so it is
    raised as a hard error carrying the two sides and the allowed slack.
    """

    def __init__(self, name: str, lhs: float, rhs: float, slack: float):
        self.name = name
        self.lhs = float(lhs)
        self.rhs = float(rhs)
        self.slack = float(slack)
        super().__init__(
            f"bound '{name}' violated: {self.lhs!r} <= {self.rhs!r} + {self.slack!r} "
            f"fails by {self.excess!r}"
        )

    @property
    def excess(self) -> float:
        return self.lhs - self.rhs - self.slack


class ConfigError(ValueError):
    """Raised for malformed or out-of-range run configuration."""
