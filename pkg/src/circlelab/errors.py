"""Exception hierarchy shared by all circlelab modules."""


class CircleLabError(Exception):
    """Base class for every error raised by circlelab."""


class InvariantError(CircleLabError, ValueError):
    """A value object was constructed with parameters violating its invariants."""


class AlphabetMismatchError(CircleLabError, ValueError):
    """A word was evaluated against (or combined with) a foreign alphabet."""


class InverseEvaluationError(CircleLabError, ArithmeticError):
    """Newton inversion of a primitive did not converge."""

    def __init__(self, primitive, point, message="Newton inversion did not converge"):
        self.primitive = primitive
        self.point = point
        super().__init__(f"{message}: {primitive!r} at y={point!r}")


class GridTooCoarseError(CircleLabError):
    """Roots closer than the grid step were detected; increase the grid density."""


class DegenerateError(CircleLabError):
    """A computation degenerated (identically fixed map, empty cascade level, ...)."""


class ChartEscapeError(CircleLabError):
    """A chart-local evaluation left the configured chart domain."""


class KoenigsError(CircleLabError):
    """Koenigs linearization failed (basin escape or non-convergence in strict mode)."""


class PreconditionError(CircleLabError, ValueError):
    """An operation was called with arguments violating its documented precondition."""


class ConfigError(CircleLabError, ValueError):
    """A scenario configuration failed schema or semantic validation."""


class StallError(CircleLabError):
    """An iterative scheme stopped making the required progress."""
