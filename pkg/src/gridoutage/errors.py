"""Exception types shared across the package."""


class CaseParseError(ValueError):
    """Malformed case-file content. Carries the 1-based source line when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TopologyError(ValueError):
    """The bus/line graph is disconnected where connectivity is required."""


class SamplingError(RuntimeError):
    """No admissible random draw was found within the attempt budget."""


class SolverDivergedError(RuntimeError):
    """Iterative solver produced non-finite values.

    ``state`` holds the last finite solver state for post-mortem inspection.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class SearchExplosionError(RuntimeError):
    """The candidate set of an exhaustive search exceeds the configured cap."""
