"""Exception types shared across the package."""


class MeshResourceError(RuntimeError):
    """Requested mesh resolution exceeds the configured node budget."""


class CoefficientRangeError(ValueError):
    """A coefficient field violates a positivity/range requirement."""


class PorosityRangeError(ValueError):
    """Porosity left the admissible open interval at some node."""

    def __init__(self, message, node=None, value=None):
        super().__init__(message)
        self.node = node
        self.value = value


class SolverError(RuntimeError):
    """Linear solve failed or did not reach the required residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConstraintError(ValueError):
    """A system is missing constraints needed for well-posedness."""


class StaleEvaluationError(ValueError):
    """A risk evaluation was produced at a different design than requested."""


class ContinuationError(RuntimeError):
    """A continuation stage failed; carries the completed-stage history."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""
