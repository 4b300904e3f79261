"""Exception types shared across the toolkit.

The CLI maps these onto its exit-code contract: configuration and
assumption failures exit with 1, solver failures with 2, failed
verification checks with 3.
"""


class ConfigurationError(ValueError):
    """Invalid configuration value, grid mismatch, or violated precondition."""


class AssumptionError(ConfigurationError):
    """A structural assumption (A1..A6) fails for the given setup."""


class NondifferentiableError(ValueError):
    """Derivative requested at a point where the chosen family has none."""


class ConstraintKindError(ConfigurationError):
    """Operation not defined for this constraint-regularization kind."""


class SolverError(RuntimeError):
    """Base class for numerical failures during a solve."""


class SingularSystemError(SolverError):
    """Tridiagonal elimination hit a pivot below the breakdown threshold."""


class StepNonconvergenceError(SolverError):
    """Newton iteration for one time step exceeded its iteration budget."""

    def __init__(self, message: str, step_index: int, last_iterate=None,
                 residual_history=None):
        super().__init__(message)
        self.step_index = step_index
        self.last_iterate = last_iterate
        self.residual_history = residual_history or []


class LineSearchStalledError(SolverError):
    """Backtracking line search could not produce an acceptable step."""
