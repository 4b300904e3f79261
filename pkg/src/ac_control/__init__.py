"""Time-discrete constrained quasilinear Allen-Cahn solves and optimal control.

The package is organized bottom-up: `mesh` (1D Neumann grid calculus and
tridiagonal algebra), `physics` (regularization families, reaction,
assumption validator), `state` (implicit convex-minimization stepping
and energy audits), `sensitivity` (linearization/adjoint systems and
limiting-multiplier diagnostics), `control` (cost, adjoint gradient,
descent optimizer), `limits` ((eps, delta) continuation tables), and the
`config`/`verify`/`cli` application layer.
"""

from .config import FieldSpec, RunConfig, default_config, parse_config
from .control import (FDReport, GradientResult, OptimizeOptions,
                      OptimizeResult, cost, fd_gradient_check, gradient,
                      optimize)
from .errors import (AssumptionError, ConfigurationError, ConstraintKindError,
                     LineSearchStalledError, NondifferentiableError,
                     SingularSystemError, SolverError, StepNonconvergenceError)
from .limits import (ControlContinuationResult, LimitReport, Schedule,
                     StateContinuationResult, default_schedule,
                     limit_diagnostics, run_control_continuation,
                     run_state_continuation)
from .mesh import (DualField, FieldNorms, Grid, TridiagonalSystem,
                   assemble_tridiagonal, build_grid, field_norms,
                   forward_diff, gronwall_bound, gronwall_holds,
                   inner_product, neumann_divergence, riesz_representative,
                   solve_tridiagonal, x_norm)
from .physics import (ConstraintRegularization, FluxRegularization,
                      PhysicsParams, Reaction, double_well, resolvent,
                      validate_assumptions)
from .sensitivity import (CutoffSpec, SensitivityTrajectory, StepOperator,
                          assemble_step_operator, compute_zeta, duality_gap,
                          gamma_residual, solve_adjoint, solve_linearization)
from .state import (ModelSetup, StateTrajectory, StepOptions,
                    energy_ledger_check, free_energy, solve_state, solve_step,
                    step_energy, step_residual, xi_bound_check)
from .verify import run_verify

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
