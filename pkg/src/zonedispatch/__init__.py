"""Economic dispatch with prohibited operating zones, valve-point costs,
ramp limits, spinning reserve and Kron transmission losses."""

from .audit import AuditReport, ReportedDispatch, adjusted_cpu_time, audit_dispatch, audit_solution, audit_table
from .cost import CostBreakdown, kink_points, quadratic_cost, smooth_piece_derivative, valve_cost
from .io import ParseError, bundled_case, load_case, replicate_case, write_case
from .loss import loss_gradient, transmission_loss
from .model import (
    DispatchError,
    DispatchSolution,
    Infeasible,
    LossModel,
    NotConverged,
    OperatingZone,
    SystemCase,
    Unit,
    ValidationError,
    ZoneAssignment,
    effective_bounds,
    make_unit,
    validate_case,
)
from .search import branch_and_bound, enumerate_assignments, lower_bound, solve
from .subproblem import SolveOptions, reserve_available, solve_lossless_quadratic, solve_nlp

__version__ = "0.1.0"
