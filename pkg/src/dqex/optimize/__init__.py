"""Portfolio optimisation: exact LP, cushion frontier, gradient descent, Omega."""
from .lp import LpError, LpInfeasible, LpIterationLimit, LpProblem, LpSolution, LpUnbounded, solve_lp
from .portfolio import (
    DescentResult,
    FrontierPoint,
    FrontierResult,
    KinkWarning,
    LpResult,
    OmegaResult,
    OptimizeError,
    ProbeRecord,
    default_cushion_grid,
    dq_ex_gradient,
    dq_objective,
    max_omega_lp,
    min_dq_ex_frontier,
    min_dq_ex_gradient_descent,
    min_dq_ex_lp,
    normalize_weights,
    project_simplex,
    pseudo_convexity_probe,
)
