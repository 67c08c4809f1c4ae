from .estimates import AprioriReport, apriori_gap
from .regression import ConditioningError, Projector, RegressionBasis, condexp_regress, log_monomials
from .solvers import (
    BsdeProblem,
    BsdeSolution,
    ConvergenceError,
    LinearDriverSpec,
    PicardConfig,
    StabilityError,
    check_stability,
    residual_check,
    solve_backward_euler,
    solve_linear,
    solve_picard,
    supersolution_from_consumption,
    terminal_values,
    weighted_norm2,
)

__all__ = [
    "AprioriReport",
    "BsdeProblem",
    "BsdeSolution",
    "ConditioningError",
    "ConvergenceError",
    "LinearDriverSpec",
    "PicardConfig",
    "Projector",
    "RegressionBasis",
    "StabilityError",
    "apriori_gap",
    "check_stability",
    "condexp_regress",
    "log_monomials",
    "residual_check",
    "solve_backward_euler",
    "solve_linear",
    "solve_picard",
    "supersolution_from_consumption",
    "terminal_values",
    "weighted_norm2",
]
