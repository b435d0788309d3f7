# Analysis module
from .averaging import AveragedIterates, IterateAverager
from .bounds import (
    BoundConstants,
    box_diameter,
    estimate_bound_constants,
    theorem_rhs,
    theorem_rhs_presum,
)
from .gap_check import GapCheckResult, expectation_gap_check, write_bound_report
from .privacy import SubproblemParams, noise_recovery, penalized_subproblem_solve
from .toy_problems import QuadraticToyProblem, ToyFederation, consensus_optimum, make_toy_federation

__all__ = [
    "AveragedIterates",
    "BoundConstants",
    "GapCheckResult",
    "IterateAverager",
    "QuadraticToyProblem",
    "SubproblemParams",
    "ToyFederation",
    "box_diameter",
    "consensus_optimum",
    "estimate_bound_constants",
    "expectation_gap_check",
    "make_toy_federation",
    "noise_recovery",
    "penalized_subproblem_solve",
    "theorem_rhs",
    "theorem_rhs_presum",
    "write_bound_report",
]
