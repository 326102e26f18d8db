"""Low-rank two-phase SDP solver.

Phase I runs an augmented-Lagrangian warm start on the single-factor form;
Phase II runs a splitting ADMM whose quadratic subproblems are solved by
warm-started matrix-free conjugate gradients.  Ships with SDPA-format I/O,
MaxCut and matrix-completion generators, and standardized KKT error metrics.
"""

from .config import SolverConfig
from .model import (
    DimensionMismatchError, SdpProblem, SparseSymMatrix,
    apply_A, apply_A_adjoint_times, objective_value, recombine,
)
from .metrics import ErrorTriple, dual_infeasibility, pd_gap, primal_infeasibility, sgm
from .sdpa import (
    GsetGraph, McInstance, gen_matrix_completion, gen_maxcut, gen_mc_random,
    parse_gset, parse_sdpa, parse_sdpa_file, write_sdpa,
)
from .solver import SolveReport, run_benchmark, solve

__version__ = "0.1.0"

__all__ = [
    "SolverConfig", "SdpProblem", "SparseSymMatrix", "DimensionMismatchError",
    "apply_A", "apply_A_adjoint_times", "objective_value", "recombine",
    "ErrorTriple", "primal_infeasibility", "dual_infeasibility", "pd_gap", "sgm",
    "GsetGraph", "McInstance", "gen_maxcut", "gen_matrix_completion",
    "gen_mc_random", "parse_gset", "parse_sdpa", "parse_sdpa_file", "write_sdpa",
    "SolveReport", "solve", "run_benchmark",
    "__version__",
]
