"""Inverse iteration for eigenvalue problems with eigenvector nonlinearities."""

from .core import (
    Eigenpair,
    NepvProblem,
    SolveFailed,
    VerificationError,
    normalize,
    rayleigh_quotient,
    residual,
    verify_problem,
)
from .iteration import (
    ConvergenceReport,
    FixedShift,
    HeuristicShift,
    IterationRecord,
    SolverConfig,
    Status,
    Version,
    invit_step,
    sign_aligned_distance,
    solve,
)

__version__ = "0.1.0"
