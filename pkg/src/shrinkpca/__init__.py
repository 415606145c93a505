"""Leading eigenvector and eigenvalue of a covariance matrix by shrinking shift-and-invert.

The power method is run on ``(lam I - X)^{-1}`` with a shift ``lam`` that
shrinks towards ``lambda_1``; each inverse product is a convex quadratic
minimization solved by conjugate gradients, SVRG or accelerated SVRG.
"""

from .driver import (
    EigResult, GapEstimate, InnerSolver, ScheduleParams, ShrinkState, gamma, gap_estimate_delta,
    gapfree_eigenvalue, inverse_condition_bound, loop_bound, search_delta_hat, shrink_exact,
    shrink_inexact, subsample_size, theoretical_eps_tilde,
)
from .errors import (
    ConditioningError, GuardViolation, InputError, NoGapError, ShrinkPcaError,
    SingularOperatorError, StepSizeError, ToleranceError,
)
from .linalg import (
    CovarianceOperator, DataMatrix, DenseEnsemble, SeededRng, ShiftedOperator, SparseVector,
    cov_matvec, normalize_dataset, random_unit_vector,
)
from .oracle import SpectrumOracle, dense_eigendecompose, plant_spectrum, tail_mass
from .power import PmSchedule, pm_iterations, power_method, rayleigh_quotient
from .quad import (
    CatalystConfig, QuadraticProblem, SolveResult, SvrgConfig, catalyst_solve, exact_solve,
    suboptimality_to_distance, svrg_dense_solve, svrg_solve,
)
