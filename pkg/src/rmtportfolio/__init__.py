"""Estimation-risk analysis for large shrinkage mean-variance portfolios.

Empirical out-of-sample performance, random-matrix deterministic
equivalents, and data-driven consistent estimators for portfolios built
from weighted and shrinkage moment estimates.
"""

from rmtportfolio.exceptions import (
    ConvergenceError,
    DegenerateFrontierError,
    InputError,
    SingularMatrixError,
    UnstableSolutionError,
)
from rmtportfolio.moments import (
    ShrinkageConfig,
    WeightProfile,
    effective_T,
    sample_cov,
    sample_mean,
    shrink_cov,
    shrink_mean,
    weighted_cov,
    weighted_mean,
)
from rmtportfolio.portfolio import (
    Moments,
    abc,
    ewp,
    gmvp,
    mv_portfolio,
    realized_performance,
    tangency,
)
from rmtportfolio.rmt import (
    RmtInputs,
    ade_gmvp_variance,
    ade_xi,
    solve_fixed_point,
    solve_general_z,
    verify_appendix_identities,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DegenerateFrontierError",
    "InputError",
    "Moments",
    "RmtInputs",
    "ShrinkageConfig",
    "SingularMatrixError",
    "UnstableSolutionError",
    "WeightProfile",
    "abc",
    "ade_gmvp_variance",
    "ade_xi",
    "effective_T",
    "ewp",
    "gmvp",
    "mv_portfolio",
    "realized_performance",
    "sample_cov",
    "sample_mean",
    "shrink_cov",
    "shrink_mean",
    "solve_fixed_point",
    "solve_general_z",
    "tangency",
    "verify_appendix_identities",
    "weighted_cov",
    "weighted_mean",
]
