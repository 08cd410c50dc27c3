"""Random L-spline synthesis and Poisson-to-Levy convergence verification.

The package samples sparse Poisson impulse fields, solves L s = w against
a right inverse that pins the boundary, and checks, through characteristic
functionals and marginal statistics, that the resulting random splines
converge in law to the matching Levy process as the impulse rate grows.
"""

from .exponents import (
    InfeasibleBound,
    JumpLaw,
    LevyExponent,
    PoissonizedExponent,
    cauchy,
    certify_bound,
    compound_poisson,
    evaluate,
    gaussian,
    laplace,
    poissonization_contraction_check,
    poissonize,
    triplet,
)
from .grid import Box, Grid
from .noise import ImpulseField, RngStream, merge_margin, sample_impulse_field
from .operators import (
    OperatorSpec,
    apply_L_discrete,
    apply_T,
    apply_adjoint,
    green,
    make_operator,
    margin_rule,
    parse_operator_config,
)
from .synthesis import (
    GridRealization,
    ensemble,
    reference_levy_path,
    synthesize_spline,
)
from .verify import (
    CFReport,
    NoiseFloor,
    analytic_cf,
    build_cf_bank,
    build_identity_bank,
    convergence_study,
    empirical_cf,
    marginal_gof,
)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "CFReport",
    "Grid",
    "GridRealization",
    "ImpulseField",
    "InfeasibleBound",
    "JumpLaw",
    "LevyExponent",
    "NoiseFloor",
    "OperatorSpec",
    "PoissonizedExponent",
    "RngStream",
    "analytic_cf",
    "apply_L_discrete",
    "apply_T",
    "apply_adjoint",
    "build_cf_bank",
    "build_identity_bank",
    "cauchy",
    "certify_bound",
    "compound_poisson",
    "convergence_study",
    "empirical_cf",
    "ensemble",
    "evaluate",
    "gaussian",
    "green",
    "laplace",
    "make_operator",
    "marginal_gof",
    "margin_rule",
    "merge_margin",
    "parse_operator_config",
    "poissonization_contraction_check",
    "poissonize",
    "reference_levy_path",
    "sample_impulse_field",
    "synthesize_spline",
    "triplet",
]
