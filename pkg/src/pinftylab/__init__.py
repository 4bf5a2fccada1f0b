"""pinftylab: grid solvers and convergence-rate experiments for the
p -> infinity limit of p-harmonic Dirichlet problems."""

__version__ = "0.1.0"

from .analysis import (
    HolderEstimate,
    RateFit,
    RateRow,
    bound_explicit_rate,
    bound_general_rate,
    fit_rate,
    gradient_floor,
    holder_seminorm,
    morrey_H_bound,
    morrey_prelimit_factor,
    optimal_epsilon,
    restriction_check,
    sup_error,
)
from .cones import (
    ConeSpec,
    RadialProblem,
    aronsson,
    cone_eval,
    holder_exponent,
    radial_exact_error,
    radial_lower_bound,
    radial_p_harmonic,
    squeeze_bounds,
)
from .grid import (
    BallStencil,
    GridDomain,
    NodeMask,
    ScalarField,
    ball_stencil,
    build_grid,
    field_from_csv,
    field_to_csv,
    grid_from_csv,
    grid_to_csv,
    inner_parallel,
    ring_distance,
)
from .nonlocal_ops import (
    ConsistencyReport,
    MaxPrincipleReport,
    PerturbMargins,
    check_approx_consistency,
    check_comparison_with_cones,
    check_nonlocal_max_principle,
    consistency_bound,
    lower_envelope,
    nonlocal_inf_laplacian,
    perturb_positive_slope,
    perturb_strict,
    slope_minus,
    slope_plus,
    upper_envelope,
)
from .solvers import (
    BoundaryData,
    SolveReport,
    p_energy,
    p_energy_gradient,
    residual_field,
    solve_inf_harmonic,
    solve_p_energy,
    solve_p_harmonious,
)
