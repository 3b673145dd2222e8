"""Random walks in Bernoulli potentials: travel costs, Lyapunov exponents,
and Lipschitz-in-density bounds, with exact and Monte Carlo estimators."""

from .annealed import (
    CostEstimate,
    DerivativeReport,
    annealed_cost,
    annealed_cost_exact,
    annealed_cost_env_mc,
    annealed_cost_path_mc,
    derivative_report,
)
from .bounds import BoundReport, RateFunctionValue, check_annealed_bounds, check_quenched_bounds, check_rate_bounds, rate_function
from .environment import Environment, couple, enumerate_environments, flip_site, load_environment, sample_environment, save_environment
from .errors import (
    EstimatorError,
    GuardError,
    NonConcaveError,
    RwrpError,
    SolverError,
    ValidationError,
)
from .lattice import BoxGeometry, build_box
from .lyapunov import LyapunovPoint, estimate_annealed_lyapunov, estimate_quenched_lyapunov, lyapunov_difference_profile
from .solver import (
    QuenchedField,
    expected_quenched_cost,
    expected_range,
    flip_ratio_table,
    hit_before_probability,
    quenched_cost,
    return_weight_psi,
    russo_rhs,
    solve_travel_field,
)

__version__ = "0.1.0"
