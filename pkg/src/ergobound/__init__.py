"""Two-sided convergence-rate bounds for finite inhomogeneous continuous-time
Markov chains in weighted l1 norms, with numerical verification."""

from .bounds import RateEnvelope, RateProfile, envelopes, ergodicity_diagnosis, to_total_variation
from .models import (
    ChainModel,
    ModelError,
    ModelKind,
    birth_death_q,
    build_absorbing,
    build_bdpc,
    build_general,
    build_szk,
    eval_A,
    load_model,
    model_from_config,
    validate,
)
from .ode import SolverError, Trajectory, solve_p, solve_x, solve_z
from .optimizer import OptimizationProblem, optimize_weights
from .rates import eval_rate, integrate_rate, parse_rate
from .reduction import ReducedSystem, p_to_z, reduce, z_to_p
from .verify import positivity_check, run_sandwich, spectral_gap, spectral_gap_bracket, weighted_norm
from .weighting import (
    AlphaProfile,
    WeightMatrix,
    WeightShape,
    alpha_closed_form,
    alpha_profile,
    check_condition_i,
    check_condition_ii,
    make_H,
)

__version__ = "0.1.0"
