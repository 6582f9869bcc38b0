"""Rate estimation for the linear birth-death process with immigration."""
from .errors import (
    ConsistencyError,
    DomainError,
    GapError,
    InsufficientData,
    LBDIError,
    NonConvergence,
    ParseError,
    SingularInversion,
    ToleranceError,
    ZeroLikelihood,
)
from .estimators import (
    AsymptoticCovariance,
    CountMatrix,
    ProbTriple,
    asymptotic_covariance,
    forward_triple,
    invert_g,
    jacobian_g,
    least_squares_fit,
    mle_triple,
    plugin_estimate,
    sigma_prime,
)
from .experiment import ExperimentConfig, FitReport, GridSpec, estimate_counts, parse_grid, run_experiment
from .hmm import HmmModel, fit, forward, forward_backward, init_model, run_em
from .io import load_counts
from .joint import emission_table, joint_kernel
from .lambertw import lambert_w0
from .model import (
    Params,
    TruncationConfig,
    stationary_dist,
    stationary_pmf,
    transition_prob,
    truncated_kernel,
)
from .simulate import discretize, sample_stationary, simulate_path

__version__ = "0.1.0"
