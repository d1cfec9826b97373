"""Centered spatio-temporal autologistic models for binary lattice data.

Simulation (exact coupling-from-the-past and Gibbs variants), maximum
pseudo-likelihood estimation by a two-stage EM scheme, sandwich and
bootstrap variances, and neighborhood-structure selection by maximal
pseudo-likelihood.
"""

from .dataio import (
    Dataset,
    build_past_neighbor_covariate,
    generate_surrogate_vineyard,
    load_dataset,
    save_dataset,
)
from .errors import (
    AutologisticError,
    CoalescenceError,
    ConfigError,
    DataValidationError,
    EstimationError,
    MonotonicityError,
    SingularDesignError,
)
from .estimation import (
    FitResult,
    bootstrap_variance,
    empl_fit,
    maximize_pl_step,
    pl_gradient,
    pseudo_log_likelihood,
    variance_sandwich,
)
from .estimators import AutologisticRegressor, NeighborhoodSelector
from .lattice import Ellipse, GridShape, NeighborGraph, Rect, build_neighbor_graph, neighbor_sum
from .model import (
    CENTERINGS,
    CovariateSeries,
    ModelParams,
    brute_force_joint,
    centering_offset,
    centering_offsets,
    conditional_logit,
    conditional_prob,
    enumerate_states,
    joint_unnormalized_log_density,
    transition_log_prob,
)
from .rng import RngStream
from .sampling import (
    SamplerConfig,
    cftp_slice_sample,
    gibbs_sweep,
    init_bernoulli,
    simulate_trajectories,
    simulate_trajectory,
)
from .selection import (
    Candidate,
    CandidateSet,
    SelectionReport,
    enumerate_ellipse_candidates,
    enumerate_rect_candidates,
    misspecification_profile,
    select_by_pl,
)
from .study import (
    StudyConfig,
    StudySeries,
    conditional_scale_C,
    empirical_mean_D,
    large_scale_L,
    replicate_study,
)

__version__ = "0.1.0"
