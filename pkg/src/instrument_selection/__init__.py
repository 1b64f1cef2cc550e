"""Sequential selection of instrument sets for underspecified instrumental variable regression."""

from .combination import RunningEstimate, combine, error_bound, identification_distance, identified_fraction
from .errors import InstrumentSelectionError, RoundError
from .estimation import ProjectedEstimate, estimate_covariance, estimate_ols, estimate_projection
from .norm import NormEstimate, NormProvider, external_norm, oracle_norm
from .scenario import Scenario, SimilarityMatrix, compute_similarities, generate_scenario
from .selection import (
    CostKind,
    SelectionConfig,
    SisTrajectory,
    Strategy,
    cost,
    gain,
    run_ideal,
    run_random_baseline,
    run_sis,
    score,
    select_next,
)
from .simulator import Dataset, observational_data, run_experiment

__version__ = "0.1.0"
