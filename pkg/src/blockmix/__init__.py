"""Model-based biclustering with binary block loadings.

Rows are clustered by a Gaussian mixture; within each component the variables
are partitioned into column clusters through a binary membership matrix B_k,
giving covariance B_k B_k' + D_k.  Fitting uses AECM; AIC/BIC pick the variant,
K and L.
"""

from .aecm import FitConfig, FitResult, Responsibilities, e_step, fit
from .errors import (
    BlockmixError,
    FitFailureError,
    InvalidInputError,
    InvalidParameterError,
    NumericalError,
    ParseError,
    SelectionFailureError,
)
from .model import (
    ComponentParams,
    DataMatrix,
    Dimensions,
    MixtureParams,
    ModelVariant,
    assemble_covariance,
    column_cluster_assignment,
    log_density,
    log_likelihood,
    membership_matrix,
    parameter_count,
)
from .selection import GridSpec, SelectionTable, aic, bic, grid_search
from .synth import Scenario, sample, scenario_a

__version__ = "0.1.0"

__all__ = [
    "BlockmixError",
    "ComponentParams",
    "DataMatrix",
    "Dimensions",
    "FitConfig",
    "FitFailureError",
    "FitResult",
    "GridSpec",
    "InvalidInputError",
    "InvalidParameterError",
    "MixtureParams",
    "ModelVariant",
    "NumericalError",
    "ParseError",
    "Responsibilities",
    "Scenario",
    "SelectionFailureError",
    "SelectionTable",
    "aic",
    "assemble_covariance",
    "bic",
    "column_cluster_assignment",
    "e_step",
    "fit",
    "grid_search",
    "log_density",
    "log_likelihood",
    "membership_matrix",
    "parameter_count",
    "sample",
    "scenario_a",
]
