"""Online clustering by penalized weighted Gaussian mixtures.

A mixture fit that starts over-provisioned and shrinks redundant components
to zero, wrapped in a two-phase streaming pipeline (per-batch summarization
into weighted prototypes, then offline clustering of the prototypes), plus
dataset generators, partition metrics, and color image segmentation.
"""

from .em import (
    ConfigError,
    FitResult,
    MixtureModel,
    OrphanSampleError,
    PwgConfig,
    TotalCollapseError,
    WeightedDataset,
    bic_score,
    component_free_params,
    e_step,
    fit,
    loglik,
    m_step_covariances,
    m_step_means,
    m_step_mixing,
    penalized_loglik,
)
from .gaussian import Covariance, GaussianComponent, log_density, validate_component
from .selection import LambdaChoice, lambda_bound, select_lambda
from .stream import (
    Batch,
    OpwgConfig,
    Prototype,
    PrototypeSet,
    StreamState,
    finalize,
    predict,
    process_batch,
)

__version__ = "0.1.0"

__all__ = [
    "Batch",
    "ConfigError",
    "Covariance",
    "FitResult",
    "GaussianComponent",
    "LambdaChoice",
    "MixtureModel",
    "OpwgConfig",
    "OrphanSampleError",
    "Prototype",
    "PrototypeSet",
    "PwgConfig",
    "StreamState",
    "TotalCollapseError",
    "WeightedDataset",
    "bic_score",
    "component_free_params",
    "e_step",
    "finalize",
    "fit",
    "lambda_bound",
    "log_density",
    "loglik",
    "m_step_covariances",
    "m_step_means",
    "m_step_mixing",
    "penalized_loglik",
    "predict",
    "process_batch",
    "select_lambda",
    "validate_component",
    "__version__",
]
