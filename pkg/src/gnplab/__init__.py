"""Meta-learning laboratory for maps from datasets to Gaussian predictions.

A model here consumes a context set of (x, y) pairs and emits a full joint
Gaussian over any requested target inputs: a mean vector plus a dense
covariance matrix, not merely pointwise error bars.  The package provides
the model itself, exact GP and sawtooth task generators with posterior
oracles, Gaussian/mixture divergence tooling used to reason about what
such maps can and cannot recover, a small autodiff core with a compiled
convolution backend, and a CLI for training, evaluation and diagnostics.
"""

__version__ = "0.1.0"

from .config import ConfigError, hash_config, load_config, normalize_config
from .divergences import (
    KLReport,
    MixtureFDD,
    averaged_kl,
    gaussian_divergence,
    gaussian_kl,
    kl_upper_bound,
    mc_kl,
    moment_match,
)
from .gp import Dataset, GaussianFDD, empty_dataset, gp_posterior, gp_sample
from .kernels import KernelSpec, default_kernel, kernel_eval
from .linalg import NotPositiveDefiniteError, cholesky_safe, nearest_psd
from .models import (
    ConvCNPArchitecture,
    ConvCNPModel,
    GNPArchitecture,
    GNPModel,
    load_checkpoint,
    save_checkpoint,
)
from .tasks import (
    Episode,
    GeneratorSpec,
    SizeSpec,
    SplitSpec,
    oracle_predict,
    sample_episode,
)
from .tensor import Tensor, ShapeError
from .training import EvalResult, TrainingDiverged, evaluate, train

__all__ = [
    "ConfigError",
    "ConvCNPArchitecture",
    "ConvCNPModel",
    "Dataset",
    "Episode",
    "EvalResult",
    "GNPArchitecture",
    "GNPModel",
    "GaussianFDD",
    "GeneratorSpec",
    "KLReport",
    "KernelSpec",
    "MixtureFDD",
    "NotPositiveDefiniteError",
    "ShapeError",
    "SizeSpec",
    "SplitSpec",
    "Tensor",
    "TrainingDiverged",
    "averaged_kl",
    "cholesky_safe",
    "default_kernel",
    "empty_dataset",
    "evaluate",
    "gaussian_divergence",
    "gaussian_kl",
    "gp_posterior",
    "gp_sample",
    "hash_config",
    "kernel_eval",
    "kl_upper_bound",
    "load_checkpoint",
    "load_config",
    "mc_kl",
    "moment_match",
    "nearest_psd",
    "normalize_config",
    "oracle_predict",
    "sample_episode",
    "save_checkpoint",
    "train",
]
