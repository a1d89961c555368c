"""Bayesian spatial multi-task regression for paired imaging phenotypes.

A bivariate conditional autoregressive error model across left/right ROI
pairs, a group-lasso shrinkage prior on SNP coefficient rows, and two
solvers: a Gibbs sampler and mean-field variational Bayes.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    FileIOError,
    MaxIterExceeded,
    NumericalError,
    SpatialMTRError,
    ValidationError,
)
from .gibbs import GibbsConfig, GibbsOutput, run_gibbs  # noqa: F401
from .model import (  # noqa: F401
    Dataset,
    Hyperparameters,
    ModelState,
    SpatialStructure,
    build_spatial_structure,
    default_neighborhood,
    independent_structure,
    log_joint,
    simulate_dataset,
)
from .selection import credible_intervals, fdr_threshold, tail_probabilities  # noqa: F401
from .tuning import moment_lambda2, ridge_initialize, waic  # noqa: F401
from .vb import VBConfig, VBPosterior, compute_elbo, run_vb  # noqa: F401
