"""Fitting pipelines shared by the command line and the simulation studies."""

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import errors
from .gibbs import run_gibbs
from .model import Hyperparameters, ModelState
from .tuning import moment_lambda2, ridge_initialize
from .vb import init_posterior, posterior_state, run_vb

THREADS_ENV = "SPATIAL_MTR_NUM_THREADS"


def max_workers():
    """Worker cap from SPATIAL_MTR_NUM_THREADS (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        raise errors.ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise errors.ConfigError(f"{THREADS_ENV} must be at least 1")
    return value


def parallel_map(func, items, workers=None):
    """Ordered map; uses worker processes when more than one is allowed."""
    items = list(items)
    workers = max_workers() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(func, items))


def spawn_seeds(seed, count):
    """Independent integer seeds derived from one master seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(ch.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)) for ch in children]


def make_hyper(dataset, lambda2="moment", v=2.0, s=None, ridge=None, ridge_seed=0, cv_folds=5):
    """Hyperparameters with lambda2 either given or set by the moment estimator."""
    if ridge is None:
        ridge = ridge_initialize(dataset, cv_folds=cv_folds, seed=ridge_seed)
    s = np.eye(2) if s is None else s
    if isinstance(lambda2, str):
        if lambda2 != "moment":
            raise errors.ConfigError(f"lambda2 must be a number or 'moment', got {lambda2!r}")
        lam = moment_lambda2(ridge.w_ridge, v)
    else:
        lam = float(lambda2)
    return Hyperparameters(lam, v, s), ridge


def fit_vb(dataset, spatial, hyper, ridge, vb_config):
    return run_vb(dataset, spatial, hyper, vb_config, init_posterior(dataset, hyper, ridge.w_ridge))


def gibbs_init(dataset, hyper, ridge=None, vb_post=None):
    """VB point estimates when available, else ridge means with Sigma = S and
    omega2 at its prior mean."""
    if vb_post is not None:
        return posterior_state(vb_post)
    omega2 = np.full(dataset.d, (dataset.c + 1) / hyper.lambda2)
    return ModelState(ridge.w_ridge.copy(), hyper.s.copy(), omega2)


def fit_gibbs(dataset, spatial, hyper, gibbs_config, init):
    return run_gibbs(dataset, spatial, hyper, gibbs_config, init)
