"""Ridge initialization, the moment estimator for lambda2, and WAIC."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import errors
from .gibbs import run_gibbs
from .model import Hyperparameters, build_spatial_structure

DEFAULT_PENALTY_GRID = tuple(10.0 ** np.arange(-3, 4.5, 0.5))
DEFAULT_RHO_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 0.95)
MIN_WAIC_DRAWS = 100


@dataclass
class RidgeInit:
    w_ridge: np.ndarray  # (d, c)
    ridge_penalties: np.ndarray  # (c,)
    cv_error: np.ndarray  # (len(grid), c) mean squared prediction error


@dataclass
class WaicReport:
    waic: float
    lppd_term: float
    penalty_term: float
    per_subject: np.ndarray  # (n, 2): log mean p, variance of log p


def _ridge_path(x, y, grid):
    """Ridge solutions for every penalty in ``grid``: shape (len(grid), d, c)."""
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    uty = u.T @ y
    shrink = s[None, :] / (s[None, :] ** 2 + np.asarray(grid)[:, None])
    return np.einsum("kd,gk,kc->gdc", vt, shrink, uty)


def fold_assignment(n, cv_folds, seed):
    """Contiguous blocks of a seeded random permutation."""
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, cv_folds)


def ridge_initialize(dataset, cv_folds=5, penalty_grid=DEFAULT_PENALTY_GRID, seed=0):
    """Column-wise ridge regression with the penalty picked by k-fold CV.

    No intercept is fitted, matching the regression model itself.
    """
    grid = np.asarray(penalty_grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0) or not np.all(np.isfinite(grid)):
        raise errors.ValidationError("penalty grid must be nonempty, finite and positive")
    if not 2 <= cv_folds <= dataset.n:
        raise errors.ValidationError(f"need 2 <= cv_folds <= n, got {cv_folds}")
    x, y = dataset.x, dataset.y
    sse = np.zeros((grid.size, dataset.c))
    for test in fold_assignment(dataset.n, cv_folds, seed):
        train = np.setdiff1d(np.arange(dataset.n), test)
        path = _ridge_path(x[train], y[train], grid)
        pred = np.einsum("ld,gdc->glc", x[test], path)
        sse += np.sum((pred - y[test][None]) ** 2, axis=1)
    cv_error = sse / dataset.n
    # first minimum wins, so ties go to the smaller penalty
    best = np.argmin(cv_error, axis=0)
    full = _ridge_path(x, y, grid)
    w = full[best, :, np.arange(dataset.c)].T
    return RidgeInit(w, grid[best], cv_error)


def moment_lambda2(w_ridge, v):
    """lambda2 = d c (c + 1) / max(1, v - 3) / sum(W^2)."""
    w_ridge = np.asarray(w_ridge, dtype=float)
    d, c = w_ridge.shape
    total = float(np.sum(w_ridge**2))
    if total <= 0:
        raise errors.AllZeroRidge("ridge coefficients are all zero")
    return d * c * (c + 1) / max(1.0, v - 3.0) / total


def waic(loglik_draws, min_draws=MIN_WAIC_DRAWS):
    """WAIC from an (m, n) array of per-subject log likelihoods; lower is better."""
    ll = np.asarray(loglik_draws, dtype=float)
    if ll.ndim != 2:
        raise errors.ShapeMismatch("loglik draws must have shape (m, n)")
    m = ll.shape[0]
    if m < min_draws:
        raise errors.TooFewSamples(f"WAIC needs at least {min_draws} draws, got {m}")
    if not np.all(np.isfinite(ll)):
        raise errors.NonFiniteLogLik("log likelihood draws contain NaN or Inf")
    log_mean = logsumexp(ll, axis=0) - np.log(m)
    var = ll.var(axis=0, ddof=1)
    lppd_term = -2.0 * float(np.sum(log_mean))
    penalty_term = 2.0 * float(np.sum(var))
    return WaicReport(
        lppd_term + penalty_term, lppd_term, penalty_term, np.column_stack([log_mean, var])
    )


def waic_for_spatial(dataset, spatial, hyper, gibbs_config, init):
    out = run_gibbs(dataset, spatial, hyper, gibbs_config, init)
    return waic(out.loglik_draws), out


def select_rho_by_waic(dataset, a, hyper, gibbs_config, init, rho_grid=DEFAULT_RHO_GRID):
    """Run one chain per rho and keep the smallest WAIC.

    Returns (best_rho, reports, outputs) with one report and output per grid point.
    """
    reports, outputs = [], []
    for rho in rho_grid:
        rep, out = waic_for_spatial(dataset, build_spatial_structure(a, rho), hyper, gibbs_config, init)
        reports.append(rep)
        outputs.append(out)
    best = int(np.argmin([r.waic for r in reports]))
    return float(rho_grid[best]), reports, outputs


def select_lambda2_by_waic(dataset, spatial, hyper, gibbs_config, init, lambda2_grid):
    """WAIC over a lambda2 grid.  WAIC tends to fall monotonically as lambda2
    grows, so the minimizer usually sits on the grid edge; a warning says so."""
    reports = []
    for lam in lambda2_grid:
        h = Hyperparameters(float(lam), hyper.v, hyper.s)
        reports.append(waic_for_spatial(dataset, spatial, h, gibbs_config, init)[0])
    values = np.array([r.waic for r in reports])
    best = int(np.argmin(values))
    if best in (0, len(values) - 1) or np.all(np.diff(values) <= 0):
        warnings.warn(
            "WAIC is monotone or minimized at the grid edge; lambda2 chosen this way "
            "tends to under-regularize",
            UserWarning,
            stacklevel=2,
        )
    return float(lambda2_grid[best]), reports
