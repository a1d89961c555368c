"""Tail probabilities, Bayesian FDR selection and credible intervals.

Every function accepts either an array of posterior draws shaped (N, d, c)
or a ``VBPosterior``; the variational path uses the Gaussian marginals of
q(W) in closed form.
"""

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import errors
from .vb import VBPosterior

MIN_DRAWS = 100
VB_NOMINAL_N = 10000


@dataclass
class TailProbMatrix:
    p: np.ndarray  # (d, c)
    c_star: float
    source: str  # "mcmc" or "vb"
    n: int  # draw count used for the clamp


@dataclass
class SelectionResult:
    threshold: float
    alpha: float
    selected: np.ndarray  # boolean (d, c)
    n_prefix: int

    @property
    def pairs(self):
        """Selected (snp, phenotype) index pairs in row-major order."""
        return [tuple(int(v) for v in ij) for ij in np.argwhere(self.selected)]

    @property
    def per_region_counts(self):
        return self.selected.sum(axis=0)


def _vb_marginals(post):
    return post.mu_w, post.sd_w


def _check_draws(draws, minimum=MIN_DRAWS):
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 3:
        raise errors.ShapeMismatch("posterior draws must have shape (N, d, c)")
    if draws.shape[0] < minimum:
        raise errors.TooFewSamples(
            f"{draws.shape[0]} retained draws; at least {minimum} are required"
        )
    return draws


def tail_probabilities(posterior, c_star, n_nominal=VB_NOMINAL_N):
    """p_ij = P(|W_ij| > c_star | Y), capped at 1 - 1/(2N).

    For draws the cap only touches p = 1.  Exact Gaussian tails can land
    between the cap and 1, so capping (rather than replacing exact ones)
    keeps p nonincreasing in c_star.
    """
    if not c_star > 0:
        raise errors.NonPositiveCStar(f"c_star must be positive, got {c_star}")
    if isinstance(posterior, VBPosterior):
        mu, sd = _vb_marginals(posterior)
        p = stats.norm.sf((c_star - mu) / sd) + stats.norm.cdf((-c_star - mu) / sd)
        n, source = int(n_nominal), "vb"
    else:
        draws = _check_draws(posterior)
        n = draws.shape[0]
        p = np.mean(np.abs(draws) > c_star, axis=0)
        source = "mcmc"
    p = np.minimum(p, 1.0 - 1.0 / (2 * n))
    return TailProbMatrix(p, float(c_star), source, n)


def fdr_threshold(tail, alpha):
    """Bayesian FDR rule.

    Take the longest prefix of the descending probabilities whose average
    of (1 - p) is at most alpha; phi is the last probability in it and a pair
    is selected when p > phi.  Ties are ordered row-major (stable sort).
    """
    if not 0 < alpha < 1:
        raise errors.ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    p = tail.p if isinstance(tail, TailProbMatrix) else np.asarray(tail, dtype=float)
    flat = p.reshape(-1)
    order = np.argsort(-flat, kind="stable")
    ranked = flat[order]
    running = np.cumsum(1.0 - ranked) / np.arange(1, ranked.size + 1)
    ok = np.flatnonzero(running <= alpha)
    if ok.size == 0:
        return SelectionResult(1.0, alpha, np.zeros(p.shape, dtype=bool), 0)
    l_star = int(ok[-1]) + 1
    phi = float(ranked[l_star - 1])
    return SelectionResult(phi, alpha, p > phi, l_star)


def credible_intervals(posterior, level=0.95, min_draws=2):
    """Equal-tail intervals; returns (lo, hi, mean), each shaped (d, c).

    Empirical quantiles use numpy's default linear interpolation.
    """
    if not 0 <= level < 1:
        raise errors.ValidationError(f"level must lie in [0, 1), got {level}")
    q = (1.0 - level) / 2.0
    if isinstance(posterior, VBPosterior):
        mu, sd = _vb_marginals(posterior)
        z = stats.norm.ppf(1.0 - q)
        return mu - z * sd, mu + z * sd, mu.copy()
    draws = _check_draws(posterior, min_draws)
    lo, hi = np.quantile(draws, [q, 1.0 - q], axis=0)
    return lo, hi, draws.mean(axis=0)


def posterior_sd(posterior):
    if isinstance(posterior, VBPosterior):
        return posterior.sd_w
    return np.asarray(posterior).std(axis=0, ddof=1)
