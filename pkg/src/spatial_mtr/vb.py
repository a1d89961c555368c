"""Mean-field variational Bayes: q(W) prod_i q(omega_i^2) q(Sigma).

q(W_(i)) is Gaussian, q(Sigma) is Inverse-Wishart(S_q, v_q) and q(omega_i^2)
is reciprocal Inverse-Gaussian: 1/omega_i^2 ~ InverseGaussian(mu_eta_i, lambda2).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, multigammaln

from . import errors
from .model import LOG_2PI, ModelState, check_spd, pairs, residual_crossproduct


@dataclass
class VBConfig:
    epsilon: float = 1e-4
    k: int = 2
    max_iter: int = 500
    seed: int = 0
    residuals: str = "exact"  # or "plug-in"
    taylor: str = "standard"  # or "printed"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise errors.ValidationError("epsilon must be positive")
        if self.k < 1 or self.max_iter < 1:
            raise errors.ValidationError("k and max_iter must be positive")
        if self.residuals not in ("exact", "plug-in"):
            raise errors.ValidationError(f"unknown residual mode {self.residuals!r}")
        if self.taylor not in ("standard", "printed"):
            raise errors.ValidationError(f"unknown Taylor variant {self.taylor!r}")


@dataclass
class VBPosterior:
    mu_w: np.ndarray  # (d, c)
    sigma_w: np.ndarray  # (d, c, c)
    s_sigma: np.ndarray  # (2, 2)
    v_sigma: float
    mu_eta: np.ndarray  # (d,)
    mu_omega2: np.ndarray
    var_omega2: np.ndarray
    elbo_trace: list = field(default_factory=list)
    elbo_init: float = None
    converged: bool = False

    def copy(self):
        return VBPosterior(
            self.mu_w.copy(),
            self.sigma_w.copy(),
            self.s_sigma.copy(),
            self.v_sigma,
            self.mu_eta.copy(),
            self.mu_omega2.copy(),
            self.var_omega2.copy(),
            list(self.elbo_trace),
            self.elbo_init,
            self.converged,
        )

    @property
    def sd_w(self):
        return np.sqrt(np.einsum("kjj->kj", self.sigma_w))

    @property
    def sigma_mean(self):
        if self.v_sigma <= 3:
            raise errors.DegreesOfFreedomTooSmall("Inverse-Wishart mean needs v_q > 3")
        return self.s_sigma / (self.v_sigma - 3.0)

    def set_eta(self, i, mu_eta, lambda2):
        self.mu_eta[i] = mu_eta
        self.mu_omega2[i], self.var_omega2[i] = omega2_moments(mu_eta, lambda2)


def omega2_moments(mu_eta, lambda2):
    """Mean and variance of omega^2 when 1/omega^2 ~ IG(mu_eta, lambda2)."""
    mean = 1.0 / mu_eta + 1.0 / lambda2
    var = 1.0 / (mu_eta * lambda2) + 2.0 / lambda2**2
    return mean, var


def sigma_df(n, c, d, v):
    return 0.5 * n * c + 0.5 * c * d + v


def init_posterior(dataset, hyper, w_init, cov_scale=0.01):
    """Ridge-style start: given means, covariances 0.01 I, S_q = S, mu_eta = 1."""
    d, c = dataset.d, dataset.c
    mu_eta = np.ones(d)
    mean, var = omega2_moments(mu_eta, hyper.lambda2)
    return VBPosterior(
        mu_w=np.array(w_init, dtype=float),
        sigma_w=np.tile(cov_scale * np.eye(c), (d, 1, 1)),
        s_sigma=hyper.s.copy(),
        v_sigma=sigma_df(dataset.n, c, d, hyper.v),
        mu_eta=mu_eta,
        mu_omega2=np.broadcast_to(mean, (d,)).copy(),
        var_omega2=np.broadcast_to(var, (d,)).copy(),
    )


def expected_sigma_inv(post):
    return post.v_sigma * np.linalg.inv(post.s_sigma)


def expected_pair_outer(post):
    """sum over pairs j of E_q(W~_ij W~_ij^T), one 2 x 2 matrix per row."""
    mp = pairs(post.mu_w)
    k = mp.shape[1]
    cov = post.sigma_w.reshape(-1, k, 2, k, 2)
    return np.einsum("ija,ijb->iab", mp, mp) + np.einsum("ijajb->iab", cov)


def vb_update_w_row(i, post, dataset, spatial):
    """Optimal q(W_(i)) given the other factors: returns (mean, covariance).

    Precision (mu_eta_i I + s_i B) kron E[inv(Sigma)]; the mean is
    inv(g) B Z exactly as in the Gibbs conditional.
    """
    x_i = dataset.x[:, i]
    s_i = x_i @ x_i
    resid = dataset.y - dataset.x @ post.mu_w + np.outer(x_i, post.mu_w[i])
    z = pairs(x_i @ resid)
    g = post.mu_eta[i] * np.eye(spatial.n_pairs) + s_i * spatial.b
    check_spd(g, f"variational precision factor of row {i}")
    g_inv = np.linalg.inv(g)
    mean = g_inv @ (spatial.b @ z)
    cov = np.kron(g_inv, post.s_sigma / post.v_sigma)
    return mean.reshape(-1), 0.5 * (cov + cov.T)


def expected_residual_crossproduct(post, dataset, spatial, residuals="exact"):
    """E_q of sum_l E_l^T B E_l; ``plug-in`` drops the q(W) covariance term."""
    resid = dataset.y - dataset.x @ post.mu_w
    out = residual_crossproduct(resid, spatial.b)
    if residuals == "exact":
        s = np.einsum("li,li->i", dataset.x, dataset.x)
        k = spatial.n_pairs
        cov = post.sigma_w.reshape(-1, k, 2, k, 2)
        out = out + np.einsum("i,jk,ijakb->ab", s, spatial.b, cov)
    return out


def vb_update_sigma(post, dataset, spatial, hyper, residuals="exact"):
    lik = expected_residual_crossproduct(post, dataset, spatial, residuals)
    prior = np.einsum("iab,i->ab", expected_pair_outer(post), post.mu_eta)
    s_q = lik + prior + hyper.s
    s_q = 0.5 * (s_q + s_q.T)
    check_spd(s_q, "S_q(Sigma)")
    return s_q


def expected_c_star(post):
    omega = expected_sigma_inv(post)
    return np.einsum("iab,ba->i", expected_pair_outer(post), omega)


def vb_update_eta(i, post, hyper):
    ec = expected_c_star(post)[i]
    if ec <= 1e-300:
        raise errors.DegenerateRow(f"E_q(c*) vanishes for row {i}")
    return float(np.sqrt(hyper.lambda2 / ec))


def expected_log_omega2(post, taylor="standard"):
    """Second-order Taylor value of E_q log omega^2.

    ``printed`` divides the variance by the mean rather than the squared mean.
    The term cancels from the assembled ELBO (its coefficients from the
    coefficient prior, the omega prior and the entropy sum to zero) so the
    variant only changes the individual pieces.
    """
    m, v = post.mu_omega2, post.var_omega2
    denom = m**2 if taylor == "standard" else m
    return np.log(m) - v / (2.0 * denom)


def elbo_terms(post, dataset, spatial, hyper, taylor="standard"):
    n, c = dataset.n, dataset.c
    lam = hyper.lambda2
    v_q = post.v_sigma
    if v_q <= 3:
        raise errors.DegreesOfFreedomTooSmall(f"v_q = {v_q} must exceed 3")
    chol_q = check_spd(post.s_sigma, "S_q(Sigma)")
    logdet_sq = 2.0 * np.sum(np.log(np.diag(chol_q)))
    omega = expected_sigma_inv(post)
    # plug-in E log|Sigma| at the Inverse-Wishart mean; cancels like E log omega^2
    log_sigma = logdet_sq - 2.0 * np.log(v_q - 3.0)
    log_omega2 = expected_log_omega2(post, taylor)

    r = expected_residual_crossproduct(post, dataset, spatial, "exact")
    e_loglik = (
        -0.5 * n * c * LOG_2PI
        + n * spatial.logdet
        - 0.25 * n * c * log_sigma
        - 0.5 * np.trace(r @ omega)
    )
    e_w = np.sum(
        -0.5 * c * LOG_2PI
        - 0.5 * c * log_omega2
        - 0.25 * c * log_sigma
        - 0.5 * post.mu_eta * np.einsum("iab,ba->i", expected_pair_outer(post), omega)
    )
    shape = 0.5 * (c + 1)
    e_omega = np.sum(
        shape * np.log(0.5 * lam)
        - gammaln(shape)
        + (shape - 1.0) * log_omega2
        - 0.5 * lam * post.mu_omega2
    )
    _, logdet_s = np.linalg.slogdet(hyper.s)
    v = hyper.v
    e_sigma = (
        0.5 * v * logdet_s
        - v * np.log(2.0)
        - multigammaln(0.5 * v, 2)
        - 0.5 * (v + 3.0) * log_sigma
        - 0.5 * np.trace(hyper.s @ omega)
    )
    logdets_w = np.array([np.linalg.slogdet(s)[1] for s in post.sigma_w])
    h_w = np.sum(0.5 * c * (1.0 + LOG_2PI) + 0.5 * logdets_w)
    h_omega = np.sum(-0.5 * np.log(lam) + 0.5 * LOG_2PI + 0.5 * log_omega2 + 0.5)
    h_sigma = (
        -0.5 * v_q * logdet_sq
        + v_q * np.log(2.0)
        + multigammaln(0.5 * v_q, 2)
        + 0.5 * (v_q + 3.0) * log_sigma
        + v_q
    )
    return {
        "e_loglik": float(e_loglik),
        "e_log_prior_w": float(e_w),
        "e_log_prior_omega2": float(e_omega),
        "e_log_prior_sigma": float(e_sigma),
        "entropy_w": float(h_w),
        "entropy_omega2": float(h_omega),
        "entropy_sigma": float(h_sigma),
    }


def compute_elbo(post, dataset, spatial, hyper, taylor="standard"):
    return sum(elbo_terms(post, dataset, spatial, hyper, taylor).values())


def vb_sweep(post, dataset, spatial, hyper, config, on_step=None):
    """One coordinate-ascent pass in place: W rows, then Sigma, then eta.

    ``on_step(name)`` is called after every individual update.
    """
    for i in range(dataset.d):
        post.mu_w[i], post.sigma_w[i] = vb_update_w_row(i, post, dataset, spatial)
        if on_step is not None:
            on_step(("w", i))
    post.s_sigma = vb_update_sigma(post, dataset, spatial, hyper, config.residuals)
    if on_step is not None:
        on_step(("sigma",))
    ec = expected_c_star(post)
    for i in range(dataset.d):
        if ec[i] <= 1e-300:
            raise errors.DegenerateRow(f"E_q(c*) vanishes for row {i}")
        post.set_eta(i, np.sqrt(hyper.lambda2 / ec[i]), hyper.lambda2)
        if on_step is not None:
            on_step(("eta", i))
    return post


def run_vb(dataset, spatial, hyper, config, init):
    """Coordinate ascent until the relative ELBO change stays below epsilon
    for k consecutive sweeps, or max_iter sweeps."""
    if init.mu_w.shape != (dataset.d, dataset.c):
        raise errors.DimensionMismatch("initial variational means do not match the data")
    post = init.copy()
    post.elbo_trace = []
    prev = compute_elbo(post, dataset, spatial, hyper, config.taylor)
    post.elbo_init = prev
    passes = 0
    for _ in range(config.max_iter):
        vb_sweep(post, dataset, spatial, hyper, config)
        cur = compute_elbo(post, dataset, spatial, hyper, config.taylor)
        post.elbo_trace.append(cur)
        rel = abs(cur - prev) / max(abs(cur), 1.0)
        passes = passes + 1 if rel < config.epsilon else 0
        prev = cur
        if passes >= config.k:
            post.converged = True
            break
    if not post.converged:
        warnings.warn(
            f"variational Bayes stopped after {config.max_iter} sweeps without converging",
            errors.MaxIterExceeded,
            stacklevel=2,
        )
    return post


def posterior_state(post):
    """Point estimates for seeding the Gibbs sampler."""
    return ModelState(post.mu_w.copy(), post.sigma_mean.copy(), post.mu_omega2.copy())
