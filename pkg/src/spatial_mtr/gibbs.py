"""Gibbs sampler over (W rows, Sigma, omega2) with rho and lambda2 held fixed."""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import errors
from .model import ModelState, check_spd, pairs, residual_crossproduct, subject_loglik

DEGENERATE_TOL = 1e-300


@dataclass
class GibbsConfig:
    n_iter: int = 10000
    burn_in: int = 5000
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_iter < 1 or self.thin < 1:
            raise errors.ValidationError("n_iter and thin must be positive")
        if not 0 <= self.burn_in < self.n_iter:
            raise errors.ValidationError("burn_in must lie in [0, n_iter)")

    @property
    def n_keep(self):
        return (self.n_iter - self.burn_in) // self.thin


@dataclass
class GibbsOutput:
    w_draws: np.ndarray  # (m, d, c)
    sigma_draws: np.ndarray  # (m, 2, 2)
    omega2_draws: np.ndarray  # (m, d)
    loglik_draws: np.ndarray  # (m, n)

    @property
    def m(self):
        return self.w_draws.shape[0]

    def posterior_mean_state(self):
        return ModelState(
            self.w_draws.mean(axis=0),
            self.sigma_draws.mean(axis=0),
            self.omega2_draws.mean(axis=0),
        )


def _sigma_inverse(sigma):
    chol = check_spd(sigma, "Sigma")
    return chol, linalg.cho_solve((chol, True), np.eye(2))


def w_row_conditional(i, state, dataset, spatial):
    """Full conditional of row i: returns (mean, g) with covariance inv(g) kron Sigma.

    The conditional precision ((1/omega_i^2) I + s_i B) kron inv(Sigma) shares
    the inv(Sigma) factor between prior and likelihood because x_li is scalar,
    and the mean inv(g) B Z does not involve Sigma at all.
    """
    x_i = dataset.x[:, i]
    s_i = x_i @ x_i
    resid = dataset.y - dataset.x @ state.w + np.outer(x_i, state.w[i])
    z = pairs(x_i @ resid)
    g = np.eye(spatial.n_pairs) / state.omega2[i] + s_i * spatial.b
    check_spd(g, f"conditional precision factor of row {i}")
    mean = np.linalg.solve(g, spatial.b @ z)
    return mean.reshape(-1), g


def w_row_conditional_dense(i, state, dataset, spatial):
    """Mean vector and c x c covariance of the row-i conditional."""
    mean, g = w_row_conditional(i, state, dataset, spatial)
    return mean, np.kron(np.linalg.inv(g), state.sigma)


def update_w_row(i, state, dataset, spatial, rng):
    mean, g = w_row_conditional(i, state, dataset, spatial)
    chol_g = np.linalg.cholesky(g)
    chol_s = check_spd(state.sigma, "Sigma")
    z = rng.standard_normal((spatial.n_pairs, 2))
    noise = linalg.solve_triangular(chol_g.T, z, lower=False) @ chol_s.T
    return mean + noise.reshape(-1)


def sigma_conditional(state, dataset, spatial, hyper):
    """Inverse-Wishart parameters (S*, v*) of the Sigma full conditional.

    The residual term pairs b_ij with the cross product of pair i and pair j
    residuals.  The degrees of freedom add n c / 2 for the likelihood (the
    determinant of inv(B) kron Sigma is |inv(B)|^2 |Sigma|^(c/2)) and c d / 2
    for the coefficient prior.
    """
    n, c, d = dataset.n, dataset.c, dataset.d
    resid = dataset.y - dataset.x @ state.w
    s_lik = residual_crossproduct(resid, spatial.b)
    wp = pairs(state.w)
    s_prior = np.einsum("ija,ijb,i->ab", wp, wp, 1.0 / state.omega2)
    s_star = s_lik + s_prior + hyper.s
    s_star = 0.5 * (s_star + s_star.T)
    v_star = 0.5 * n * c + 0.5 * c * d + hyper.v
    check_spd(s_star, "S*")
    return s_star, v_star


def sample_inverse_wishart(scale, df, rng):
    """One 2 x 2 Inverse-Wishart(df, scale) draw by the Bartlett decomposition."""
    chol_prec = np.linalg.cholesky(np.linalg.inv(scale))
    a = np.zeros((2, 2))
    a[0, 0] = np.sqrt(rng.chisquare(df))
    a[1, 1] = np.sqrt(rng.chisquare(df - 1.0))
    a[1, 0] = rng.standard_normal()
    la = chol_prec @ a
    wishart = la @ la.T
    out = np.linalg.inv(wishart)
    return 0.5 * (out + out.T)


def update_sigma(state, dataset, spatial, hyper, rng):
    s_star, v_star = sigma_conditional(state, dataset, spatial, hyper)
    return sample_inverse_wishart(s_star, v_star, rng)


def sample_inverse_gaussian(mean, shape, rng, size=None):
    """Inverse-Gaussian draws by transformation with multiple roots.

    The smaller root is written in a cancellation-free form so that very
    large ``mean**2 * y / shape`` does not lose precision.
    """
    mean = np.asarray(mean, dtype=float)
    shape = np.asarray(shape, dtype=float)
    if size is None:
        size = np.broadcast(mean, shape).shape
    y = rng.standard_normal(size) ** 2
    my = mean * y
    root = mean - 2.0 * mean * my / (np.sqrt(4.0 * shape * my + my * my) + my)
    u = rng.uniform(size=size)
    return np.where(u <= mean / (mean + root), root, mean * mean / root)


def omega2_c_star(state):
    """c_i* = sum_j W~_ij^T inv(Sigma) W~_ij for every row."""
    _, sigma_inv = _sigma_inverse(state.sigma)
    wp = pairs(state.w)
    return np.einsum("ija,ab,ijb->i", wp, sigma_inv, wp)


def omega2_conditional_logpdf(omega2, state, hyper):
    """log density of each omega_i^2 under its full conditional.

    1/omega_i^2 ~ InverseGaussian(sqrt(lambda2 / c_i*), lambda2); the density
    of omega_i^2 picks up the Jacobian 1 / omega_i^4.
    """
    omega2 = np.asarray(omega2, dtype=float)
    lam = hyper.lambda2
    c_star = omega2_c_star(state)
    mu = np.sqrt(lam / c_star)
    eta = 1.0 / omega2
    log_ig = 0.5 * (np.log(lam) - np.log(2 * np.pi) - 3 * np.log(eta)) - lam * (
        eta - mu
    ) ** 2 / (2 * mu**2 * eta)
    return log_ig - 2.0 * np.log(omega2)


def update_omega2(state, hyper, rng, c=None):
    """Draw every omega_i^2 from its conditional.

    Rows with c_i* at or below 1e-300 (an all-zero coefficient row) are
    redrawn from the Gamma((c+1)/2, lambda2/2) prior, the limit of the
    conditional as c_i* goes to zero.
    """
    c = state.w.shape[1] if c is None else c
    c_star = omega2_c_star(state)
    out = np.empty_like(c_star)
    ok = c_star > DEGENERATE_TOL
    if np.any(ok):
        mu = np.sqrt(hyper.lambda2 / c_star[ok])
        out[ok] = 1.0 / sample_inverse_gaussian(mu, hyper.lambda2, rng)
    if not np.all(ok):
        out[~ok] = rng.gamma(0.5 * (c + 1), 2.0 / hyper.lambda2, size=np.sum(~ok))
    return out


class _Kernel:
    """Precomputed pieces for repeated sweeps on one dataset."""

    def __init__(self, dataset, spatial, hyper):
        self.dataset = dataset
        self.spatial = spatial
        self.hyper = hyper
        self.s = np.einsum("li,li->i", dataset.x, dataset.x)
        self.lam, self.u = spatial.eig
        self.ub = self.u * self.lam  # U diag(lam)
        self.k = spatial.n_pairs

    def sweep(self, state, rng):
        data, spatial, hyper = self.dataset, self.spatial, self.hyper
        x, w = data.x, state.w
        resid = data.y - x @ w
        chol_s = check_spd(state.sigma, "Sigma")
        for i in range(data.d):
            x_i = x[:, i]
            z = pairs(x_i @ resid + self.s[i] * w[i])
            diag = 1.0 / state.omega2[i] + self.s[i] * self.lam
            if np.any(diag <= 0):
                raise errors.NonPositiveDefinite(f"conditional precision of row {i}")
            t = self.u.T @ z
            mean = self.u @ (t * (self.lam / diag)[:, None])
            e = rng.standard_normal((self.k, 2))
            noise = self.u @ (e / np.sqrt(diag)[:, None]) @ chol_s.T
            new = (mean + noise).reshape(-1)
            resid -= np.outer(x_i, new - w[i])
            w[i] = new
        s_lik = residual_crossproduct(resid, spatial.b)
        wp = pairs(w)
        s_star = s_lik + np.einsum("ija,ijb,i->ab", wp, wp, 1.0 / state.omega2) + hyper.s
        s_star = 0.5 * (s_star + s_star.T)
        check_spd(s_star, "S*")
        v_star = 0.5 * data.n * data.c + 0.5 * data.c * data.d + hyper.v
        state.sigma = sample_inverse_wishart(s_star, v_star, rng)
        state.omega2 = update_omega2(state, hyper, rng, c=data.c)
        return resid


def gibbs_sweep(state, dataset, spatial, hyper, rng):
    """One full sweep (W rows ascending, Sigma, omega2); returns a new state."""
    new = state.copy()
    _Kernel(dataset, spatial, hyper).sweep(new, rng)
    return new


def run_gibbs(dataset, spatial, hyper, config, init):
    if init.w.shape != (dataset.d, dataset.c):
        raise errors.DimensionMismatch("initial W does not match the data")
    check_spd(init.sigma, "initial Sigma")
    if np.any(init.omega2 <= 0):
        raise errors.ValidationError("initial omega2 must be positive")
    rng = np.random.default_rng(config.seed)
    kernel = _Kernel(dataset, spatial, hyper)
    state = init.copy()
    m = config.n_keep
    w_draws = np.empty((m, dataset.d, dataset.c))
    sigma_draws = np.empty((m, 2, 2))
    omega2_draws = np.empty((m, dataset.d))
    loglik_draws = np.empty((m, dataset.n))
    kept = 0
    for t in range(config.n_iter):
        try:
            resid = kernel.sweep(state, rng)
        except errors.NumericalError as exc:
            exc.sweep = t
            exc.args = (f"sweep {t}: {exc.args[0] if exc.args else exc}",)
            raise
        post = t - config.burn_in
        if post >= 0 and (post + 1) % config.thin == 0 and kept < m:
            w_draws[kept] = state.w
            sigma_draws[kept] = state.sigma
            omega2_draws[kept] = state.omega2
            loglik_draws[kept] = subject_loglik(resid, spatial, state.sigma)
            kept += 1
    return GibbsOutput(w_draws, sigma_draws, omega2_draws, loglik_draws)
