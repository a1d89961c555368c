"""Model core: data containers, the BCAR error structure, the joint density,
and forward simulation.

Phenotype columns come in (left, right) pairs, so a length-c vector is
handled as a (c/2, 2) matrix whose row j holds pair j.  With that row-major
layout the error precision ``B kron inv(Sigma)`` acts on a pair matrix E as
``B @ E @ inv(Sigma)``, which is how every routine here avoids forming c x c
matrices.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg
from scipy.special import gammaln, multigammaln

from . import errors

LOG_2PI = np.log(2.0 * np.pi)


def check_spd(m, name="matrix", rtol=1e-12):
    """Lower Cholesky factor of ``m``; raises NonPositiveDefinite on failure.

    A factorization whose smallest squared pivot is below ``rtol`` times the
    largest diagonal entry is treated as a failure too.
    """
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise errors.NonPositiveDefinite(f"{name} has non-finite entries")
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise errors.NonPositiveDefinite(f"{name} is not positive definite") from None
    scale = np.max(np.abs(np.diag(m)))
    if np.min(np.diag(chol)) ** 2 <= rtol * scale:
        raise errors.NonPositiveDefinite(f"{name} is numerically singular")
    return chol


def pairs(v):
    """View the trailing axis of length c as (c/2, 2)."""
    v = np.asarray(v)
    return v.reshape(v.shape[:-1] + (v.shape[-1] // 2, 2))


@dataclass
class Dataset:
    y: np.ndarray
    x: np.ndarray
    snp_names: list = None
    phenotype_names: list = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        if self.y.ndim != 2 or self.x.ndim != 2:
            raise errors.DimensionMismatch("y and x must be two-dimensional")
        if self.y.shape[1] % 2:
            raise errors.OddPhenotypeCount(
                f"phenotypes must come in left/right pairs, got c={self.y.shape[1]}"
            )
        if self.y.shape[0] != self.x.shape[0]:
            raise errors.SubjectCountMismatch(
                f"y has {self.y.shape[0]} subjects but x has {self.x.shape[0]}"
            )
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.x))):
            raise errors.NonFiniteValue("y and x must be finite")
        if self.snp_names is None:
            self.snp_names = [f"snp{i + 1}" for i in range(self.d)]
        if self.phenotype_names is None:
            self.phenotype_names = [
                f"roi{j // 2 + 1}_{'LR'[j % 2]}" for j in range(self.c)
            ]

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def c(self):
        return self.y.shape[1]

    @property
    def d(self):
        return self.x.shape[1]


@dataclass(frozen=True)
class SpatialStructure:
    """Neighborhood matrix ``a``, dependence ``rho`` and ``b = d_a - rho a``."""

    a: np.ndarray
    rho: float
    d_a: np.ndarray
    b: np.ndarray

    @property
    def n_pairs(self):
        return self.b.shape[0]

    @cached_property
    def chol(self):
        return check_spd(self.b, "spatial precision B")

    @cached_property
    def logdet(self):
        return 2.0 * np.sum(np.log(np.diag(self.chol)))

    @cached_property
    def eig(self):
        vals, vecs = np.linalg.eigh(self.b)
        return vals, vecs

    @cached_property
    def cov_factor(self):
        """Upper-triangular F with F @ F.T == inv(B)."""
        return linalg.solve_triangular(
            self.chol.T, np.eye(self.n_pairs), lower=False
        )


def build_spatial_structure(a, rho):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise errors.NeighborhoodShapeMismatch(f"A must be square, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise errors.NonFiniteValue("A has non-finite entries")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12):
        raise errors.NonSymmetricNeighborhood("A must be symmetric")
    if np.any(a < 0) or np.any(np.diag(a) != 0):
        raise errors.NonSymmetricNeighborhood(
            "A must be nonnegative with a zero diagonal"
        )
    if not 0.0 <= rho < 1.0:
        raise errors.RhoOutOfRange(f"rho must lie in [0, 1), got {rho}")
    rowsum = a.sum(axis=1)
    if np.any(rowsum <= 0):
        bad = np.flatnonzero(rowsum <= 0).tolist()
        raise errors.ZeroRowSum(f"A has zero row sums at pairs {bad}")
    d_a = np.diag(rowsum)
    b = d_a - rho * a
    structure = SpatialStructure(a=a, rho=float(rho), d_a=d_a, b=b)
    structure.chol  # validates B
    if structure.eig[0][0] <= 0:
        raise errors.NonPositiveDefinite("B has a nonpositive eigenvalue")
    return structure


def independent_structure(n_pairs):
    """B = I: pairs independent with unit spatial scale.

    This is the rho = 0 baseline used for model comparison.  It is built
    directly rather than through a neighborhood matrix because an all-zero
    A has zero row sums.
    """
    eye = np.eye(n_pairs)
    return SpatialStructure(a=np.zeros((n_pairs, n_pairs)), rho=0.0, d_a=eye, b=eye)


def default_neighborhood(y):
    """Average absolute left/right sample correlation between ROI pairs."""
    y = np.asarray(y, dtype=float)
    if y.shape[0] < 3:
        raise errors.ValidationError("need at least 3 subjects to estimate A")
    if y.shape[1] % 2:
        raise errors.OddPhenotypeCount("phenotypes must come in left/right pairs")
    sd = y.std(axis=0, ddof=1)
    if np.any(sd == 0):
        raise errors.ConstantColumn(
            f"constant phenotype columns: {np.flatnonzero(sd == 0).tolist()}"
        )
    k = y.shape[1] // 2
    if k == 1:
        return np.zeros((1, 1))
    left = np.corrcoef(y[:, 0::2], rowvar=False)
    right = np.corrcoef(y[:, 1::2], rowvar=False)
    a = 0.5 * (np.abs(left) + np.abs(right))
    a = 0.5 * (a + a.T)
    np.fill_diagonal(a, 0.0)
    return a


@dataclass
class ModelState:
    w: np.ndarray
    sigma: np.ndarray
    omega2: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.omega2 = np.asarray(self.omega2, dtype=float)
        if self.sigma.shape != (2, 2):
            raise errors.DimensionMismatch("sigma must be 2 x 2")
        if self.w.ndim != 2 or self.omega2.shape != (self.w.shape[0],):
            raise errors.DimensionMismatch("omega2 must have one entry per W row")

    def copy(self):
        return ModelState(self.w.copy(), self.sigma.copy(), self.omega2.copy())

    @property
    def kappa(self):
        s = self.sigma
        return s[0, 1] / np.sqrt(s[0, 0] * s[1, 1])


@dataclass
class Hyperparameters:
    lambda2: float
    v: float = 2.0
    s: np.ndarray = field(default_factory=lambda: np.eye(2))

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        if not self.lambda2 > 0:
            raise errors.ValidationError(f"lambda2 must be positive, got {self.lambda2}")
        if not self.v > 1:
            raise errors.ValidationError(f"v must exceed 1, got {self.v}")
        check_spd(self.s, "Inverse-Wishart scale S")


def _check_dims(dataset, state, spatial):
    if state.w.shape != (dataset.d, dataset.c):
        raise errors.DimensionMismatch(
            f"W has shape {state.w.shape}, expected {(dataset.d, dataset.c)}"
        )
    if spatial.n_pairs != dataset.c // 2:
        raise errors.NeighborhoodShapeMismatch(
            f"B has {spatial.n_pairs} pairs, data has {dataset.c // 2}"
        )


def residual_crossproduct(resid, b):
    """sum over subjects of E_l^T B E_l, with E_l the (c/2, 2) residual pairs."""
    rp = pairs(resid)
    return np.einsum("lia,ij,ljb->ab", rp, b, rp)


def subject_loglik(resid, spatial, sigma):
    """log MVN(y_l; W^T x_l, inv(B) kron Sigma) for every subject, from residuals."""
    c = resid.shape[1]
    chol_s = check_spd(sigma, "Sigma")
    logdet_s = 2.0 * np.sum(np.log(np.diag(chol_s)))
    sigma_inv = linalg.cho_solve((chol_s, True), np.eye(2))
    rp = pairs(resid)
    brp = np.einsum("ij,ljb->lib", spatial.b, rp)
    quad = np.einsum("lia,ab,lib->l", rp, sigma_inv, brp)
    return -0.5 * c * LOG_2PI + spatial.logdet - 0.25 * c * logdet_s - 0.5 * quad


def log_inverse_wishart(sigma, v, s):
    """Inverse-Wishart(v, S) log density of a 2 x 2 matrix."""
    chol = check_spd(sigma, "Sigma")
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    _, logdet_s = np.linalg.slogdet(s)
    tr = np.trace(linalg.cho_solve((chol, True), s))
    return (
        0.5 * v * logdet_s
        - v * np.log(2.0)
        - multigammaln(0.5 * v, 2)
        - 0.5 * (v + 3.0) * logdet
        - 0.5 * tr
    )


def log_joint_terms(dataset, state, spatial, hyper):
    """The four additive pieces of the log joint density.

    No constants are dropped: every piece is a normalized log density, so
    the sum is comparable across rho and lambda2 as well as across
    parameter values.
    """
    _check_dims(dataset, state, spatial)
    if np.any(state.omega2 <= 0):
        raise errors.ValidationError("omega2 must be strictly positive")
    c = dataset.c
    chol_s = check_spd(state.sigma, "Sigma")
    logdet_s = 2.0 * np.sum(np.log(np.diag(chol_s)))
    sigma_inv = linalg.cho_solve((chol_s, True), np.eye(2))

    resid = dataset.y - dataset.x @ state.w
    loglik = subject_loglik(resid, spatial, state.sigma).sum()

    wp = pairs(state.w)
    quad = np.einsum("ija,ab,ijb->i", wp, sigma_inv, wp)
    log_w = np.sum(
        -0.5 * c * LOG_2PI
        - 0.5 * c * np.log(state.omega2)
        - 0.25 * c * logdet_s
        - 0.5 * quad / state.omega2
    )

    shape, rate = 0.5 * (c + 1), 0.5 * hyper.lambda2
    log_omega = np.sum(
        shape * np.log(rate)
        - gammaln(shape)
        + (shape - 1.0) * np.log(state.omega2)
        - rate * state.omega2
    )
    log_sigma = log_inverse_wishart(state.sigma, hyper.v, hyper.s)
    return {
        "loglik": float(loglik),
        "log_prior_w": float(log_w),
        "log_prior_omega2": float(log_omega),
        "log_prior_sigma": float(log_sigma),
    }


def log_joint(dataset, state, spatial, hyper):
    """log p(Y, W, omega2, Sigma | rho, lambda2) with all constants kept."""
    return sum(log_joint_terms(dataset, state, spatial, hyper).values())


def sample_errors(n, spatial, sigma, rng):
    """n draws of MVN_c(0, inv(B) kron Sigma) via chol(inv(B)) kron chol(Sigma)."""
    chol_s = check_spd(sigma, "Sigma")
    z = rng.standard_normal((n, spatial.n_pairs, 2))
    eps = np.einsum("ij,ljb,ab->lia", spatial.cov_factor, z, chol_s)
    return eps.reshape(n, -1)


def simulate_dataset(w_true, sigma, spatial, x, seed):
    w_true = np.asarray(w_true, dtype=float)
    x = np.asarray(x, dtype=float)
    if w_true.shape[0] != x.shape[1] or w_true.shape[1] != 2 * spatial.n_pairs:
        raise errors.DimensionMismatch("w_true, x and spatial structure disagree")
    rng = np.random.default_rng(seed)
    eps = sample_errors(x.shape[0], spatial, sigma, rng)
    return Dataset(y=x @ w_true + eps, x=x.copy())


def simulate_genotypes(n, d, rng, maf=(0.05, 0.5)):
    """Minor-allele counts in {0, 1, 2} under Hardy-Weinberg equilibrium."""
    freq = rng.uniform(maf[0], maf[1], size=d)
    return rng.binomial(2, freq, size=(n, d)).astype(float)


def sigma_from_kappa(kappa, scale=1.0):
    return scale * np.array([[1.0, kappa], [kappa, 1.0]])
