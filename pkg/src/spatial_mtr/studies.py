"""Simulation studies: estimation accuracy, empirical FDR, and WAIC direction.

Each study fixes a genotype matrix and a true coefficient matrix from the
master seed, then redraws the BCAR errors in every replicate.  Replicate
seeds come from ``SeedSequence.spawn`` so results do not depend on the order
in which replicates finish.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .gibbs import GibbsConfig
from .io import standardize_phenotypes
from .model import (
    Dataset,
    Hyperparameters,
    build_spatial_structure,
    independent_structure,
    sigma_from_kappa,
    simulate_dataset,
    simulate_genotypes,
)
from .selection import credible_intervals, fdr_threshold, posterior_sd, tail_probabilities
from .tuning import waic
from .vb import VBConfig
from .workflow import fit_gibbs, fit_vb, gibbs_init, make_hyper, parallel_map, spawn_seeds

DEFAULT_C_STAR_GRID = (0.002, 0.004, 0.008, 0.016, 0.03, 0.06, 0.12, 0.25, 0.5, 1.0, 2.0)


def complete_graph(k):
    """Unit weights between every pair of ROIs."""
    return np.ones((k, k)) - np.eye(k)


@dataclass
class StudyDesign:
    n: int = 100
    c: int = 6
    d: int = 30
    replicates: int = 50
    rho_true: float = 0.8
    kappa: float = 0.8
    sigma_scale: float = 1.0
    gibbs_iter: int = 3000
    gibbs_burn_in: int = 1000
    thin: int = 1
    rho_vb: float = 0.95
    alpha: float = 0.05
    level: float = 0.95
    seed: int = 0

    def neighborhood(self):
        return complete_graph(self.c // 2)

    def sigma(self):
        return sigma_from_kappa(self.kappa, self.sigma_scale)

    def gibbs_config(self, seed):
        return GibbsConfig(self.gibbs_iter, self.gibbs_burn_in, self.thin, seed)

    def genotypes(self, rng):
        # centered so that standardized phenotypes need no intercept
        x = simulate_genotypes(self.n, self.d, rng)
        return x - x.mean(axis=0)


@dataclass
class StudyIConfig(StudyDesign):
    lambda2_true: float = 700.0
    # "true" fits Gibbs with the generating lambda2; "moment" uses the estimator
    lambda2_gibbs: str = "true"
    rho_gibbs: float = None  # defaults to rho_true


@dataclass
class StudyIIConfig(StudyDesign):
    rho_fit: float = 0.95  # shared by both solvers
    layout: tuple = ((3, 1.0), (2, 2.0), (1, 3.0))  # (rows, value) blocks
    c_star_grid: tuple = DEFAULT_C_STAR_GRID


@dataclass
class WaicStudyConfig(StudyDesign):
    gibbs_iter: int = 1500
    gibbs_burn_in: int = 500


def prior_like_truth(cfg, rng):
    """Rows drawn as a bivariate Gaussian scale mixture at lambda2_true."""
    omega2 = rng.gamma(0.5 * (cfg.c + 1), 2.0 / cfg.lambda2_true, cfg.d)
    chol = np.linalg.cholesky(cfg.sigma())
    z = rng.standard_normal((cfg.d, cfg.c // 2, 2)) @ chol.T
    return (z * np.sqrt(omega2)[:, None, None]).reshape(cfg.d, cfg.c)


def _sparse_truth(cfg):
    w = np.zeros((cfg.d, cfg.c))
    row = 0
    for count, value in cfg.layout:
        w[row : row + count] = value
        row += count
    return w


def _fixed_design(cfg, truth):
    seeds = spawn_seeds(cfg.seed, 2)
    rng = np.random.default_rng(seeds[0])
    x = cfg.genotypes(rng)
    w = truth(rng)
    return x, w, seeds[1]


# Study I


def _study1_replicate(args):
    cfg, x, w, seed = args
    s_data, s_gibbs, s_base, s_cv = spawn_seeds(seed, 4)
    a = cfg.neighborhood()
    truth_spatial = build_spatial_structure(a, cfg.rho_true)
    ds = simulate_dataset(w, cfg.sigma(), truth_spatial, x, s_data)
    hyper_vb, ridge = make_hyper(ds, "moment", ridge_seed=s_cv)
    if cfg.lambda2_gibbs == "true":
        hyper = Hyperparameters(cfg.lambda2_true)
    elif cfg.lambda2_gibbs == "moment":
        hyper = hyper_vb
    else:
        hyper = Hyperparameters(float(cfg.lambda2_gibbs))
    rho_gibbs = cfg.rho_true if cfg.rho_gibbs is None else cfg.rho_gibbs
    vb_post = fit_vb(ds, build_spatial_structure(a, cfg.rho_vb), hyper_vb, ridge, VBConfig())
    spatial = fit_gibbs(
        ds,
        build_spatial_structure(a, rho_gibbs),
        hyper,
        cfg.gibbs_config(s_gibbs),
        gibbs_init(ds, hyper, vb_post=vb_post),
    )
    base = fit_gibbs(
        ds,
        independent_structure(cfg.c // 2),
        hyper,
        cfg.gibbs_config(s_base),
        gibbs_init(ds, hyper, ridge=ridge),
    )
    out = {}
    for name, post in (("spatial_mcmc", spatial.w_draws), ("baseline_mcmc", base.w_draws), ("spatial_vb", vb_post)):
        lo, hi, mean = credible_intervals(post, cfg.level)
        out[name] = {
            "mean": mean,
            "mse": float(np.mean((mean - w) ** 2)),
            "corr": float(np.corrcoef(mean.ravel(), w.ravel())[0, 1]),
            "coverage": float(np.mean((lo <= w) & (w <= hi))),
            "post_sd": float(np.mean(posterior_sd(post))),
        }
    out["vb_sweeps"] = len(vb_post.elbo_trace)
    return out


@dataclass
class StudyIReport:
    table: dict  # method -> {mse, corr, bias2, coverage, post_sd}
    per_replicate: dict  # method -> {mse: [...], coverage: [...], ...}
    frac_spatial_beats_baseline: float
    config: dict = field(default_factory=dict)

    def to_rows(self):
        cols = ("mse", "corr", "bias2", "coverage", "post_sd")
        return [(m,) + tuple(self.table[m][k] for k in cols) for m in self.table]


def run_sim_study_1(cfg=None, workers=None):
    cfg = StudyIConfig() if cfg is None else cfg
    x, w, rep_seed = _fixed_design(cfg, lambda rng: prior_like_truth(cfg, rng))
    seeds = spawn_seeds(rep_seed, cfg.replicates)
    results = parallel_map(_study1_replicate, [(cfg, x, w, s) for s in seeds], workers)
    methods = ("spatial_mcmc", "baseline_mcmc", "spatial_vb")
    table, per = {}, {}
    for m in methods:
        reps = [r[m] for r in results]
        mean_est = np.mean([r["mean"] for r in reps], axis=0)
        per[m] = {k: [r[k] for r in reps] for k in ("mse", "corr", "coverage", "post_sd")}
        table[m] = {
            "mse": float(np.mean(per[m]["mse"])),
            "corr": float(np.mean(per[m]["corr"])),
            "bias2": float(np.mean((mean_est - w) ** 2)),
            "coverage": float(np.mean(per[m]["coverage"])),
            "post_sd": float(np.mean(per[m]["post_sd"])),
        }
    better = np.mean(np.array(per["spatial_mcmc"]["mse"]) < np.array(per["baseline_mcmc"]["mse"]))
    per["vb_sweeps"] = [r["vb_sweeps"] for r in results]
    return StudyIReport(table, per, float(better), asdict(cfg))


# Study II


def _false_discovery_proportion(selected, null):
    return float(np.sum(selected & null) / max(int(np.sum(selected)), 1))


def _study2_replicate(args):
    cfg, x, w, seed = args
    s_data, s_gibbs, s_cv = spawn_seeds(seed, 3)
    a = cfg.neighborhood()
    raw = simulate_dataset(w, cfg.sigma(), build_spatial_structure(a, cfg.rho_true), x, s_data)
    y_std, _, sds = standardize_phenotypes(raw.y)
    ds = Dataset(y_std, x)
    hyper, ridge = make_hyper(ds, "moment", ridge_seed=s_cv)
    spatial = build_spatial_structure(a, cfg.rho_fit)
    vb_post = fit_vb(ds, spatial, hyper, ridge, VBConfig())
    chain = fit_gibbs(ds, spatial, hyper, cfg.gibbs_config(s_gibbs), gibbs_init(ds, hyper, vb_post=vb_post))
    null = w == 0
    fdp = {"mcmc": [], "vb": []}
    count = {"mcmc": [], "vb": []}
    for name, post in (("mcmc", chain.w_draws), ("vb", vb_post)):
        for c_star in cfg.c_star_grid:
            sel = fdr_threshold(tail_probabilities(post, c_star), cfg.alpha).selected
            fdp[name].append(_false_discovery_proportion(sel, null))
            count[name].append(int(sel.sum()))
    return {"fdp": fdp, "count": count, "max_std_effect": float(np.max(np.abs(w) / sds))}


@dataclass
class StudyIIReport:
    c_star_grid: list
    fdr: dict  # solver -> mean empirical FDR per grid point
    n_selected: dict  # solver -> mean selection count per grid point
    max_std_effect: float  # largest standardized true effect over replicates
    config: dict = field(default_factory=dict)

    def to_rows(self):
        return [
            (c, self.fdr["mcmc"][k], self.fdr["vb"][k], self.n_selected["mcmc"][k], self.n_selected["vb"][k])
            for k, c in enumerate(self.c_star_grid)
        ]

    def intermediate(self):
        """Grid indices where some solver's mean FDR lies strictly inside (0, 1)."""
        f = np.array([self.fdr["mcmc"], self.fdr["vb"]])
        return [k for k in range(f.shape[1]) if np.any((f[:, k] > 0) & (f[:, k] < 1))]


def run_sim_study_2(cfg=None, workers=None):
    cfg = StudyIIConfig() if cfg is None else cfg
    x, w, rep_seed = _fixed_design(cfg, lambda rng: _sparse_truth(cfg))
    seeds = spawn_seeds(rep_seed, cfg.replicates)
    results = parallel_map(_study2_replicate, [(cfg, x, w, s) for s in seeds], workers)
    fdr = {k: np.mean([r["fdp"][k] for r in results], axis=0).tolist() for k in ("mcmc", "vb")}
    counts = {k: np.mean([r["count"][k] for r in results], axis=0).tolist() for k in ("mcmc", "vb")}
    max_eff = max(r["max_std_effect"] for r in results)
    return StudyIIReport(list(cfg.c_star_grid), fdr, counts, max_eff, asdict(cfg))


# WAIC direction


def _waic_replicate(args):
    cfg, x, w, seed = args
    s_data, s_spatial, s_base, s_cv = spawn_seeds(seed, 4)
    a = cfg.neighborhood()
    truth = build_spatial_structure(a, cfg.rho_true)
    ds = simulate_dataset(w, cfg.sigma(), truth, x, s_data)
    hyper, ridge = make_hyper(ds, "moment", ridge_seed=s_cv)
    init = gibbs_init(ds, hyper, ridge=ridge)
    fit = fit_gibbs(ds, build_spatial_structure(a, cfg.rho_true), hyper, cfg.gibbs_config(s_spatial), init)
    base = fit_gibbs(ds, independent_structure(cfg.c // 2), hyper, cfg.gibbs_config(s_base), init)
    return waic(fit.loglik_draws).waic, waic(base.loglik_draws).waic


@dataclass
class WaicStudyReport:
    waic_spatial: list
    waic_baseline: list
    frac_spatial_better: float
    config: dict = field(default_factory=dict)


def run_waic_study(cfg=None, workers=None, lambda2_true=700.0):
    cfg = WaicStudyConfig() if cfg is None else cfg
    truth_cfg = StudyIConfig(**{**asdict(cfg), "lambda2_true": lambda2_true})
    x, w, rep_seed = _fixed_design(cfg, lambda rng: prior_like_truth(truth_cfg, rng))
    seeds = spawn_seeds(rep_seed, cfg.replicates)
    pairs = parallel_map(_waic_replicate, [(cfg, x, w, s) for s in seeds], workers)
    sp = [p[0] for p in pairs]
    bs = [p[1] for p in pairs]
    return WaicStudyReport(sp, bs, float(np.mean(np.array(sp) < np.array(bs))), asdict(cfg))
