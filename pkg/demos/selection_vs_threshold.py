"""
How the effect-size threshold drives Bayesian FDR selection
===========================================================

Selection counts fall as c* grows.  The variational posterior is narrower
than the Gibbs posterior, so it tends to select more pairs at the same c*.
"""

import numpy as np

from spatial_mtr.gibbs import GibbsConfig
from spatial_mtr.model import Dataset, build_spatial_structure, sigma_from_kappa, simulate_dataset
from spatial_mtr.selection import fdr_threshold, tail_probabilities
from spatial_mtr.studies import complete_graph
from spatial_mtr.vb import VBConfig
from spatial_mtr.workflow import fit_gibbs, fit_vb, gibbs_init, make_hyper

rng = np.random.default_rng(5)
n, c, d = 300, 6, 30
a = complete_graph(3)
x = rng.binomial(2, 0.25, (n, d)).astype(float)
x -= x.mean(axis=0)
w_true = np.zeros((d, c))
w_true[:6] = 0.3

data = simulate_dataset(w_true, sigma_from_kappa(0.8), build_spatial_structure(a, 0.8), x, seed=6)
data = Dataset((data.y - data.y.mean(0)) / data.y.std(0, ddof=1), x)
hyper, ridge = make_hyper(data)
spatial = build_spatial_structure(a, 0.95)
post = fit_vb(data, spatial, hyper, ridge, VBConfig())
chain = fit_gibbs(data, spatial, hyper, GibbsConfig(3000, 1000, 1, 7), gibbs_init(data, hyper, vb_post=post))

print(" c*      VB  Gibbs  (true nonzero pairs: 36)")
for c_star in (0.005, 0.01, 0.02, 0.044, 0.08, 0.15, 0.3):
    counts = [fdr_threshold(tail_probabilities(s, c_star), 0.05).selected.sum() for s in (post, chain.w_draws)]
    print(f"{c_star:6.3f} {counts[0]:5d} {counts[1]:6d}")
