"""Command line front end.

Subcommands: fit, simulate, sim-study-1, sim-study-2, waic-study, tune.  Every option can
also come from a flat ``key = value`` file given with ``--config``; explicit
flags win over the file, which wins over built-in defaults.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 file-system error.
"""

import argparse
import os
import platform
import sys
import time
import warnings
from dataclasses import asdict

import numpy as np
import scipy

from . import __version__, errors, io
from .diagnostics import chain_table
from .gibbs import GibbsConfig
from .model import (
    Dataset,
    Hyperparameters,
    build_spatial_structure,
    default_neighborhood,
    independent_structure,
    sigma_from_kappa,
    simulate_dataset,
    simulate_genotypes,
)
from .selection import credible_intervals, fdr_threshold, posterior_sd, tail_probabilities
from .studies import (
    DEFAULT_C_STAR_GRID,
    StudyIConfig,
    StudyIIConfig,
    WaicStudyConfig,
    complete_graph,
    prior_like_truth,
    run_sim_study_1,
    run_sim_study_2,
    run_waic_study,
)
from .tuning import DEFAULT_RHO_GRID, select_lambda2_by_waic, select_rho_by_waic, waic
from .vb import VBConfig
from .workflow import fit_gibbs, fit_vb, gibbs_init, make_hyper, spawn_seeds

PATH_FACTORS = (0.1, 0.3, 1.0, 3.0, 10.0)


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _lambda2(text):
    if str(text).strip() == "moment":
        return "moment"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"lambda2 must be a number or 'moment', got {text!r}")
    return value


def _rho(text):
    if str(text).strip() == "waic":
        return "waic"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"rho must be a number or 'waic', got {text!r}")


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise errors.ConfigError(f"{self.prog}: {message}")


def _data_args(p):
    p.add_argument("--y", required=True, help="phenotype CSV, n x c, left/right columns adjacent")
    p.add_argument("--x", required=True, help="genotype CSV, n x d minor-allele counts")
    p.add_argument("--a", help="neighborhood CSV, c/2 x c/2 (default: from phenotype correlations)")
    p.add_argument("--confounders", help="CSV of covariates regressed out of y before fitting")
    p.add_argument("--header", type=_bool, nargs="?", const=True, default=False,
                   help="input files carry a single header row of names")


def _common_args(p):
    p.add_argument("--config", help="flat key = value file of option defaults")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=0)


def _chain_args(p, iters=10000, burnin=5000):
    p.add_argument("--iters", type=int, default=iters)
    p.add_argument("--burnin", type=int, default=burnin)
    p.add_argument("--thin", type=int, default=1)


def _hyper_args(p):
    p.add_argument("--lambda2", type=_lambda2, default="moment")
    p.add_argument("--v", type=float, default=2.0, help="Inverse-Wishart degrees of freedom")
    p.add_argument("--cv-folds", type=int, default=5)


def build_parser():
    parser = _Parser(prog="spatial-mtr", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="fit the model to data files")
    _common_args(fit)
    _data_args(fit)
    _chain_args(fit)
    _hyper_args(fit)
    fit.add_argument("--mode", choices=("gibbs", "vb"), default="gibbs")
    fit.add_argument("--rho", type=_rho, default=None,
                     help="spatial dependence, or 'waic' (default: 0.95 for vb, waic for gibbs)")
    fit.add_argument("--rho-grid", type=_float_list, default=list(DEFAULT_RHO_GRID))
    fit.add_argument("--alpha", type=float, default=0.05)
    fit.add_argument("--c-star", type=float, default=0.044)
    fit.add_argument("--level", type=float, default=0.95)
    fit.add_argument("--epsilon", type=float, default=1e-4)
    fit.add_argument("--k", type=int, default=2)
    fit.add_argument("--max-iter", type=int, default=500)
    fit.add_argument("--vb-mean-field-residuals", choices=("exact", "plug-in"), default="exact")
    fit.add_argument("--lambda2-path", type=_float_list, default=None,
                     help="lambda2 values for the selection-count and regularization-path files "
                          "(default: the fitted lambda2 times 0.1, 0.3, 1, 3, 10)")

    sim = sub.add_parser("simulate", help="draw a dataset from the spatial model")
    _common_args(sim)
    sim.add_argument("--n", type=int, default=100)
    sim.add_argument("--c", type=int, default=6)
    sim.add_argument("--d", type=int, default=30)
    sim.add_argument("--rho", type=float, default=0.8)
    sim.add_argument("--kappa", type=float, default=0.8)
    sim.add_argument("--lambda2-true", type=float, default=700.0)

    for name, helptext in (("sim-study-1", "estimation accuracy and coverage study"),
                           ("sim-study-2", "empirical FDR study"),
                           ("waic-study", "WAIC of spatial fit versus independence baseline")):
        s = sub.add_parser(name, help=helptext)
        _common_args(s)
        s.add_argument("--replicates", type=int, default=50)
        s.add_argument("--n", type=int, default=100)
        s.add_argument("--c", type=int, default=6)
        s.add_argument("--d", type=int, default=30)
        s.add_argument("--rho-true", type=float, default=0.8)
        s.add_argument("--kappa", type=float, default=0.8)
        _chain_args(s, iters=1500 if name == "waic-study" else 3000,
                    burnin=500 if name == "waic-study" else 1000)
        s.add_argument("--alpha", type=float, default=0.05)
        if name == "sim-study-1":
            s.add_argument("--lambda2-true", type=float, default=700.0)
            s.add_argument("--lambda2-gibbs", default="true", help="'true', 'moment' or a number")
            s.add_argument("--rho-vb", type=float, default=0.95)
        if name == "sim-study-2":
            s.add_argument("--rho-fit", type=float, default=0.95)
            s.add_argument("--c-star-grid", type=_float_list, default=list(DEFAULT_C_STAR_GRID))

    tune = sub.add_parser("tune", help="choose rho (and optionally lambda2) by WAIC")
    _common_args(tune)
    _data_args(tune)
    _chain_args(tune, iters=3000, burnin=1000)
    _hyper_args(tune)
    tune.add_argument("--rho-grid", type=_float_list, default=list(DEFAULT_RHO_GRID))
    tune.add_argument("--lambda2-grid", type=_float_list, default=None)
    tune.add_argument("--waic", type=_bool, nargs="?", const=True, default=True,
                      help="rank grid points by WAIC (the only criterion offered)")
    return parser


def parse_args(argv):
    """Parse with precedence command line > config file > defaults."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        values = io.parse_config_file(args.config)
        subparser = _subparser(parser, args.command)
        known = {a.dest for a in subparser._actions}
        unknown = sorted(set(values) - known - {"config"})
        if unknown:
            raise errors.ConfigError(f"unknown config keys: {', '.join(unknown)}")
        values.pop("config", None)
        subparser.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise errors.ConfigError(f"unknown command {command}")


def _load_dataset(args):
    y, y_names = io.load_matrix(args.y, header=args.header)
    x, x_names = io.load_matrix(args.x, header=args.header)
    if y.shape[1] % 2:
        raise errors.OddPhenotypeCount(f"{args.y}: phenotypes must come in pairs, got c={y.shape[1]}")
    if x.shape[0] != y.shape[0]:
        raise errors.SubjectCountMismatch(f"{args.x} has {x.shape[0]} rows but {args.y} has {y.shape[0]}")
    if getattr(args, "confounders", None):
        z, _ = io.load_matrix(args.confounders, (y.shape[0], None), header=args.header)
        y = io.residualize(y, z)
    y_std, means, sds = io.standardize_phenotypes(y)
    ds = Dataset(y_std, x, x_names, y_names)
    if args.a:
        a, _ = io.load_matrix(args.a, header=args.header)
        if a.shape != (ds.c // 2, ds.c // 2):
            raise errors.NeighborhoodShapeMismatch(
                f"{args.a}: shape {a.shape}, expected {(ds.c // 2, ds.c // 2)} for c={ds.c}")
    else:
        a = default_neighborhood(y_std)
    return ds, a, means, sds


def _spatial(a, rho):
    if a.shape == (1, 1) and a[0, 0] == 0:
        # a single ROI pair has no neighbours; B reduces to a scalar and is set to 1
        return independent_structure(1)
    return build_spatial_structure(a, rho)


def _gibbs_config(args, seed):
    return GibbsConfig(args.iters, args.burnin, args.thin, seed)


def _vb_config(args, seed):
    return VBConfig(args.epsilon, args.k, args.max_iter, seed, args.vb_mean_field_residuals)


def _summary(ds, posterior, tail, selection, level, sds):
    lo, hi, mean = credible_intervals(posterior, level)
    return io.SummaryTable(
        list(ds.snp_names), list(ds.phenotype_names), mean, posterior_sd(posterior),
        lo, hi, tail.p, selection.selected, sds,
    )


def _lambda2_path(ds, spatial, hyper, ridge, args, seed, lambdas):
    counts, path = [], []
    for lam in lambdas:
        h = Hyperparameters(float(lam), hyper.v, hyper.s)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", errors.MaxIterExceeded)
            post = fit_vb(ds, spatial, h, ridge, _vb_config(args, seed))
        sel = fdr_threshold(tail_probabilities(post, args.c_star), args.alpha)
        counts.append((float(lam), args.c_star, int(sel.selected.sum())))
        for i in range(ds.d):
            for j in range(ds.c):
                path.append((ds.snp_names[i], ds.phenotype_names[j], float(lam), float(post.mu_w[i, j])))
    return counts, path


def cmd_fit(args):
    ds, a, means, sds = _load_dataset(args)
    s_cv, s_vb, s_gibbs = spawn_seeds(args.seed, 3)
    hyper, ridge = make_hyper(ds, args.lambda2, args.v, ridge_seed=s_cv, cv_folds=args.cv_folds)
    rho = args.rho if args.rho is not None else (0.95 if args.mode == "vb" else "waic")
    report = {"mode": args.mode, "lambda2": hyper.lambda2, "n": ds.n, "c": ds.c, "d": ds.d,
              "ridge_penalties": ridge.ridge_penalties}
    if rho == "waic" and args.mode == "vb":
        raise errors.ConfigError("rho = waic needs posterior draws; use --mode gibbs")
    vb_rho = 0.95 if rho == "waic" else rho
    vb_post = fit_vb(ds, _spatial(a, vb_rho), hyper, ridge, _vb_config(args, s_vb))
    report["vb"] = {"rho": vb_rho, "sweeps": len(vb_post.elbo_trace), "converged": vb_post.converged}
    waic_report, chain_stats = None, []
    if args.mode == "vb":
        posterior, spatial = vb_post, _spatial(a, rho)
        report["rho"] = rho
    else:
        init = gibbs_init(ds, hyper, vb_post=vb_post)
        if rho == "waic":
            best, reports, outputs = select_rho_by_waic(
                ds, a, hyper, _gibbs_config(args, s_gibbs), init, args.rho_grid)
            report["rho_grid"] = [{"rho": r, "waic": w.waic} for r, w in zip(args.rho_grid, reports)]
            k = list(args.rho_grid).index(best)
            out, waic_report, rho = outputs[k], reports[k], best
        else:
            out = fit_gibbs(ds, _spatial(a, rho), hyper, _gibbs_config(args, s_gibbs), init)
            waic_report = waic(out.loglik_draws)
        posterior, spatial = out.w_draws, _spatial(a, rho)
        chain_stats = chain_table(out)
        report["rho"] = rho
        report["sigma_mean"] = out.sigma_draws.mean(axis=0)
    tail = tail_probabilities(posterior, args.c_star)
    selection = fdr_threshold(tail, args.alpha)
    lambdas = args.lambda2_path or [hyper.lambda2 * f for f in PATH_FACTORS]
    counts, path = _lambda2_path(ds, spatial, hyper, ridge, args, s_vb, lambdas)
    bundle = io.ResultBundle(
        summary=_summary(ds, posterior, tail, selection, args.level, sds),
        selection=selection,
        waic=waic_report,
        elbo_trace=vb_post.elbo_trace,
        selection_counts=counts,
        regularization_path=path,
        chain_stats=chain_stats,
        report=report,
    )
    return io.emit_results(bundle, args.out)


def cmd_simulate(args):
    if args.c % 2:
        raise errors.OddPhenotypeCount(f"c must be even, got {args.c}")
    cfg = StudyIConfig(n=args.n, c=args.c, d=args.d, rho_true=args.rho, kappa=args.kappa,
                       lambda2_true=args.lambda2_true, seed=args.seed)
    s_design, s_data = spawn_seeds(args.seed, 2)
    rng = np.random.default_rng(s_design)
    x = simulate_genotypes(cfg.n, cfg.d, rng)
    w = prior_like_truth(cfg, rng)
    a = complete_graph(cfg.c // 2)
    spatial = _spatial(a, cfg.rho_true)
    ds = simulate_dataset(w, sigma_from_kappa(cfg.kappa), spatial, x, s_data)
    os.makedirs(args.out, exist_ok=True)
    written = []
    for name, m in (("y.csv", ds.y), ("x.csv", ds.x), ("a.csv", a), ("w_true.csv", w),
                    ("sigma_true.csv", sigma_from_kappa(cfg.kappa))):
        path = os.path.join(args.out, name)
        io.write_matrix(path, m)
        written.append(path)
    return written


def _study_common(args):
    return dict(n=args.n, c=args.c, d=args.d, replicates=args.replicates, rho_true=args.rho_true,
                kappa=args.kappa, gibbs_iter=args.iters, gibbs_burn_in=args.burnin,
                thin=args.thin, alpha=args.alpha, seed=args.seed)


def _write_study(out_dir, name, header, rows, report):
    os.makedirs(out_dir, exist_ok=True)
    table = os.path.join(out_dir, name)
    io.write_rows(table, header, rows)
    rep = os.path.join(out_dir, "report.json")
    io.write_json(rep, report)
    return [table, rep]


def cmd_sim_study_1(args):
    lam = args.lambda2_gibbs if args.lambda2_gibbs in ("true", "moment") else float(args.lambda2_gibbs)
    cfg = StudyIConfig(**_study_common(args), lambda2_true=args.lambda2_true,
                       lambda2_gibbs=lam, rho_vb=args.rho_vb)
    rep = run_sim_study_1(cfg)
    return _write_study(args.out, "study1_table.csv",
                        ("method", "mse", "corr", "bias2", "coverage", "post_sd"), rep.to_rows(),
                        {"table": rep.table, "per_replicate": rep.per_replicate,
                         "frac_spatial_beats_baseline": rep.frac_spatial_beats_baseline,
                         "config": rep.config})


def cmd_sim_study_2(args):
    cfg = StudyIIConfig(**_study_common(args), rho_fit=args.rho_fit,
                        c_star_grid=tuple(args.c_star_grid))
    rep = run_sim_study_2(cfg)
    return _write_study(args.out, "study2_fdr.csv",
                        ("c_star", "fdr_mcmc", "fdr_vb", "n_selected_mcmc", "n_selected_vb"),
                        rep.to_rows(),
                        {"fdr": rep.fdr, "n_selected": rep.n_selected,
                         "max_std_effect": rep.max_std_effect,
                         "intermediate_points": rep.intermediate(), "config": rep.config})


def cmd_waic_study(args):
    rep = run_waic_study(WaicStudyConfig(**_study_common(args)))
    rows = list(zip(range(1, len(rep.waic_spatial) + 1), rep.waic_spatial, rep.waic_baseline))
    return _write_study(args.out, "waic_study.csv", ("replicate", "waic_spatial", "waic_baseline"),
                        rows, asdict(rep))


def cmd_tune(args):
    if not args.waic:
        raise errors.ConfigError("WAIC is the only tuning criterion; drop --waic false")
    ds, a, _, _ = _load_dataset(args)
    s_cv, s_gibbs = spawn_seeds(args.seed, 2)
    hyper, ridge = make_hyper(ds, args.lambda2, args.v, ridge_seed=s_cv, cv_folds=args.cv_folds)
    init = gibbs_init(ds, hyper, ridge=ridge)
    cfg = _gibbs_config(args, s_gibbs)
    best, reports, _ = select_rho_by_waic(ds, a, hyper, cfg, init, args.rho_grid)
    rows = [("rho", float(r), w.waic, w.lppd_term, w.penalty_term) for r, w in zip(args.rho_grid, reports)]
    report = {"best_rho": best, "lambda2": hyper.lambda2}
    if args.lambda2_grid:
        spatial = _spatial(a, best)
        best_lam, lam_reports = select_lambda2_by_waic(ds, spatial, hyper, cfg, init, args.lambda2_grid)
        rows += [("lambda2", float(v), w.waic, w.lppd_term, w.penalty_term)
                 for v, w in zip(args.lambda2_grid, lam_reports)]
        report["best_lambda2"] = best_lam
    return _write_study(args.out, "tuning.csv", ("parameter", "value", "waic", "lppd_term", "penalty_term"),
                        rows, report)


COMMANDS = {
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "sim-study-1": cmd_sim_study_1,
    "sim-study-2": cmd_sim_study_2,
    "waic-study": cmd_waic_study,
    "tune": cmd_tune,
}


def _manifest(args, wall, written):
    return {
        "command": args.command,
        "config": {k: v for k, v in vars(args).items()},
        "seed": args.seed,
        "versions": {"spatial_mtr": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "wall_time_seconds": wall,
        "files": [os.path.basename(p) for p in written],
    }


def main(argv=None):
    start = time.perf_counter()
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
        with warnings.catch_warnings():
            warnings.simplefilter("always", errors.MaxIterExceeded)
            written = COMMANDS[args.command](args)
            io.write_json(os.path.join(args.out, "manifest.json"),
                          _manifest(args, time.perf_counter() - start, written))
    except errors.SpatialMTRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return errors.FileIOError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
