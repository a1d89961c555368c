"""CSV ingestion, phenotype preprocessing and result files.

Matrices are plain comma-separated text with '.' decimals and an optional
single header row.  Floats are written with ``repr`` so that reading a file
back returns bit-identical values.
"""

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import errors

SUMMARY_COLUMNS = (
    "snp",
    "phenotype",
    "mean",
    "sd",
    "lo",
    "hi",
    "tail_prob",
    "selected",
    "mean_original",
    "sd_original",
    "lo_original",
    "hi_original",
)


def _open(path, mode):
    try:
        return open(path, mode, newline="", encoding="utf-8")
    except OSError as exc:
        raise errors.FileIOError(f"cannot open {path}: {exc.strerror}") from exc


def load_matrix(path, expected_shape=None, header=False):
    """Read a numeric CSV matrix.

    Returns ``(matrix, names)`` where ``names`` are the header fields, or
    None without a header.  ``expected_shape`` may use None for a free axis.
    """
    with _open(path, "r") as fh:
        rows = [r for r in csv.reader(fh) if r and any(f.strip() for f in r)]
    names = None
    offset = 1
    if header:
        if not rows:
            raise errors.ParseError(f"{path}: header requested but the file is empty")
        names = [f.strip() for f in rows[0]]
        rows = rows[1:]
        offset = 2
    if not rows:
        raise errors.ParseError(f"{path}: no data rows")
    width = len(rows[0])
    out = np.empty((len(rows), width))
    for r, row in enumerate(rows):
        if len(row) != width:
            raise errors.ParseError(
                f"{path}: row {r + offset} has {len(row)} fields, expected {width}"
            )
        for k, cell in enumerate(row):
            try:
                val = float(cell)
            except ValueError:
                raise errors.ParseError(
                    f"{path}: cannot parse {cell.strip()!r} at row {r + offset}, column {k + 1}"
                ) from None
            if not math.isfinite(val):
                raise errors.NonFiniteValue(
                    f"{path}: non-finite value {cell.strip()!r} at row {r + offset}, column {k + 1}"
                )
            out[r, k] = val
    if names is not None and len(names) != width:
        raise errors.ParseError(f"{path}: header has {len(names)} fields, data has {width}")
    if expected_shape is not None:
        for got, want in zip(out.shape, expected_shape):
            if want is not None and got != want:
                raise errors.ShapeMismatch(
                    f"{path}: shape {out.shape} does not match expected {tuple(expected_shape)}"
                )
    return out, names


def write_matrix(path, m, names=None):
    with _open(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if names is not None:
            w.writerow(names)
        for row in np.atleast_2d(m):
            w.writerow([repr(float(v)) for v in row])


def standardize_phenotypes(y):
    """Center each column and scale to unit sample variance (n - 1 denominator)."""
    y = np.asarray(y, dtype=float)
    means = y.mean(axis=0)
    sds = y.std(axis=0, ddof=1)
    bad = np.flatnonzero(~(sds > 0))
    if bad.size:
        raise errors.ConstantColumn(f"phenotype column {bad[0] + 1} is constant")
    return (y - means) / sds, means, sds


def unstandardize(y_std, means, sds):
    return y_std * sds + means


def residualize(y, confounders):
    """Per-column OLS residuals after regressing on an intercept plus confounders."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(confounders, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if z.shape[0] != y.shape[0]:
        raise errors.SubjectCountMismatch("confounders and phenotypes differ in row count")
    design = np.column_stack([np.ones(len(z)), z])
    design = _drop_duplicate_intercept(design)
    if design.shape[1] >= design.shape[0] or np.linalg.matrix_rank(design) < design.shape[1]:
        raise errors.RankDeficientConfounders("confounder matrix is not of full column rank")
    q, _ = np.linalg.qr(design)
    return y - q @ (q.T @ y)


def _drop_duplicate_intercept(design):
    # a constant confounder column duplicates the intercept
    keep = [0] + [k for k in range(1, design.shape[1]) if np.ptp(design[:, k]) > 0]
    return design[:, keep]


@dataclass
class SummaryTable:
    snp: list
    phenotype: list
    mean: np.ndarray  # (d, c)
    sd: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    tail_prob: np.ndarray
    selected: np.ndarray
    scale: np.ndarray = None  # column sds of the original phenotypes

    def rows(self):
        d, c = self.mean.shape
        scale = np.ones(c) if self.scale is None else self.scale
        for i in range(d):
            for j in range(c):
                s = scale[j]
                yield (
                    self.snp[i],
                    self.phenotype[j],
                    float(self.mean[i, j]),
                    float(self.sd[i, j]),
                    float(self.lo[i, j]),
                    float(self.hi[i, j]),
                    float(self.tail_prob[i, j]),
                    int(bool(self.selected[i, j])),
                    float(self.mean[i, j] * s),
                    float(self.sd[i, j] * s),
                    float(self.lo[i, j] * s),
                    float(self.hi[i, j] * s),
                )


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def write_rows(path, header, rows):
    with _open(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_rows(path):
    """Read a CSV written by ``write_rows``: header plus list of string rows."""
    with _open(path, "r") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def load_summary(path):
    """Numeric columns of a coefficient summary as a dict of float arrays."""
    header, rows = read_rows(path)
    out = {}
    for k, name in enumerate(header):
        col = [r[k] for r in rows]
        out[name] = col if name in ("snp", "phenotype") else np.array(col, dtype=float)
    return out


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_json(path, payload):
    with _open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


@dataclass
class ResultBundle:
    """Everything ``emit_results`` can write; only ``summary`` is required."""

    summary: SummaryTable
    selection: object = None
    waic: object = None
    elbo_trace: list = None
    selection_counts: list = field(default_factory=list)  # (lambda2, c_star, count)
    regularization_path: list = field(default_factory=list)  # (snp, phenotype, lambda2, mean)
    chain_stats: list = field(default_factory=list)  # (parameter, ess, rhat)
    report: dict = field(default_factory=dict)


def emit_results(bundle, out_dir):
    """Write the result files into ``out_dir``; returns the list of paths written."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise errors.FileIOError(f"cannot create {out_dir}: {exc.strerror}") from exc
    written = []

    def path(name):
        p = os.path.join(out_dir, name)
        written.append(p)
        return p

    summary = bundle.summary
    write_rows(path("coefficients.csv"), SUMMARY_COLUMNS, summary.rows())
    sel_rows = []
    if bundle.selection is not None:
        for i, j in bundle.selection.pairs:
            sel_rows.append(
                (summary.snp[i], summary.phenotype[j], float(summary.tail_prob[i, j]))
            )
    write_rows(path("selection.csv"), ("snp", "phenotype", "tail_prob"), sel_rows)

    report = dict(bundle.report)
    if bundle.selection is not None:
        report["selection"] = {
            "alpha": bundle.selection.alpha,
            "threshold": bundle.selection.threshold,
            "n_selected": int(bundle.selection.selected.sum()),
            "per_region_counts": dict(
                zip(summary.phenotype, bundle.selection.per_region_counts.tolist())
            ),
        }
    if bundle.waic is not None:
        report["waic"] = {
            "waic": bundle.waic.waic,
            "lppd_term": bundle.waic.lppd_term,
            "penalty_term": bundle.waic.penalty_term,
        }
    if bundle.elbo_trace is not None:
        report["elbo"] = {"final": bundle.elbo_trace[-1] if bundle.elbo_trace else None,
                          "sweeps": len(bundle.elbo_trace)}
        write_rows(
            path("elbo_trace.csv"),
            ("sweep", "elbo"),
            [(k + 1, float(v)) for k, v in enumerate(bundle.elbo_trace)],
        )
    if bundle.selection_counts:
        write_rows(path("selection_counts.csv"), ("lambda2", "c_star", "n_selected"),
                   [(float(a), float(b), int(n)) for a, b, n in bundle.selection_counts])
    if bundle.regularization_path:
        write_rows(path("regularization_path.csv"), ("snp", "phenotype", "lambda2", "mean"),
                   [(s, p, float(lam), float(m)) for s, p, lam, m in bundle.regularization_path])
    if bundle.chain_stats:
        write_rows(path("chain_stats.csv"), ("parameter", "ess", "split_rhat"),
                   [(name, float(e), float(r)) for name, e, r in bundle.chain_stats])
    write_json(path("report.json"), report)
    return written


def parse_config_file(path):
    """Flat ``key = value`` file; '#' starts a comment.  Keys use dashes or underscores."""
    out = {}
    with _open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise errors.ConfigError(f"{path}: line {lineno} is not key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if not key:
                raise errors.ConfigError(f"{path}: line {lineno} has an empty key")
            out[key.replace("-", "_")] = value
    return out
