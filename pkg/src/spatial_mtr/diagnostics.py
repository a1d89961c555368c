"""Plain chain statistics: effective sample size and split R-hat."""

import numpy as np


def _autocorr(x):
    n = x.size
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    if acov[0] <= 0:
        return np.zeros(n)
    return acov / acov[0]


def effective_sample_size(x):
    """ESS of a single chain using Geyer's initial monotone sequence estimator."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4 or np.ptp(x) == 0:
        return float(n)
    rho = _autocorr(x)
    # sums of adjacent pairs, truncated at the first negative and made monotone
    m = (n - 1) // 2
    gamma = rho[0 : 2 * m : 2] + rho[1 : 2 * m + 1 : 2]
    neg = np.flatnonzero(gamma <= 0)
    k = neg[0] if neg.size else gamma.size
    gamma = np.minimum.accumulate(gamma[:k])
    tau = -1.0 + 2.0 * np.sum(gamma)
    return float(n / max(tau, 1.0 / np.log10(max(n, 10))))


def mc_standard_error(x):
    x = np.asarray(x, dtype=float)
    return float(x.std(ddof=1) / np.sqrt(effective_sample_size(x)))


def split_rhat(x):
    """Potential scale reduction of one chain split into halves."""
    x = np.asarray(x, dtype=float)
    half = x.size // 2
    if half < 2:
        return float("nan")
    chains = np.stack([x[:half], x[x.size - half :]])
    w = chains.var(axis=1, ddof=1).mean()
    b = half * chains.mean(axis=1).var(ddof=1)
    if w == 0:
        return 1.0
    var_plus = (half - 1) / half * w + b / half
    return float(np.sqrt(var_plus / w))


def chain_table(output, max_coefficients=None):
    """(parameter name, ESS, split R-hat) for W entries, Sigma and omega2."""
    rows = []
    m, d, c = output.w_draws.shape
    flat = output.w_draws.reshape(m, -1)
    limit = flat.shape[1] if max_coefficients is None else min(max_coefficients, flat.shape[1])
    for k in range(limit):
        i, j = divmod(k, c)
        rows.append((f"w[{i},{j}]", effective_sample_size(flat[:, k]), split_rhat(flat[:, k])))
    for a, b in ((0, 0), (0, 1), (1, 1)):
        s = output.sigma_draws[:, a, b]
        rows.append((f"sigma[{a},{b}]", effective_sample_size(s), split_rhat(s)))
    for i in range(d):
        s = output.omega2_draws[:, i]
        rows.append((f"omega2[{i}]", effective_sample_size(s), split_rhat(s)))
    return rows
