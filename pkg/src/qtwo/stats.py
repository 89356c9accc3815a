"""Goodness-of-fit tests used by the verifiers.

Every result carries its level and critical value so reports never hide a
threshold. KS critical values use the asymptotic Kolmogorov distribution.
"""

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import EmptySample


@dataclass(frozen=True)
class StatResult:
    name: str
    statistic: float
    critical: float
    level: float
    passed: bool
    detail: dict = None

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: statistic={self.statistic:.6g} critical={self.critical:.6g} level={self.level:g}"


def kolmogorov_constant(level):
    """c(alpha) with P(sup|B| > c) = alpha for the Brownian bridge."""
    return float(sps.kstwobign.isf(level))


def _ecdf_distance(a, b):
    a = np.sort(a)
    b = np.sort(b)
    both = np.concatenate([a, b])
    fa = np.searchsorted(a, both, side="right") / a.size
    fb = np.searchsorted(b, both, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_two_sample(a, b, level=0.01, name="ks_two_sample"):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptySample("two-sample KS needs two nonempty samples")
    d = _ecdf_distance(a, b)
    n, m = a.size, b.size
    crit = kolmogorov_constant(level) * np.sqrt((n + m) / (n * m))
    return StatResult(name, d, float(crit), level, bool(d <= crit), {"n": n, "m": m})


def ks_one_sample(samples, cdf, level=0.01, name="ks_one_sample"):
    """KS distance between the empirical CDF of ``samples`` and ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise EmptySample("one-sample KS needs a nonempty sample")
    n = x.size
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))
    crit = kolmogorov_constant(level) / np.sqrt(n)
    return StatResult(name, d, float(crit), level, bool(d <= crit), {"n": n})


def chi_square(observed, expected_prob, level=0.001, min_expected=5.0, name="chi_square"):
    """Pearson chi-square of counts against cell probabilities.

    Cells with expected count below ``min_expected`` are pooled into one
    bin (dropped if the pool itself stays below the floor).
    """
    obs = np.asarray(observed, dtype=float).ravel()
    p = np.asarray(expected_prob, dtype=float).ravel()
    if obs.size != p.size:
        raise ValueError("observed and expected have different lengths")
    n = obs.sum()
    if n == 0:
        raise EmptySample("no observations")
    p = p / p.sum()
    exp = n * p
    big = exp >= min_expected
    o = list(obs[big])
    e = list(exp[big])
    if np.any(~big):
        o_small, e_small = obs[~big].sum(), exp[~big].sum()
        if e_small >= min_expected:
            o.append(o_small)
            e.append(e_small)
        elif o_small > 0 and e_small > 0:
            # pool too small to test on its own: merge it into the smallest big cell
            j = int(np.argmin(e))
            o[j] += o_small
            e[j] += e_small
    o, e = np.array(o), np.array(e)
    stat = float(np.sum((o - e) ** 2 / e))
    dof = max(o.size - 1, 1)
    crit = float(sps.chi2.isf(level, dof))
    return StatResult(name, stat, crit, level, bool(stat <= crit),
                      {"dof": dof, "pvalue": float(sps.chi2.sf(stat, dof)), "bins": int(o.size)})


def binomial_within(count, n, p, n_sigma=3.0, name="binomial"):
    """Check ``count / n`` lies within ``n_sigma`` standard errors of ``p``."""
    se = np.sqrt(p * (1 - p) / n)
    z = abs(count / n - p) / se if se > 0 else (0.0 if count / n == p else np.inf)
    level = float(2 * sps.norm.sf(n_sigma))
    return StatResult(name, float(z), float(n_sigma), level, bool(z <= n_sigma),
                      {"fraction": count / n, "expected": p, "se": float(se)})


def cell_cdf(axis, density):
    """Piecewise-linear CDF of a cell-constant density on a cell-centred axis."""
    axis = np.asarray(axis, dtype=float)
    dx = axis[1] - axis[0]
    edges = np.concatenate([[axis[0] - 0.5 * dx], axis + 0.5 * dx])
    w = np.clip(np.asarray(density, dtype=float), 0, None)
    c = np.concatenate([[0.0], np.cumsum(w)])
    c /= c[-1]
    return lambda x: np.interp(x, edges, c)
