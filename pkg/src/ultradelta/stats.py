"""Statistical comparators used by ``verify`` and the test harness."""

import math

import numpy as np
from scipy import stats

from .exceptions import UsageError

ALPHA = 0.001


def distribution_preservation_stat(original_codes, kept_codes, alpha=ALPHA, min_expected=5.0):
    """Chi-square test that kept codes follow the original code proportions.

    Categories whose expected kept count is below ``min_expected`` are pooled
    so the chi-square approximation holds. Returns ``(statistic, p_value,
    passed)`` with ``passed`` iff ``p_value >= alpha``.
    """
    original = np.asarray(original_codes).ravel()
    kept = np.asarray(kept_codes).ravel()
    if original.size == 0:
        raise UsageError("original code population is empty")
    if kept.size == 0:
        return 0.0, 1.0, True
    labels, counts = np.unique(original, return_counts=True)
    extra = np.setdiff1d(np.unique(kept), labels)
    if extra.size:
        # a kept code absent from the population cannot be explained
        return math.inf, 0.0, False
    observed = np.zeros(labels.size, dtype=np.float64)
    np.add.at(observed, np.searchsorted(labels, kept), 1)
    expected = kept.size * counts / original.size

    small = expected < min_expected
    o = observed[~small]
    e = expected[~small]
    if small.any():
        pool_o, pool_e = observed[small].sum(), expected[small].sum()
        if pool_e >= min_expected or e.size == 0:
            o, e = np.append(o, pool_o), np.append(e, pool_e)
        else:
            j = np.argmin(e)
            o[j] += pool_o
            e[j] += pool_e
    if e.size < 2:
        return 0.0, 1.0, True
    statistic = float(np.sum((o - e) ** 2 / e))
    p_value = float(stats.chi2.sf(statistic, df=len(e) - 1))
    return statistic, p_value, p_value >= alpha


def binomial_within(k, n, p, n_sigma=4.0):
    """Whether ``k`` successes of ``n`` lie within ``n_sigma`` sd of ``n*p``."""
    sd = math.sqrt(n * p * (1 - p))
    return abs(k - n * p) <= n_sigma * sd + 1e-9
