"""Benjamini-Hochberg adjustment."""

import numpy as np

from ..errors import OutOfRangeP


def bh_adjust(p_values):
    """Benjamini-Hochberg adjusted p-values, returned in input order."""
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1:
        raise ValueError("p-values must be a vector")
    if p.size == 0:
        return p.copy()
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise OutOfRangeP("p-values must lie in [0, 1]")
    n = p.size
    order = np.argsort(p, kind="stable")
    ranks = np.arange(1, n + 1, dtype=float)
    scaled = p[order] * n / ranks
    adjusted = np.minimum(1.0, np.minimum.accumulate(scaled[::-1])[::-1])
    out = np.empty(n)
    out[order] = adjusted
    return out
