"""RMA-style background correction and quantile normalization.

All work happens on the linear intensity scale; perfect-match probes only.
"""

import logging
import os
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import log_ndtr, ndtr

from . import errors
from .ingest import write_xarr

logger = logging.getLogger(__name__)

KDE_GRID = 512
MIN_PROBES = 100
_FALLBACK_EPS = 1e-8
_ML_MAX_POINTS = 20000
_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class BgParams:
    """Normal background (mu, sigma) plus exponential signal rate alpha."""

    mu: float
    sigma: float
    alpha: float

    def __post_init__(self):
        if not (self.sigma > 0 and self.alpha > 0 and self.mu >= 0):
            raise errors.PreprocessError(
                f"invalid background parameters mu={self.mu}, sigma={self.sigma}, "
                f"alpha={self.alpha}")


def silverman_bandwidth(x):
    n = x.size
    sd = np.std(x, ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * n ** -0.2


def kde_mode(x, n_grid=KDE_GRID):
    """Location of the maximum of a Gaussian kernel density estimate.

    The density is evaluated on ``n_grid`` equally spaced points spanning the
    data padded by three bandwidths, using linear binning.
    """
    x = np.asarray(x, dtype=float)
    bw = silverman_bandwidth(x)
    lo, hi = x.min() - 3 * bw, x.max() + 3 * bw
    grid = np.linspace(lo, hi, n_grid)
    step = grid[1] - grid[0]
    pos = (x - lo) / step
    left = np.clip(np.floor(pos).astype(int), 0, n_grid - 2)
    frac = pos - left
    weights = np.bincount(left, 1.0 - frac, n_grid) + np.bincount(left + 1, frac, n_grid)
    offsets = np.arange(-(n_grid - 1), n_grid) * step
    kernel = np.exp(-0.5 * (offsets / bw) ** 2)
    density = np.convolve(weights, kernel)[n_grid - 1:2 * n_grid - 1]
    return grid[int(np.argmax(density))]


def _exgauss_truncated_nll(theta, x, cut):
    mu, log_s, log_lam = theta
    s, lam = np.exp(log_s), np.exp(log_lam)
    ls = lam * s
    logpdf = np.log(lam) + lam * (mu - x) + 0.5 * ls * ls + log_ndtr((x - mu) / s - ls)
    zc = (cut - mu) / s
    cdf = ndtr(zc) - np.exp(-lam * (cut - mu) + 0.5 * ls * ls + log_ndtr(zc - ls))
    if not cdf > 0:
        return np.inf
    return -(np.mean(logpdf) - np.log(cdf))


def _refine_location(x, mode):
    """Normal-background location consistent with the observed density peak.

    For a normal + exponential convolution the density peak lies to the right
    of the normal mean, so the peak itself overestimates the background. The
    region below ``mode + 2 s`` (``s`` the one-sided spread below the mode) is
    fitted by maximum likelihood as a truncated ex-Gaussian; only the location
    is kept.
    """
    below = x[x < mode]
    s0 = np.sqrt(np.mean((below - mode) ** 2)) if below.size else silverman_bandwidth(x)
    if not s0 > 0:
        return mode
    cut = mode + 2.0 * s0
    sample = np.sort(x[x <= cut])
    if sample.size > _ML_MAX_POINTS:
        take = np.linspace(0, sample.size - 1, _ML_MAX_POINTS).round().astype(int)
        sample = sample[take]
    start = np.array([mode - s0, np.log(s0), -np.log(s0)])
    with np.errstate(all="ignore"):
        res = minimize(_exgauss_truncated_nll, start, args=(sample, cut),
                       method="Nelder-Mead",
                       options={"xatol": 1e-6, "fatol": 1e-12, "maxiter": 4000})
    mu = float(res.x[0])
    if not np.isfinite(mu) or mu > mode or mu < x.min() - 3 * s0:
        logger.debug("location refinement rejected (mu=%s), using density mode", mu)
        return mode
    return mu


def estimate_bg_params(column):
    """Estimate convolution-model parameters for one array.

    mu is the background location (density mode refined as described in
    ``_refine_location``); sigma is the root mean squared deviation of the
    values below mu, about mu, times sqrt(2); alpha is the reciprocal mean
    excess of the values above mu.
    """
    x = np.asarray(column, dtype=float)
    x = x[np.isfinite(x) & (x > 0)]
    if x.size < MIN_PROBES:
        raise errors.TooFewProbes(f"need at least {MIN_PROBES} positive probes, got {x.size}")
    if np.all(x == x[0]):
        raise errors.DegenerateColumn("all intensities are equal")
    mode = kde_mode(x)
    mu = max(_refine_location(x, mode), 0.0)
    below = x[x < mu]
    above = x[x > mu]
    if below.size == 0 or above.size == 0:
        mu = mode
        below, above = x[x < mu], x[x > mu]
    if below.size == 0 or above.size == 0:
        raise errors.DegenerateColumn("no spread around the background mode")
    sigma = np.sqrt(np.mean((below - mu) ** 2)) * np.sqrt(2.0)
    alpha = 1.0 / np.mean(above - mu)
    if not sigma > 0:
        raise errors.DegenerateColumn("background spread is zero")
    return BgParams(float(mu), float(sigma), float(alpha))


def background_correct(column, params):
    """Posterior mean of the signal given the observed intensity.

    Signal ~ Exp(alpha) restricted to [0, x], noise ~ N(mu, sigma^2).
    """
    x = np.asarray(column, dtype=float)
    b = params.sigma
    a = x - params.mu - b * b * params.alpha
    u = a / b
    c = (x - a) / b
    num = np.exp(-0.5 * u * u) - np.exp(-0.5 * c * c)
    den = ndtr(u) - ndtr(-c)
    bad = ~(den >= 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a + b * (num / _SQRT_2PI) / den
    if np.any(bad):
        logger.warning("background correction underflow for %d values; "
                       "using max(x - mu, %g)", int(bad.sum()), _FALLBACK_EPS)
        out[bad] = np.maximum(x[bad] - params.mu, _FALLBACK_EPS)
    return np.maximum(out, np.nextafter(0.0, 1.0))


def rma_background(matrix, pool=None):
    """Estimate and apply background correction to every array of a matrix.

    Returns the corrected matrix and the per-array parameters.
    """
    if matrix.scale != "linear":
        raise errors.StageError("background correction needs linear-scale data")
    columns = [matrix.values[:, j] for j in range(matrix.values.shape[1])]

    def work(col):
        p = estimate_bg_params(col)
        return p, background_correct(col, p)

    results = list(pool.map(work, columns)) if pool is not None else [work(c) for c in columns]
    params = [r[0] for r in results]
    for name, p in zip(matrix.sample_names, params):
        logger.debug("%s: mu=%.4g sigma=%.4g alpha=%.4g", name, p.mu, p.sigma, p.alpha)
    values = np.column_stack([r[1] for r in results]) if results else matrix.values.copy()
    return matrix.replace(values=values, stage="bg_corrected"), params


def _normalize_values(values):
    n, m = values.shape
    order = np.argsort(values, axis=0, kind="stable")
    ranked = np.take_along_axis(values, order, axis=0)
    # sort within rows so the reduction does not depend on column order
    reference = np.sort(ranked, axis=1).sum(axis=1) / m
    csum = np.concatenate([[0.0], np.cumsum(reference)])
    out = np.empty_like(values)
    for j in range(m):
        col = ranked[:, j]
        starts = np.flatnonzero(np.concatenate([[True], col[1:] != col[:-1]]))
        ends = np.concatenate([starts[1:], [n]])
        block_mean = (csum[ends] - csum[starts]) / (ends - starts)
        normalized = np.repeat(block_mean, ends - starts)
        # runs of length one keep the reference value exactly
        single = np.repeat(ends - starts == 1, ends - starts)
        normalized[single] = reference[single]
        out[order[:, j], j] = normalized
    return out


def quantile_normalize(matrix, force=False):
    """Give every array the same intensity distribution.

    Each column's k-th smallest value is replaced by the mean of the k-th
    smallest values across arrays. Tied values share the mean of the
    reference values at their rank positions.
    """
    if matrix.values.size == 0:
        raise errors.EmptyMatrix("cannot normalize an empty matrix")
    if matrix.stage != "bg_corrected" and not force:
        raise errors.StageError(
            f"quantile normalization expects background-corrected data, got {matrix.stage!r}")
    return matrix.replace(values=_normalize_values(np.asarray(matrix.values, dtype=float)),
                          stage="normalized")


def dump_normalized(matrix, layout, directory):
    """Write each normalized array as an XARR file tagged ``stage=normalized``."""
    matrix.check_layout(layout)
    os.makedirs(directory, exist_ok=True)
    for j, name in enumerate(matrix.sample_names):
        write_xarr(matrix.values[:, j], layout, os.path.join(directory, name + ".xarr"),
                   meta="stage=normalized")


__all__ = ["BgParams", "estimate_bg_params", "background_correct", "rma_background",
           "quantile_normalize", "dump_normalized", "kde_mode"]
