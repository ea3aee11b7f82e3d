"""Least squares by Householder QR."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from ..errors import RankDeficient

RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class LinearFit:
    coefficients: np.ndarray
    standard_errors: np.ndarray
    residual_df: int
    sigma2: float
    column_labels: list
    rss: float = 0.0


def first_dependent_column(r_diag):
    """Index of the first column whose QR pivot is negligible, or ``None``."""
    d = np.abs(r_diag)
    if d.size == 0:
        return None
    scale = d.max()
    if scale == 0:
        return 0
    bad = np.flatnonzero(d <= RANK_TOL * scale)
    return int(bad[0]) if bad.size else None


def solve_least_squares(X, y, labels=None):
    """Minimize ``||y - X b||^2`` for a full-column-rank ``X``.

    Standard errors are ``sqrt(sigma2 * diag((X'X)^-1))`` with
    ``sigma2 = RSS / (n - p)``; when ``n == p`` they are NaN.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if labels is None:
        labels = [f"x{k}" for k in range(p)]
    if n < p:
        raise RankDeficient(labels[n])
    q, r = np.linalg.qr(X, mode="reduced")
    bad = first_dependent_column(np.diag(r))
    if bad is not None:
        raise RankDeficient(labels[bad])
    coef = solve_triangular(r, q.T @ y)
    resid = y - X @ coef
    rss = float(resid @ resid)
    df = n - p
    r_inv = solve_triangular(r, np.eye(p))
    xtx_inv_diag = np.einsum("ij,ij->i", r_inv, r_inv)
    sigma2 = rss / df if df > 0 else float("nan")
    se = np.sqrt(sigma2 * xtx_inv_diag)
    return LinearFit(coef, se, df, sigma2, list(labels), rss)


def drop_aliased(X, labels, droppable):
    """Remove columns that are linear combinations of earlier ones.

    Only columns whose term is in ``droppable`` may be removed; any other
    dependency raises ``RankDeficient``. Mirrors how aliased nuisance terms
    are set aside when a replicate is missing from a treatment.
    """
    keep = []
    kept_labels = []
    basis = np.zeros((X.shape[0], 0))
    for k in range(X.shape[1]):
        trial = np.column_stack([basis, X[:, k]])
        r = np.linalg.qr(trial, mode="r")
        if first_dependent_column(np.diag(r)) is None:
            basis = trial
            keep.append(k)
            kept_labels.append(labels[k])
        elif labels[k][0] not in droppable:
            raise RankDeficient(labels[k])
    return X[:, keep], kept_labels
