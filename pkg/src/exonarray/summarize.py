"""Probe-level model summarization by median polish.

Each unit (a transcript cluster or a probeset) is fitted on the log2 scale as
``y[p, s] = overall + probe[p] + chip[s] + residual[p, s]``. Chip effects are
reported as ``overall + chip[s]`` so the probe affinities have median zero.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import errors
from .parallel import ordered_map

logger = logging.getLogger(__name__)

MAD_CONSTANT = 1.4826
LOG_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class MedianPolish:
    overall: float
    row_effects: np.ndarray
    col_effects: np.ndarray
    residuals: np.ndarray
    converged: bool
    n_iter: int

    def __iter__(self):
        return iter((self.overall, self.row_effects, self.col_effects, self.residuals))


def _polish_rows_first(x, max_iter, tol):
    z = x.copy()
    nr, nc = z.shape
    overall = 0.0
    r = np.zeros(nr)
    c = np.zeros(nc)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        rdelta = np.median(z, axis=1)
        z -= rdelta[:, None]
        r += rdelta
        shift_c = np.median(c)
        c -= shift_c
        overall += shift_c
        cdelta = np.median(z, axis=0)
        z -= cdelta[None, :]
        c += cdelta
        shift_r = np.median(r)
        r -= shift_r
        overall += shift_r
        change = max(np.abs(rdelta).max(), np.abs(cdelta).max(), abs(shift_c), abs(shift_r))
        if change < tol:
            converged = True
            break
    return overall, r, c, converged, it


def median_polish(matrix, max_iter=10, tol=0.01, first="rows"):
    """Tukey's median polish of a two-way table.

    Row and column medians are swept alternately into the effects (rows
    first by default) until no effect moves by ``tol`` or more within a full
    sweep, or ``max_iter`` sweeps have run. Row and column effects are kept
    centred on median zero, the centre going into ``overall``.

    Residuals are computed from the final effects, so
    ``overall + row[:, None] + col[None, :] + residuals`` reproduces the input
    up to floating-point rounding.
    """
    x = np.array(matrix, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError("median polish needs a non-empty 2-d matrix")
    if not np.all(np.isfinite(x)):
        raise errors.NonFiniteInput("median polish input contains NaN or infinity")
    if max_iter < 1 or not tol > 0:
        raise ValueError("max_iter must be >= 1 and tol > 0")
    if first == "rows":
        overall, r, c, converged, it = _polish_rows_first(x, max_iter, tol)
    elif first == "cols":
        overall, c, r, converged, it = _polish_rows_first(x.T.copy(), max_iter, tol)
    else:
        raise ValueError(f"first must be 'rows' or 'cols', not {first!r}")
    residuals = x - (overall + r[:, None] + c[None, :])
    return MedianPolish(float(overall), r, c, residuals, converged, it)


def mad(values):
    v = np.asarray(values, dtype=float).ravel()
    return MAD_CONSTANT * float(np.median(np.abs(v - np.median(v))))


@dataclass(frozen=True, eq=False)
class PlmFit:
    unit_id: str
    level: str
    probe_affinities: np.ndarray
    chip_effects: np.ndarray
    residuals: np.ndarray
    residual_scale: float
    probe_indices: tuple = ()
    probesets: tuple = ()
    converged: bool = True


def log2_intensities(values):
    return np.log2(np.maximum(values, LOG_FLOOR))


def _units(layout, level):
    if level == "cluster":
        return {cid: layout.cluster_probes(cid) for cid in layout.cluster_index}
    if level == "probeset":
        return {ps: (list(idx), [ps] * len(idx)) for ps, idx in layout.probeset_index.items()}
    raise ValueError(f"level must be 'cluster' or 'probeset', not {level!r}")


def _require_normalized(matrix, layout):
    matrix.check_layout(layout)
    if matrix.stage != "normalized":
        raise errors.StageError(f"expected normalized intensities, got {matrix.stage!r}")


def fit_unit(unit_id, level, log_values, probe_indices=(), probesets=(),
             max_iter=10, tol=0.01):
    if log_values.shape[0] == 0:
        raise errors.EmptyUnit(f"unit {unit_id!r} has no probes")
    # samples are swept first so a constant added to one chip moves only its
    # chip effect and leaves the residuals untouched
    mp = median_polish(log_values, max_iter=max_iter, tol=tol, first="cols")
    return PlmFit(
        unit_id=unit_id,
        level=level,
        probe_affinities=mp.row_effects,
        chip_effects=mp.overall + mp.col_effects,
        residuals=mp.residuals,
        residual_scale=mad(mp.residuals),
        probe_indices=tuple(probe_indices),
        probesets=tuple(probesets),
        converged=mp.converged,
    )


def fit_plm(normalized, layout, level, pool=None, max_iter=10, tol=0.01):
    """Fit the probe-level model to every unit; results sorted by unit id."""
    _require_normalized(normalized, layout)
    logv = log2_intensities(normalized.values)
    units = _units(layout, level)

    def work(uid):
        idx, labels = units[uid]
        return fit_unit(uid, level, logv[idx, :], idx, labels, max_iter, tol)

    fits = ordered_map(work, sorted(units), pool)
    n_slow = sum(not f.converged for f in fits)
    if n_slow:
        logger.debug("%d of %d %s fits hit the iteration limit", n_slow, len(fits), level)
    return fits


@dataclass(frozen=True, eq=False)
class ExpressionMatrix:
    unit_ids: tuple
    values: np.ndarray
    level: str
    sample_names: tuple = ()

    def row(self, unit_id):
        return self.values[self._index()[unit_id]]

    def _index(self):
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {u: i for i, u in enumerate(self.unit_ids)}
            object.__setattr__(self, "_idx", idx)
        return idx

    def __contains__(self, unit_id):
        return unit_id in self._index()


def extract_expression(fits, sample_names=()):
    if not fits:
        return ExpressionMatrix((), np.zeros((0, 0)), level=None, sample_names=tuple(sample_names))
    levels = {f.level for f in fits}
    if len(levels) > 1:
        raise errors.MixedLevels(f"fits at several levels: {sorted(levels)}")
    widths = {f.chip_effects.size for f in fits}
    if len(widths) > 1:
        raise errors.SummarizeError("fits have different sample counts")
    ordered = sorted(fits, key=lambda f: f.unit_id)
    values = np.vstack([f.chip_effects for f in ordered])
    return ExpressionMatrix(tuple(f.unit_id for f in ordered), values, levels.pop(),
                            tuple(sample_names))


def unit_probe_intensities(normalized, layout):
    """log2 probe x sample matrices per cluster, with each row's probeset."""
    _require_normalized(normalized, layout)
    logv = log2_intensities(normalized.values)
    out = {}
    for cid in sorted(layout.cluster_index):
        idx, labels = layout.cluster_probes(cid)
        out[cid] = (logv[idx, :], tuple(labels))
    return out


def write_expression_tsv(expr, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(("unit_id",) + tuple(expr.sample_names)) + "\n")
        for uid, row in zip(expr.unit_ids, expr.values):
            fh.write(uid + "\t" + "\t".join(f"{v:.6g}" for v in row) + "\n")


def read_expression_tsv(path, level):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\r\n").split("\t")
        ids, rows = [], []
        for line in fh:
            if not line.strip():
                continue
            f = line.rstrip("\r\n").split("\t")
            ids.append(f[0])
            rows.append([float(v) for v in f[1:]])
    values = np.array(rows, dtype=float).reshape(len(ids), len(header) - 1)
    return ExpressionMatrix(tuple(ids), values, level, tuple(header[1:]))
