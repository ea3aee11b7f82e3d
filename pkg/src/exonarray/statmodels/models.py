"""Per-cluster tests: ANOSVA (probe and probeset level) and paired-design DE."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import errors
from .design import NUISANCE, DesignSpec, Observation, build_design
from .distributions import f_sf, t_two_sided
from .linear import drop_aliased, solve_least_squares

logger = logging.getLogger(__name__)

METHODS = ("anosva_probe", "anosva_probeset", "de", "firma")


@dataclass(frozen=True, eq=False)
class GeneTestResult:
    cluster_id: str
    method: str
    statistic: float
    p_value: float = None
    p_adjusted: float = None
    detail: list = field(default_factory=list)
    residual_df: int = None
    n_obs: int = 0
    flags: tuple = ()

    def with_adjusted(self, p_adjusted):
        return GeneTestResult(self.cluster_id, self.method, self.statistic, self.p_value,
                              p_adjusted, self.detail, self.residual_df, self.n_obs, self.flags)


def _observations(data, row_labels, sheet, keep=None):
    """Flatten a rows x samples matrix into responses and observation tuples."""
    rows = [i for i, lab in enumerate(row_labels) if keep is None or lab in keep]
    probesets = tuple(dict.fromkeys(row_labels[i] for i in rows))
    y = []
    obs = []
    for i in rows:
        for j, s in enumerate(sheet.samples):
            y.append(data[i, j])
            obs.append(Observation(i, row_labels[i], s.treatment, s.replicate))
    return np.asarray(y, dtype=float), tuple(obs), probesets


def design_for(model, data, row_labels, sheet, keep=None):
    y, obs, probesets = _observations(data, row_labels, sheet, keep)
    spec = DesignSpec(model, probesets, sheet.treatments, sheet.replicates, obs)
    return spec, y


def _is_balanced(spec, sheet):
    if not sheet.is_balanced():
        return False
    per_ps = {}
    for o in spec.observations:
        per_ps.setdefault(o.probeset, set()).add(o.probe)
    return len({len(v) for v in per_ps.values()}) == 1


def expected_anosva_df(n_obs, n_treatments, n_probesets, n_replicates):
    return n_obs - n_treatments * (n_probesets + n_replicates - 1)


def _fit(X, labels, y):
    try:
        return solve_least_squares(X, y, labels)
    except errors.RankDeficient as exc:
        if exc.column[0] not in NUISANCE:
            raise
    X, labels = drop_aliased(X, labels, NUISANCE)
    return solve_least_squares(X, y, labels)


def _anosva(cluster_id, method, model, data, row_labels, sheet, keep):
    spec, y = design_for(model, data, row_labels, sheet, keep)
    X, labels = build_design(spec)
    balanced = _is_balanced(spec, sheet)
    if not balanced:
        logger.warning("%s: unbalanced design, t-tests may be unreliable for short clusters",
                       cluster_id)
    fit = _fit(X, labels, y)
    if balanced:
        expected = expected_anosva_df(len(y), len(spec.treatments), spec.n_probesets,
                                      len(spec.replicates))
        if fit.residual_df != expected:
            raise AssertionError(
                f"{cluster_id}: residual df {fit.residual_df} != {expected}")
    if fit.residual_df < 1:
        raise errors.RankDeficient(("residual", ()))
    detail = []
    best_t, best_p = 0.0, 1.0
    for k, (term, idx) in enumerate(fit.column_labels):
        if term != "interaction":
            continue
        t = fit.coefficients[k] / fit.standard_errors[k]
        p = t_two_sided(t, fit.residual_df)
        probeset = spec.probesets[idx[0]]
        treatment = spec.treatments[idx[1]]
        detail.append({"probeset": probeset, "treatment": treatment,
                       "estimate": float(fit.coefficients[k]),
                       "std_error": float(fit.standard_errors[k]), "t": float(t), "p": p})
        best_t = max(best_t, abs(t))
        best_p = min(best_p, p)
    return GeneTestResult(cluster_id, method, float(best_t), float(best_p), None, detail,
                          fit.residual_df, len(y))


def anosva_probe(cluster_id, data, row_labels, sheet, retained=None):
    """Probe-level ANOSVA with replicate and chip terms.

    ``data`` is the cluster's log2 probe x sample matrix and ``row_labels``
    the probeset of each row. Rows whose probeset is not in ``retained`` are
    dropped first. The statistic is the largest |t| over the probeset x
    treatment interaction coefficients and the p-value the smallest
    two-sided p.
    """
    return _anosva(cluster_id, "anosva_probe", "anosva_probe", np.asarray(data),
                   list(row_labels), sheet, retained)


def anosva_probeset(cluster_id, data, probesets, sheet, retained=None):
    """ANOSVA on probeset-level estimates (one row per probeset)."""
    return _anosva(cluster_id, "anosva_probeset", "anosva_probeset", np.asarray(data),
                   list(probesets), sheet, retained)


def _rss_rank(X, y):
    if X.shape[1] == 0:
        return float(y @ y), 0
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    return float(r @ r), int(rank)


def de_anova(cluster_id, data, row_labels, sheet, retained=None, denominator="interaction"):
    """Treatment F-test for a paired design.

    Sequential sums of squares for probeset, treatment, replicate and
    replicate x treatment. With ``denominator="interaction"`` treatment is
    tested against the replicate x treatment mean square, the error stratum
    of a paired design; ``"within"`` uses the residual mean square instead.
    """
    if denominator not in ("interaction", "within"):
        raise ValueError(f"unknown denominator {denominator!r}")
    spec, y = design_for("de_probe", np.asarray(data), list(row_labels), sheet, retained)
    if y.size == 0:
        raise errors.StatModelsError(f"{cluster_id}: no probes left to test")
    X, labels = build_design(spec)
    terms = [lab[0] for lab in labels]
    steps = ["probeset", "treatment", "replicate", "replicate:treatment"]
    ss = {}
    dfs = {}
    cols = [k for k, t in enumerate(terms) if t == "intercept"]
    prev_rss, prev_rank = _rss_rank(X[:, cols], y)
    for term in steps:
        cols = cols + [k for k, t in enumerate(terms) if t == term]
        rss, rank = _rss_rank(X[:, cols], y)
        ss[term] = prev_rss - rss
        dfs[term] = rank - prev_rank
        prev_rss, prev_rank = rss, rank
    ss["within"] = prev_rss
    dfs["within"] = y.size - prev_rank
    den_term = "replicate:treatment" if denominator == "interaction" else "within"
    df1, df2 = dfs["treatment"], dfs[den_term]
    if df1 < 1 or df2 < 1:
        raise errors.StatModelsError(
            f"{cluster_id}: cannot test treatment (df {df1}, {df2})")
    ms_num = max(ss["treatment"], 0.0) / df1
    ms_den = max(ss[den_term], 0.0) / df2
    scale = float(np.var(y)) if y.size > 1 else 0.0
    detail = [{"term": t, "ss": ss[t], "df": dfs[t]} for t in steps + ["within"]]
    if ms_den <= 1e-14 * max(scale, 1e-300):
        logger.warning("%s: zero denominator mean square", cluster_id)
        positive = ms_num > 1e-14 * max(scale, 1e-300)
        stat = float("inf") if positive else 0.0
        return GeneTestResult(cluster_id, "de", stat, 0.0 if positive else 1.0, None,
                              detail, df2, y.size, ("ZeroDenominatorMS",))
    fstat = ms_num / ms_den
    return GeneTestResult(cluster_id, "de", float(fstat), float(f_sf(fstat, df1, df2)),
                          None, detail, df2, y.size)
