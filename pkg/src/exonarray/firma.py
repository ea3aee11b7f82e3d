"""FIRMA scores from cluster-level probe-level-model residuals.

A probeset's score on one chip is the median, over the probeset's probes, of
the residuals divided by the cluster's residual scale (scaled MAD). Two-group
paired designs are ranked by the mean paired score difference.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import errors

logger = logging.getLogger(__name__)

MAD_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class FirmaScores:
    cluster_id: str
    probeset_ids: tuple
    scores: np.ndarray
    mad_used: float
    mad_degenerate: bool = False


def firma_scores(fit, layout=None):
    if fit.level != "cluster":
        raise ValueError("FIRMA needs a cluster-level fit")
    labels = list(fit.probesets)
    if layout is not None and fit.unit_id in layout.cluster_index:
        probesets = tuple(ps for ps in layout.cluster_index[fit.unit_id] if ps in labels)
    else:
        probesets = tuple(dict.fromkeys(labels))
    n_samples = fit.residuals.shape[1]
    if fit.residual_scale < MAD_EPS:
        logger.debug("%s: residual scale %.3g, scores set to zero", fit.unit_id,
                     fit.residual_scale)
        return FirmaScores(fit.unit_id, probesets, np.zeros((len(probesets), n_samples)),
                           fit.residual_scale, True)
    labels = np.asarray(labels)
    scores = np.vstack([
        np.median(fit.residuals[labels == ps] / fit.residual_scale, axis=0)
        for ps in probesets
    ])
    return FirmaScores(fit.unit_id, probesets, scores, fit.residual_scale)


def paired_mean_diff(scores, sheet, group_a, group_b):
    """Mean over replicates of score(group_a) - score(group_b), per probeset."""
    pairs = []
    reps_a = {s.replicate for s in sheet.samples if s.treatment == group_a}
    reps_b = {s.replicate for s in sheet.samples if s.treatment == group_b}
    for rep in sheet.replicates:
        if (rep in reps_a) != (rep in reps_b):
            raise errors.UnpairedDesign(rep)
        if rep in reps_a:
            pairs.append((sheet.sample_index(rep, group_a), sheet.sample_index(rep, group_b)))
    if not pairs:
        raise errors.UnpairedDesign(f"no replicate in both {group_a} and {group_b}")
    ia = [a for a, _ in pairs]
    ib = [b for _, b in pairs]
    diffs = scores.scores[:, ia] - scores.scores[:, ib]
    return dict(zip(scores.probeset_ids, diffs.mean(axis=1)))


@dataclass(frozen=True)
class FirmaRow:
    probeset_id: str
    cluster_id: str
    gene_symbol: str
    mean_diff: float


def rank_firma(diffs, retained_probesets, layout, gene_map=None, analyzable=None):
    """Rank probesets by absolute mean paired difference.

    ``diffs`` maps probeset -> mean difference. Probesets outside
    ``retained_probesets`` or in clusters outside ``analyzable`` (when given)
    are dropped. Ties go to the smaller probeset id. Returns the probeset
    ranking and a gene-level list holding each cluster's best probeset.
    """
    gene_map = gene_map or {}
    rows = []
    for ps, d in diffs.items():
        if ps not in retained_probesets:
            continue
        cid = layout.probeset_cluster[ps]
        if analyzable is not None and cid not in analyzable:
            continue
        rows.append(FirmaRow(ps, cid, gene_map.get(cid, "-"), float(d)))
    rows.sort(key=lambda r: (-abs(r.mean_diff), r.probeset_id))
    seen = set()
    genes = []
    for r in rows:
        if r.cluster_id not in seen:
            seen.add(r.cluster_id)
            genes.append(r)
    return rows, genes


def write_firma_ranking(rows, path, top_n=None):
    if top_n is not None:
        rows = rows[:top_n]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("rank\tprobeset_id\tcluster_id\tgene_symbol\tmean_diff\n")
        for k, r in enumerate(rows, start=1):
            fh.write(f"{k}\t{r.probeset_id}\t{r.cluster_id}\t{r.gene_symbol}\t"
                     f"{r.mean_diff:.6g}\n")
