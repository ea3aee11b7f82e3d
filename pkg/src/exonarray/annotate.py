"""Transcript cluster to gene symbol mapping.

Clusters with no symbol or with several distinct symbols cannot be named
unambiguously; they are listed as dropped with a reason instead of being
silently removed.
"""

import logging
from dataclasses import dataclass

from . import errors

logger = logging.getLogger(__name__)

UNASSIGNED = "unassigned"
AMBIGUOUS = "ambiguous"


@dataclass(frozen=True)
class GeneMap:
    mapped: dict   # cluster_id -> gene symbol
    dropped: dict  # cluster_id -> reason

    def symbol(self, cluster_id):
        return self.mapped.get(cluster_id, "-")

    def reason(self, cluster_id):
        if cluster_id in self.mapped:
            return ""
        return self.dropped.get(cluster_id, UNASSIGNED)


def cluster_gene_map(annotation):
    if annotation.kind != "transcript":
        raise ValueError("gene mapping needs the transcript-cluster annotation")
    mapped, dropped = {}, {}
    for cid in sorted(annotation.rows):
        symbols = set(annotation.rows[cid].gene_symbols)
        if len(symbols) == 1:
            mapped[cid] = symbols.pop()
        else:
            dropped[cid] = UNASSIGNED if not symbols else AMBIGUOUS
    logger.debug("%d clusters mapped, %d dropped", len(mapped), len(dropped))
    return GeneMap(mapped, dropped)


@dataclass(frozen=True)
class AnnotatedResult:
    result: object
    gene_symbol: str
    dropped_reason: str


def annotate_results(results, gene_map, drop_ambiguous=False):
    """Attach symbols to results, keeping order and statistics.

    With ``drop_ambiguous`` clusters without a unique symbol are removed
    instead of being kept with a reason.
    """
    out = []
    for r in results:
        row = AnnotatedResult(r, gene_map.symbol(r.cluster_id), gene_map.reason(r.cluster_id))
        if drop_ambiguous and row.dropped_reason:
            continue
        out.append(row)
    return out


def write_dropped_clusters(gene_map, path):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("cluster_id\treason\n")
            for cid in sorted(gene_map.dropped):
                fh.write(f"{cid}\t{gene_map.dropped[cid]}\n")
    except OSError as exc:
        raise errors.WriteFailure(f"cannot write {path}: {exc}") from exc
