"""Presence calls and the probeset/cluster filters applied before testing.

A probeset is absent in a sample when its log2 probeset-level estimate is
below the threshold (3 by default). Within a treatment group a probeset is
absent when it is absent in more than half of the group's samples.
"""

import os
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class PresenceCalls:
    """Boolean probeset x sample matrix, ``True`` meaning present."""

    probeset_ids: tuple
    calls: np.ndarray
    threshold: float

    def index(self):
        return {ps: i for i, ps in enumerate(self.probeset_ids)}


def presence_calls(expr, sheet, threshold=3.0):
    if expr.level not in ("probeset", None):
        raise ValueError("presence calls need probeset-level expression")
    if expr.values.size and expr.values.shape[1] != len(sheet.samples):
        raise ValueError("expression columns do not match the sample sheet")
    calls = np.asarray(expr.values) >= threshold
    return PresenceCalls(tuple(expr.unit_ids), calls, float(threshold))


def group_absent_counts(calls, sheet):
    """Map (probeset, group) -> (absent_count, group_size)."""
    out = {}
    groups = sheet.group_indices()
    for i, ps in enumerate(calls.probeset_ids):
        row = calls.calls[i]
        for g, cols in groups.items():
            out[(ps, g)] = (int(np.count_nonzero(~row[cols])), len(cols))
    return out


def _absent_in_group(count, size):
    return count > size // 2


def filter_probesets(calls, sheet, crosshyb=None, rule="any-group"):
    """Probesets kept for analysis.

    Kept when present (absent in at most half the samples) in at least one
    group, or in every group with ``rule="all-groups"``, and not flagged as
    cross-hybridizing (class 2 or 3).
    """
    if rule not in ("any-group", "all-groups"):
        raise ValueError(f"unknown presence rule {rule!r}")
    counts = group_absent_counts(calls, sheet)
    groups = sheet.treatments
    rows = crosshyb.rows if crosshyb is not None else {}
    keep = set()
    for ps in calls.probeset_ids:
        ok = [not _absent_in_group(*counts[(ps, g)]) for g in groups]
        present = any(ok) if rule == "any-group" else all(ok)
        if not present:
            continue
        ann = rows.get(ps)
        if ann is not None and ann.crosshyb_class in (2, 3):
            continue
        keep.add(ps)
    return keep


def cluster_presence(calls, sheet, layout):
    """Map cluster -> {group: present} under the half-of-probesets rule."""
    return _cluster_presence_from_counts(group_absent_counts(calls, sheet), sheet, layout)


def _cluster_presence_from_counts(counts, sheet, layout):
    known = {ps for ps, _ in counts}
    out = {}
    for cid, probesets in layout.cluster_index.items():
        per_group = {}
        for g in sheet.treatments:
            n_absent = sum(
                1 for ps in probesets
                if ps not in known or _absent_in_group(*counts[(ps, g)]))
            per_group[g] = n_absent <= len(probesets) // 2
        out[cid] = per_group
    return out


def filter_clusters(retained, calls, sheet, layout):
    """Clusters fit for splicing analysis.

    A cluster qualifies when it is present in every group and keeps at least
    two probesets after probeset filtering.
    """
    presence = cluster_presence(calls, sheet, layout)
    out = set()
    for cid, probesets in layout.cluster_index.items():
        n_kept = sum(1 for ps in probesets if ps in retained)
        if all(presence[cid].values()) and n_kept >= 2:
            out.add(cid)
    return out


def de_candidates(analyzable, splicing_min_p, layout, cluster_present, alpha_interaction=0.1):
    """Clusters to test for differential expression.

    ``splicing_min_p`` maps analyzable clusters to their splicing min-p (a
    cluster whose fit failed may be missing and then counts as not analysed).
    ``cluster_present`` maps cluster -> {group: present}.
    """
    out = set()
    for cid in layout.cluster_index:
        tested = cid in analyzable and cid in splicing_min_p
        if tested:
            if splicing_min_p[cid] > alpha_interaction:
                out.add(cid)
        elif any(cluster_present[cid].values()):
            out.add(cid)
    return out


@dataclass(frozen=True)
class PresenceReport:
    probeset_present: dict
    cluster_analyzable: dict
    per_group_calls: dict
    counts: tuple = field(default=())

    @property
    def n_probesets_present(self):
        return self.counts[0]

    def check(self):
        n_present = sum(self.probeset_present.values())
        n_analyzable = sum(self.cluster_analyzable.values())
        expected = (n_present, len(self.probeset_present),
                    n_analyzable, len(self.cluster_analyzable))
        if tuple(self.counts) != expected:
            raise AssertionError(f"presence counts {self.counts} != {expected}")

    def summary(self):
        pp, pt, ca, ct = self.counts
        return (f"{pp} probesets out of {pt} were deemed present; the number of "
                f"transcript clusters to analyse was reduced from {ct} to {ca}")


def presence_report(calls, sheet, layout, crosshyb=None, rule="any-group"):
    retained = filter_probesets(calls, sheet, crosshyb, rule)
    analyzable = filter_clusters(retained, calls, sheet, layout)
    probeset_present = {ps: ps in retained for ps in sorted(layout.probeset_index)}
    cluster_analyzable = {cid: cid in analyzable for cid in sorted(layout.cluster_index)}
    report = PresenceReport(
        probeset_present=probeset_present,
        cluster_analyzable=cluster_analyzable,
        per_group_calls=group_absent_counts(calls, sheet),
        counts=(len(retained), len(probeset_present), len(analyzable), len(cluster_analyzable)),
    )
    report.check()
    return report


def write_presence_report(report, sheet, layout, directory):
    """Write probeset and cluster TSVs plus the one-line summary."""
    groups = sheet.treatments
    with open(os.path.join(directory, "presence_probesets.tsv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(["probeset_id", "cluster_id"]
                           + [f"absent_{g}" for g in groups] + ["retained"]) + "\n")
        for ps, kept in report.probeset_present.items():
            absents = []
            for g in groups:
                c = report.per_group_calls.get((ps, g))
                absents.append("NA" if c is None else f"{c[0]}/{c[1]}")
            fh.write("\t".join([ps, layout.probeset_cluster[ps]] + absents
                               + [str(int(kept))]) + "\n")
    with open(os.path.join(directory, "presence_clusters.tsv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(["cluster_id", "n_probesets", "n_retained"]
                           + [f"present_{g}" for g in groups] + ["analyzable"]) + "\n")
        presence = _cluster_presence_from_counts(report.per_group_calls, sheet, layout)
        for cid, ok in report.cluster_analyzable.items():
            pss = layout.cluster_index[cid]
            kept = sum(report.probeset_present.get(ps, False) for ps in pss)
            flags = [str(int(presence[cid][g])) for g in groups]
            fh.write("\t".join([cid, str(len(pss)), str(kept)] + flags + [str(int(ok))]) + "\n")
    with open(os.path.join(directory, "presence_summary.txt"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(report.summary() + "\n")


@dataclass(frozen=True)
class FilterOutcome:
    """What the testing stages need from the filter, as read back from disk."""

    retained: frozenset
    analyzable: frozenset
    cluster_present: dict


def read_presence_report(directory, sheet):
    retained = set()
    with open(os.path.join(directory, "presence_probesets.tsv"), encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            f = line.rstrip("\r\n").split("\t")
            if f[-1] == "1":
                retained.add(f[0])
    analyzable = set()
    present = {}
    groups = sheet.treatments
    with open(os.path.join(directory, "presence_clusters.tsv"), encoding="utf-8") as fh:
        header = next(fh).rstrip("\r\n").split("\t")
        cols = {g: header.index(f"present_{g}") for g in groups}
        for line in fh:
            f = line.rstrip("\r\n").split("\t")
            present[f[0]] = {g: f[cols[g]] == "1" for g in groups}
            if f[-1] == "1":
                analyzable.add(f[0])
    return FilterOutcome(frozenset(retained), frozenset(analyzable), present)
