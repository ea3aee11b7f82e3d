from types import MappingProxyType

import pytest

from exonarray.annotate import (GeneMap, annotate_results, cluster_gene_map,
                                write_dropped_clusters)
from exonarray.ingest import AnnotationRow, AnnotationTable
from exonarray.statmodels import GeneTestResult


def _table(rows, kind="transcript"):
    return AnnotationTable(kind, MappingProxyType(
        {cid: AnnotationRow(tuple(syms)) for cid, syms in rows.items()}))


TABLE = _table({"c1": ["GENE1"], "c2": ["GA", "GB"], "c3": ["GA", "GA"], "c4": []})


def test_gene_map_rules():
    gm = cluster_gene_map(TABLE)
    assert gm.mapped == {"c1": "GENE1", "c3": "GA"}
    assert gm.dropped == {"c2": "ambiguous", "c4": "unassigned"}
    assert set(gm.mapped) | set(gm.dropped) == set(TABLE.rows)
    assert not set(gm.mapped) & set(gm.dropped)


def test_wrong_kind():
    with pytest.raises(ValueError):
        cluster_gene_map(_table({}, kind="probeset"))


def _results():
    return [GeneTestResult(cid, "anosva_probe", s, p)
            for cid, s, p in [("c2", 9.0, 1e-6), ("c1", 4.0, 1e-3), ("c9", 1.0, 0.4)]]


def test_annotate_results():
    gm = cluster_gene_map(TABLE)
    rows = annotate_results(_results(), gm)
    assert [(r.result.cluster_id, r.gene_symbol, r.dropped_reason) for r in rows] == [
        ("c2", "-", "ambiguous"), ("c1", "GENE1", ""), ("c9", "-", "unassigned")]
    assert [r.result.p_value for r in rows] == [1e-6, 1e-3, 0.4]
    assert annotate_results([], gm) == []


def test_drop_ambiguous():
    rows = annotate_results(_results(), cluster_gene_map(TABLE), drop_ambiguous=True)
    assert [r.result.cluster_id for r in rows] == ["c1"]


def test_dropped_report(tmp_path):
    write_dropped_clusters(GeneMap({}, {"b": "unassigned", "a": "ambiguous"}),
                           tmp_path / "d.tsv")
    assert (tmp_path / "d.tsv").read_text() == "cluster_id\treason\na\tambiguous\nb\tunassigned\n"
