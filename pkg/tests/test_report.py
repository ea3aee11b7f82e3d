import json
import os

import numpy as np
import pytest

from exonarray import errors
from exonarray.annotate import AnnotatedResult, GeneMap, cluster_gene_map
from exonarray.ingest import (IntensityMatrix, load_dataset, parse_annotation_csv,
                              parse_chip_layout, parse_sample_sheet, parse_transcript_models)
from exonarray.report import (PALETTE, format_p, profile_plot_data, render_svg, svg_string,
                              write_plot_json, write_result_table)
from exonarray.simulate import SimSpec, simulate_dataset
from exonarray.statmodels import GeneTestResult
from exonarray.summarize import ExpressionMatrix

from conftest import grid_layout_rows, paired_sheet, write_text

GOLDEN = os.path.join(os.path.dirname(__file__), "golden", "profile_G3_probe.svg")

MODELS = ("gene_symbol\ttranscript_id\tchrom\tstrand\texon_start\texon_stop\n"
          "G1\tG1.1\tchr1\t-\t100\t200\n"
          "G1\tG1.1\tchr1\t-\t500\t600\n"
          "G1\tG1.2\tchr1\t-\t500\t600\n")


@pytest.fixture
def small(make_layout, tmp_path):
    lay = make_layout(grid_layout_rows(1, 2, 4))
    sheet = paired_sheet(2)
    models = parse_transcript_models(write_text(tmp_path / "m.tsv", MODELS))
    values = np.exp2(np.arange(32, dtype=float).reshape(8, 4) / 4 + 5)
    m = IntensityMatrix(values, lay.checksum, tuple(sheet.cel_files), stage="normalized")
    return lay, sheet, models, m, GeneMap({"c1": "G1"}, {})


def test_probe_level_geometry(small):
    lay, sheet, models, m, gm = small
    d = profile_plot_data("c1", "probe", m, lay, sheet, models, gm)
    assert len(d.tracks) == 4 and all(len(t["y"]) == 8 for t in d.tracks)
    assert len(d.group_means) == 2
    assert d.probeset_boundaries == (4.5,)
    assert d.title == "G1 (-)"
    logv = np.log2(m.values)
    for g in d.group_means:
        cols = [j for j, s in enumerate(sheet.samples) if s.treatment == g["group"]]
        assert np.allclose(g["y"], logv[:, cols].mean(axis=1), rtol=0, atol=1e-12)
    assert d.gene_model == {"exons": [[100, 200], [500, 600]],
                            "links": [["ps1_1", 0], ["ps1_2", 1]]}
    assert d.transcript_models == ({"transcript_id": "G1.1", "exons": [0, 1]},
                                   {"transcript_id": "G1.2", "exons": [1]})


def test_probeset_level_geometry(small):
    lay, sheet, models, _, gm = small
    e = ExpressionMatrix(("ps1_1", "ps1_2"), np.array([[1.0, 2, 3, 4], [5, 6, 7, 8]]),
                         "probeset", tuple(sheet.cel_files))
    d = profile_plot_data("c1", "probeset", e, lay, sheet, models, gm, genomic_coords=True)
    assert [t["y"] for t in d.tracks] == [[1, 5], [2, 6], [3, 7], [4, 8]]
    assert d.group_means[0] == {"group": "normal", "y": [1.5, 5.5]}
    assert d.probeset_boundaries == (1.5,)
    assert d.transcript_models[0]["exons"] == [[100, 200], [500, 600]]


def test_each_probeset_in_one_segment(make_layout, tmp_path):
    rows = grid_layout_rows(1, 3, 2)
    rows = [rows[i] for i in (0, 2, 4, 1, 3, 5)]  # interleaved probesets
    lay = make_layout(rows)
    sheet = paired_sheet(1)
    models = parse_transcript_models(write_text(tmp_path / "m.tsv", MODELS))
    m = IntensityMatrix(np.ones((6, 2)), lay.checksum, tuple(sheet.cel_files),
                        stage="normalized")
    d = profile_plot_data("c1", "probe", m, lay, sheet, models, GeneMap({"c1": "G1"}, {}))
    assert d.point_probesets == ("ps1_1",) * 2 + ("ps1_2",) * 2 + ("ps1_3",) * 2
    assert d.probeset_boundaries == (2.5, 4.5)


def test_errors(small):
    lay, sheet, models, m, _ = small
    with pytest.raises(errors.ClusterNotMapped):
        profile_plot_data("c1", "probe", m, lay, sheet, models, GeneMap({}, {"c1": "ambiguous"}))
    with pytest.raises(errors.GeneNotInModels):
        profile_plot_data("c1", "probe", m, lay, sheet, models, GeneMap({"c1": "ZZZ"}, {}))


def test_svg_deterministic_and_coloured(small, tmp_path):
    lay, sheet, models, m, gm = small
    d = profile_plot_data("c1", "probe", m, lay, sheet, models, gm)
    render_svg(d, tmp_path / "a.svg")
    render_svg(profile_plot_data("c1", "probe", m, lay, sheet, models, gm), tmp_path / "b.svg")
    a = (tmp_path / "a.svg").read_bytes()
    assert a == (tmp_path / "b.svg").read_bytes()
    text = a.decode()
    assert PALETTE[0] == "#e41a1c" and PALETTE[1] == "#377eb8"
    assert text.count(f'stroke="{PALETTE[0]}" stroke-width="3"') >= 1
    assert ">G1 (-)</text>" in text


def test_svg_without_transcripts(small):
    lay, sheet, models, m, gm = small
    d = profile_plot_data("c1", "probe", m, lay, sheet, models, gm)
    bare = type(d)(**{**d.__dict__, "transcript_models": ()})
    text = svg_string(bare)
    assert "G1.1" not in text and text.count('fill="#444444"') == 2


def test_plot_json(small, tmp_path):
    lay, sheet, models, m, gm = small
    d = profile_plot_data("c1", "probe", m, lay, sheet, models, gm)
    write_plot_json(d, tmp_path / "p.json")
    back = json.loads((tmp_path / "p.json").read_text())
    assert back["title"] == "G1 (-)"
    assert back["probeset_boundaries"] == [4.5]
    assert set(back) >= {"cluster_id", "gene_symbol", "strand", "level", "groups",
                         "point_probesets", "tracks", "group_means", "gene_model",
                         "transcript_models", "genomic_coords"}


def _golden_plot(tmp_path):
    spec = SimSpec(n_clusters=4, n_splicing_events=1, n_replicates=3, seed=77)
    simulate_dataset(spec, tmp_path)
    lay = parse_chip_layout(tmp_path / "layout.tsv")
    sheet = parse_sample_sheet(tmp_path / "data" / "SampleInformation.txt")
    raw = load_dataset(tmp_path / "data", lay, sheet)
    gm = cluster_gene_map(parse_annotation_csv(tmp_path / "annotation" / "transcript.csv",
                                               "transcript"))
    models = parse_transcript_models(tmp_path / "transcript_models.tsv")
    m = raw.replace(stage="normalized")
    return profile_plot_data("TC000003", "probe", m, lay, sheet, models, gm)


def test_golden_svg(tmp_path):
    text = svg_string(_golden_plot(tmp_path))
    if os.environ.get("EXONARRAY_REGEN_GOLDEN"):
        with open(GOLDEN, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    with open(GOLDEN, encoding="utf-8", newline="") as fh:
        assert text == fh.read()


# ---------------------------------------------------------------------------
# tables

def test_format_p():
    assert format_p(0.0108999) == "1.09e-02"
    assert format_p(2.98e-10) == "2.98e-10"
    assert format_p(None) == "NA"


def _rows(n):
    return [AnnotatedResult(GeneTestResult(f"c{k}", "de", 10.0 / (k + 1), 10.0 ** -(k + 2),
                                           10.0 ** -(k + 1)), f"G{k}", "")
            for k in range(n)]


def test_result_table(tmp_path):
    write_result_table(_rows(3), tmp_path / "t.tsv", top_n=2)
    lines = (tmp_path / "t.tsv").read_text().splitlines()
    assert lines[0] == "rank\tcluster_id\tgene_symbol\tstatistic\tp_value\tp_adjusted\tmethod\tdropped_reason"
    assert len(lines) == 3
    assert lines[1] == "1\tc0\tG0\t10\t1.00e-02\t1.00e-01\tde\t-"
    write_result_table([], tmp_path / "e.tsv")
    assert len((tmp_path / "e.tsv").read_text().splitlines()) == 1
