"""Result tables and per-gene profile plots (JSON data and SVG).

The plot shows one polyline per sample over probe (or probeset) ordinals,
thick group means, dotted probeset delimiters, and below it the gene model
(union of exons) with lines linking each probeset to its exon, followed by
one track per transcript. Transcript tracks use exon-rank space by default
so long introns do not squeeze the exons.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass
from xml.sax.saxutils import escape

import numpy as np

from . import errors
from .summarize import log2_intensities

logger = logging.getLogger(__name__)

PALETTE = ("#e41a1c", "#377eb8", "#4daf4a", "#984ea3",
           "#ff7f00", "#a65628", "#f781bf", "#999999")

RESULT_COLUMNS = ("rank", "cluster_id", "gene_symbol", "statistic", "p_value",
                  "p_adjusted", "method", "dropped_reason")


def format_p(p):
    if p is None or (isinstance(p, float) and math.isnan(p)):
        return "NA"
    return f"{p:.2e}"


def format_stat(x):
    if x is None:
        return "NA"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.4g}"


def write_result_table(rows, path, top_n=None):
    """Write annotated results as TSV, keeping the given order."""
    if top_n is not None:
        rows = rows[:top_n]
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\t".join(RESULT_COLUMNS) + "\n")
            for k, row in enumerate(rows, start=1):
                r = row.result
                fh.write("\t".join([
                    str(k), r.cluster_id, row.gene_symbol, format_stat(r.statistic),
                    format_p(r.p_value), format_p(r.p_adjusted), r.method,
                    row.dropped_reason or "-",
                ]) + "\n")
    except OSError as exc:
        raise errors.WriteFailure(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# profile plots

@dataclass(frozen=True)
class ProfilePlotData:
    cluster_id: str
    gene_symbol: str
    strand: str
    level: str
    groups: tuple
    point_probesets: tuple
    tracks: tuple          # ({"sample", "group", "y"}, ...)
    group_means: tuple     # ({"group", "y"}, ...)
    probeset_boundaries: tuple
    gene_model: dict       # {"exons": [[start, stop], ...], "links": [[probeset, exon], ...]}
    transcript_models: tuple = ()
    genomic_coords: bool = False

    @property
    def title(self):
        return f"{self.gene_symbol} ({self.strand})"

    def to_dict(self):
        d = asdict(self)
        d["title"] = self.title
        return d


def _merge_exons(transcripts):
    spans = sorted(e for t in transcripts for e in t.exons)
    merged = []
    for s, e in spans:
        if merged and s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return merged


def _exon_rank(exons, start, stop):
    for k, (s, e) in enumerate(exons):
        if start < e and s < stop:
            return k
    raise ValueError("transcript exon outside the gene model")


def profile_plot_data(cluster_id, level, source, layout, sheet, models, gene_map,
                      genomic_coords=False):
    """Plot data for one cluster.

    ``source`` is the normalized intensity matrix for ``level="probe"`` and
    the probeset expression matrix for ``level="probeset"``. Probesets are
    linked to gene-model exons in layout order against ascending genomic
    order, so reverse-strand genes number exons from the 3' end.
    """
    symbol = gene_map.mapped.get(cluster_id)
    if symbol is None:
        raise errors.ClusterNotMapped(f"{cluster_id} has no unique gene symbol")
    gene = models.genes.get(symbol)
    if gene is None:
        raise errors.GeneNotInModels(f"{symbol} ({cluster_id}) not in transcript models")
    probesets = tuple(layout.cluster_index[cluster_id])
    if level == "probe":
        # probes grouped by probeset so each probeset spans one segment
        idx = [i for ps in probesets for i in layout.probeset_index[ps]]
        labels = [ps for ps in probesets for _ in layout.probeset_index[ps]]
        source.check_layout(layout)
        values = log2_intensities(source.values[idx, :])
    elif level == "probeset":
        labels = list(probesets)
        values = np.vstack([source.row(ps) for ps in probesets])
    else:
        raise ValueError(f"level must be 'probe' or 'probeset', not {level!r}")

    groups = sheet.treatments
    tracks = tuple({"sample": s.cel_file, "group": s.treatment,
                    "y": [float(v) for v in values[:, j]]}
                   for j, s in enumerate(sheet.samples))
    means = []
    for g, cols in sheet.group_indices().items():
        means.append({"group": g, "y": [float(v) for v in values[:, cols].mean(axis=1)]})
    boundaries = tuple(float(k) + 0.5 for k in range(1, len(labels))
                       if labels[k] != labels[k - 1])

    exons = _merge_exons(gene.transcripts)
    links = [[ps, k] for k, ps in enumerate(probesets[: len(exons)])]
    if len(exons) != len(probesets):
        logger.info("%s: %d probesets but %d exons, linking the first %d",
                    cluster_id, len(probesets), len(exons), len(links))
    transcripts = []
    for t in gene.transcripts:
        if genomic_coords:
            pos = [[s, e] for s, e in t.exons]
        else:
            pos = [_exon_rank(exons, s, e) for s, e in t.exons]
        transcripts.append({"transcript_id": t.transcript_id, "exons": pos})
    return ProfilePlotData(
        cluster_id=cluster_id, gene_symbol=symbol, strand=gene.strand, level=level,
        groups=tuple(groups), point_probesets=tuple(labels), tracks=tracks,
        group_means=tuple(means), probeset_boundaries=boundaries,
        gene_model={"exons": exons, "links": links},
        transcript_models=tuple(transcripts), genomic_coords=genomic_coords,
    )


def write_plot_json(data, path):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(data.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise errors.WriteFailure(f"cannot write {path}: {exc}") from exc


def group_color(k):
    return PALETTE[k % len(PALETTE)]


WIDTH = 720
MARGIN = 60
PANEL_TOP = 40
PANEL_HEIGHT = 260
TRACK_GAP = 30
TRACK_HEIGHT = 14


def _f(v):
    return f"{v:.2f}"


def _polyline(xs, ys, color, width, opacity=None):
    pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in zip(xs, ys))
    extra = f' stroke-opacity="{opacity}"' if opacity is not None else ""
    return (f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"{extra}/>')


def svg_string(data):
    n = len(data.point_probesets)
    inner = WIDTH - 2 * MARGIN
    x_of = (lambda k: MARGIN + inner * (k - 0.5) / n) if n else (lambda k: MARGIN)
    ys = [v for t in data.tracks for v in t["y"]] + [v for m in data.group_means for v in m["y"]]
    lo, hi = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    panel_bottom = PANEL_TOP + PANEL_HEIGHT

    def y_of(v):
        return panel_bottom - PANEL_HEIGHT * (v - lo) / (hi - lo)

    gene_y = panel_bottom + 3 * TRACK_GAP
    n_tx = len(data.transcript_models)
    height = gene_y + TRACK_HEIGHT + (n_tx + 1) * TRACK_GAP
    color = {g: group_color(k) for k, g in enumerate(data.groups)}
    xs = [x_of(k) for k in range(1, n + 1)]

    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" '
           f'height="{height}" viewBox="0 0 {WIDTH} {height}">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="white"/>',
           f'<text x="{WIDTH // 2}" y="24" font-family="sans-serif" font-size="16" '
           f'text-anchor="middle">{escape(data.title)}</text>',
           f'<rect x="{MARGIN}" y="{PANEL_TOP}" width="{inner}" height="{PANEL_HEIGHT}" '
           f'fill="none" stroke="black" stroke-width="1"/>']
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        out.append(f'<text x="{MARGIN - 6}" y="{_f(y_of(v) + 4)}" font-family="sans-serif" '
                   f'font-size="10" text-anchor="end">{v:.1f}</text>')
    for b in data.probeset_boundaries:
        x = _f(MARGIN + inner * b / n)
        out.append(f'<line x1="{x}" y1="{PANEL_TOP}" x2="{x}" y2="{panel_bottom}" '
                   f'stroke="grey" stroke-width="1" stroke-dasharray="3,3"/>')
    for t in data.tracks:
        out.append(_polyline(xs, [y_of(v) for v in t["y"]], color[t["group"]], 1, 0.6))
    for m in data.group_means:
        out.append(_polyline(xs, [y_of(v) for v in m["y"]], color[m["group"]], 3))
    for k, g in enumerate(data.groups):
        lx = MARGIN + 10 + 110 * k
        out.append(f'<line x1="{lx}" y1="{PANEL_TOP - 8}" x2="{lx + 20}" y2="{PANEL_TOP - 8}" '
                   f'stroke="{color[g]}" stroke-width="3"/>')
        out.append(f'<text x="{lx + 24}" y="{PANEL_TOP - 4}" font-family="sans-serif" '
                   f'font-size="11">{escape(g)}</text>')

    exons = data.gene_model["exons"]
    n_ex = len(exons)
    slot = inner / max(n_ex, 1)

    def exon_box(k, span=None):
        if data.genomic_coords and span is not None and exons:
            g0, g1 = exons[0][0], exons[-1][1]
            scale = inner / max(g1 - g0, 1)
            return MARGIN + (span[0] - g0) * scale, max((span[1] - span[0]) * scale, 1.0)
        return MARGIN + slot * k + 0.15 * slot, 0.7 * slot

    out.append(f'<text x="{MARGIN - 6}" y="{gene_y + 11}" font-family="sans-serif" '
               f'font-size="10" text-anchor="end">gene</text>')
    out.append(f'<line x1="{MARGIN}" y1="{gene_y + TRACK_HEIGHT / 2}" x2="{WIDTH - MARGIN}" '
               f'y2="{gene_y + TRACK_HEIGHT / 2}" stroke="black" stroke-width="1"/>')
    centres = []
    for k, span in enumerate(exons):
        x, w = exon_box(k, span)
        centres.append(x + w / 2)
        out.append(f'<rect x="{_f(x)}" y="{gene_y}" width="{_f(w)}" height="{TRACK_HEIGHT}" '
                   f'fill="#444444"/>')
    ps_centre = {}
    for k, ps in enumerate(data.point_probesets, start=1):
        ps_centre.setdefault(ps, []).append(x_of(k))
    for ps, k in data.gene_model["links"]:
        pts = ps_centre.get(ps)
        if not pts:
            continue
        x0 = sum(pts) / len(pts)
        out.append(f'<line x1="{_f(x0)}" y1="{panel_bottom}" x2="{_f(centres[k])}" '
                   f'y2="{gene_y}" stroke="#888888" stroke-width="0.5"/>')
    for i, tx in enumerate(data.transcript_models):
        ty = gene_y + (i + 1) * TRACK_GAP
        out.append(f'<text x="{MARGIN - 6}" y="{ty + 11}" font-family="sans-serif" '
                   f'font-size="10" text-anchor="end">{escape(tx["transcript_id"])}</text>')
        boxes = []
        for e in tx["exons"]:
            if data.genomic_coords:
                boxes.append(exon_box(None, e))
            else:
                boxes.append(exon_box(e))
        if boxes:
            x0 = boxes[0][0]
            x1 = boxes[-1][0] + boxes[-1][1]
            out.append(f'<line x1="{_f(x0)}" y1="{ty + TRACK_HEIGHT / 2}" x2="{_f(x1)}" '
                       f'y2="{ty + TRACK_HEIGHT / 2}" stroke="black" stroke-width="1"/>')
        for x, w in boxes:
            out.append(f'<rect x="{_f(x)}" y="{ty}" width="{_f(w)}" height="{TRACK_HEIGHT}" '
                       f'fill="#777777"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_svg(data, path):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(svg_string(data))
    except OSError as exc:
        raise errors.WriteFailure(f"cannot write {path}: {exc}") from exc
