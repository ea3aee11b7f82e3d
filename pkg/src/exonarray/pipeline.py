"""Pipeline stages that read their inputs from disk and write their outputs.

Every stage here backs one CLI subcommand; ``run_pipeline`` calls them in
order and reads each stage's files back, so a full run is exactly the
composition of the subcommands. Per-cluster work goes through an ordered
map and every table is sorted before writing, so thread count never
changes the output bytes.
"""

import logging
import os
from dataclasses import dataclass

import numpy as np

from . import errors
from .annotate import GeneMap, annotate_results, cluster_gene_map, write_dropped_clusters
from .filterpresence import (de_candidates, presence_calls, presence_report,
                             read_presence_report, write_presence_report)
from .firma import firma_scores, paired_mean_diff, rank_firma, write_firma_ranking
from .ingest import (file_checksum, load_dataset, parse_annotation_csv, parse_chip_layout,
                     parse_sample_sheet, parse_transcript_models, read_xarr)
from .parallel import ordered_map, worker_pool
from .preprocess import dump_normalized, quantile_normalize, rma_background
from .report import profile_plot_data, render_svg, write_plot_json, write_result_table
from .statmodels import anosva_probe, anosva_probeset, bh_adjust, de_anova
from .summarize import (extract_expression, fit_plm, read_expression_tsv,
                        unit_probe_intensities, write_expression_tsv)

logger = logging.getLogger(__name__)


def _log(stage):
    return logging.getLogger(f"exonarray.{stage}")

REQUIRED_KEYS = ("data_dir", "layout", "sample_sheet", "annotation_transcript",
                 "annotation_probeset", "transcript_models", "output_dir")
DEFAULTS = {
    "presence_threshold": "3.0",
    "interaction_alpha": "0.1",
    "presence_rule": "any-group",
    "de_denominator": "interaction",
    "threads": "1",
    "seed": "0",
    "plot_top": "3",
    "drop_ambiguous": "false",
}


# ---------------------------------------------------------------------------
# config

@dataclass(frozen=True)
class Config:
    raw: dict        # key -> value exactly as written (plus defaults)
    base_dir: str

    def path(self, key):
        return os.path.normpath(os.path.join(self.base_dir, self.raw[key]))

    def get(self, key):
        return self.raw[key]

    def get_float(self, key):
        try:
            return float(self.raw[key])
        except ValueError:
            raise errors.ValidationError(f"config key {key!r}: not a number") from None

    def get_int(self, key):
        try:
            return int(self.raw[key])
        except ValueError:
            raise errors.ValidationError(f"config key {key!r}: not an integer") from None

    def get_bool(self, key):
        return self.raw[key].strip().lower() in ("1", "true", "yes")


def parse_config(path, overrides=None):
    """Read ``key=value`` lines; ``#`` starts a comment. Paths are relative
    to the config file's directory."""
    raw = dict(DEFAULTS)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise errors.ValidationError(f"{path}:{lineno}: expected key=value")
            key, value = (x.strip() for x in line.split("=", 1))
            if key not in REQUIRED_KEYS and key not in DEFAULTS:
                logger.warning("%s:%d: unknown config key %r ignored", path, lineno, key)
                continue
            raw[key] = value
    raw.update(overrides or {})
    for key in REQUIRED_KEYS:
        if key not in raw:
            raise errors.ConfigMissingKey(key)
    if raw["presence_rule"] not in ("any-group", "all-groups"):
        raise errors.ValidationError(f"presence_rule {raw['presence_rule']!r}")
    if raw["de_denominator"] not in ("interaction", "within"):
        raise errors.ValidationError(f"de_denominator {raw['de_denominator']!r}")
    return Config(raw, os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------------------
# small I/O helpers

def _open_w(path):
    try:
        return open(path, "w", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise errors.WriteFailure(f"cannot write {path}: {exc}") from exc


def _makedirs(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise errors.WriteFailure(f"cannot create {path}: {exc}") from exc


def load_inputs(layout_path, sheet_path):
    return parse_chip_layout(layout_path), parse_sample_sheet(sheet_path)


def load_gene_map(annotation_path):
    if annotation_path is None:
        return None
    return cluster_gene_map(parse_annotation_csv(annotation_path, "transcript"))


def load_normalized(directory, layout, sheet):
    for cel in sheet.cel_files:
        _, meta, _ = read_xarr(os.path.join(directory, cel + ".xarr"))
        if "stage=normalized" not in meta:
            raise errors.StageError(f"{cel}.xarr in {directory} is not a normalized array")
    return load_dataset(directory, layout, sheet).replace(stage="normalized")


# ---------------------------------------------------------------------------
# stages

def stage_ingest_check(layout, sheet, data_dir, annotation_transcript=None,
                       annotation_probeset=None, transcript_models=None):
    matrix = load_dataset(data_dir, layout, sheet)
    lines = [f"layout: {layout.n_probes} probes, {len(layout.probeset_index)} probesets, "
             f"{len(layout.cluster_index)} clusters",
             f"samples: {len(sheet.samples)} ({len(sheet.treatments)} treatments x "
             f"{len(sheet.replicates)} replicates, balanced={sheet.is_balanced()})",
             f"intensities: {matrix.values.shape[0]} x {matrix.values.shape[1]}"]
    if annotation_transcript:
        t = parse_annotation_csv(annotation_transcript, "transcript")
        lines.append(f"transcript annotation: {len(t.rows)} clusters")
    if annotation_probeset:
        p = parse_annotation_csv(annotation_probeset, "probeset")
        lines.append(f"probeset annotation: {len(p.rows)} probesets")
    if transcript_models:
        m = parse_transcript_models(transcript_models)
        lines.append(f"transcript models: {len(m.genes)} genes")
    return lines


def stage_preprocess(layout, sheet, data_dir, out_dir, pool=None):
    """Background-correct and normalize; writes ``normalized/`` and ``bg_params.tsv``."""
    matrix = load_dataset(data_dir, layout, sheet)
    corrected, params = rma_background(matrix, pool)
    normalized = quantile_normalize(corrected)
    _makedirs(out_dir)
    dump_normalized(normalized, layout, os.path.join(out_dir, "normalized"))
    with _open_w(os.path.join(out_dir, "bg_params.tsv")) as fh:
        fh.write("sample\tmu\tsigma\talpha\n")
        for name, p in zip(matrix.sample_names, params):
            fh.write(f"{name}\t{p.mu:.10g}\t{p.sigma:.10g}\t{p.alpha:.10g}\n")
    _log("preprocess").info("background corrected and normalized %d arrays", len(params))
    return params


def stage_summarize(layout, sheet, normalized_dir, out_dir, pool=None):
    """Probeset- and cluster-level chip effects as expression TSVs."""
    normalized = load_normalized(normalized_dir, layout, sheet)
    _makedirs(out_dir)
    for level in ("probeset", "cluster"):
        fits = fit_plm(normalized, layout, level, pool)
        expr = extract_expression(fits, sheet.cel_files)
        write_expression_tsv(expr, os.path.join(out_dir, f"expression_{level}.tsv"))
        _log("summarize").info("summarized %d %s units", len(fits), level)


def stage_filter(layout, sheet, expression_path, annotation_probeset, out_dir,
                 threshold=3.0, rule="any-group"):
    expr = read_expression_tsv(expression_path, "probeset")
    crosshyb = (parse_annotation_csv(annotation_probeset, "probeset")
                if annotation_probeset else None)
    calls = presence_calls(expr, sheet, threshold)
    report = presence_report(calls, sheet, layout, crosshyb, rule)
    _makedirs(out_dir)
    write_presence_report(report, sheet, layout, out_dir)
    _log("filterpresence").info("%s", report.summary())
    return report


@dataclass(frozen=True)
class Skipped:
    cluster_id: str
    method: str
    reason: str


def _guarded(method, fn):
    def work(cid):
        try:
            return fn(cid)
        except (errors.RankDeficient, errors.StatModelsError) as exc:
            _log(method.replace("_", "-")).warning("%s skipped: %s", cid, exc)
            return Skipped(cid, method, f"{type(exc).__name__}: {exc}")
    return work


def _split(outcomes):
    results = [r for r in outcomes if not isinstance(r, Skipped)]
    skipped = [r for r in outcomes if isinstance(r, Skipped)]
    return results, skipped


def _sort_by_p(results):
    return sorted(results, key=lambda r: (r.p_value, r.cluster_id))


def _write_table(results, gene_map, path, drop_ambiguous=False):
    if gene_map is None:
        gene_map = GeneMap({}, {})
    rows = annotate_results(results, gene_map, drop_ambiguous)
    write_result_table(rows, path)


def write_min_p(results, path):
    """Full-precision splicing min-p per cluster, consumed by DE gating."""
    with _open_w(path) as fh:
        fh.write("cluster_id\tmin_p\n")
        for r in sorted(results, key=lambda r: r.cluster_id):
            fh.write(f"{r.cluster_id}\t{r.p_value!r}\n")


def read_min_p(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            cid, p = line.rstrip("\r\n").split("\t")
            out[cid] = float(p)
    return out


def write_skipped(skipped, path):
    with _open_w(path) as fh:
        fh.write("cluster_id\tmethod\treason\n")
        for s in sorted(skipped, key=lambda s: (s.method, s.cluster_id)):
            fh.write(f"{s.cluster_id}\t{s.method}\t{s.reason}\n")


def stage_anosva_probe(layout, sheet, normalized_dir, presence, out_path, gene_map=None,
                       pool=None, drop_ambiguous=False):
    normalized = load_normalized(normalized_dir, layout, sheet)
    data = unit_probe_intensities(normalized, layout)

    def fit(cid):
        values, labels = data[cid]
        return anosva_probe(cid, values, labels, sheet, presence.retained)

    results, skipped = _split(ordered_map(_guarded("anosva_probe", fit),
                                          sorted(presence.analyzable), pool))
    results = _sort_by_p(results)
    _write_table(results, gene_map, out_path, drop_ambiguous)
    write_min_p(results, os.path.splitext(out_path)[0] + "_minp.tsv")
    _log("anosva-probe").info("ANOSVA probe level: %d clusters tested, %d skipped",
                              len(results), len(skipped))
    return results, skipped


def stage_anosva_probeset(layout, sheet, expression_path, presence, out_path, gene_map=None,
                          pool=None, drop_ambiguous=False):
    expr = read_expression_tsv(expression_path, "probeset")

    def fit(cid):
        pss = list(layout.cluster_index[cid])
        values = np.vstack([expr.row(ps) for ps in pss])
        return anosva_probeset(cid, values, pss, sheet, presence.retained)

    results, skipped = _split(ordered_map(_guarded("anosva_probeset", fit),
                                          sorted(presence.analyzable), pool))
    results = _sort_by_p(results)
    _write_table(results, gene_map, out_path, drop_ambiguous)
    _log("anosva-probeset").info("ANOSVA probeset level: %d clusters tested, %d skipped",
                                 len(results), len(skipped))
    return results, skipped


def firma_groups(sheet):
    """Groups compared by FIRMA: the second sheet group against the first."""
    if len(sheet.treatments) != 2:
        raise errors.ValidationError("FIRMA ranking needs exactly two treatment groups")
    return sheet.treatments[1], sheet.treatments[0]


def stage_firma(layout, sheet, normalized_dir, presence, out_path, gene_map=None, pool=None):
    normalized = load_normalized(normalized_dir, layout, sheet)
    fits = fit_plm(normalized, layout, "cluster", pool)
    group_a, group_b = firma_groups(sheet)
    diffs = {}
    n_degenerate = 0
    for fit in fits:
        scores = firma_scores(fit, layout)
        n_degenerate += scores.mad_degenerate
        diffs.update(paired_mean_diff(scores, sheet, group_a, group_b))
    if n_degenerate:
        _log("firma").warning("%d clusters with degenerate residual MAD, scores set to 0",
                              n_degenerate)
    mapped = gene_map.mapped if gene_map is not None else {}
    rows, genes = rank_firma(diffs, presence.retained, layout, mapped, presence.analyzable)
    write_firma_ranking(rows, out_path)
    write_firma_ranking(genes, os.path.splitext(out_path)[0] + "_genes.tsv")
    _log("firma").info("FIRMA: %d probesets ranked (%s - %s)", len(rows), group_a, group_b)
    return rows, genes


def stage_de(layout, sheet, normalized_dir, presence, min_p, out_path, gene_map=None,
             alpha=0.1, denominator="interaction", pool=None, drop_ambiguous=False):
    normalized = load_normalized(normalized_dir, layout, sheet)
    data = unit_probe_intensities(normalized, layout)
    candidates = de_candidates(presence.analyzable, min_p, layout, presence.cluster_present,
                               alpha)

    def fit(cid):
        values, labels = data[cid]
        if not any(lab in presence.retained for lab in labels):
            raise errors.StatModelsError("no retained probesets")
        return de_anova(cid, values, labels, sheet, presence.retained, denominator)

    results, skipped = _split(ordered_map(_guarded("de", fit), sorted(candidates), pool))
    adjusted = bh_adjust([r.p_value for r in results])
    results = _sort_by_p([r.with_adjusted(float(a)) for r, a in zip(results, adjusted)])
    _write_table(results, gene_map, out_path, drop_ambiguous)
    _log("de").info("DE: %d candidate clusters, %d tested, %d skipped",
                    len(candidates), len(results), len(skipped))
    return results, skipped


def stage_report(layout, sheet, normalized_dir, models_path, gene_map, cluster_ids, out_dir,
                 level="probe", expression_path=None, genomic_coords=False):
    models = parse_transcript_models(models_path)
    if level == "probe":
        source = load_normalized(normalized_dir, layout, sheet)
    else:
        source = read_expression_tsv(expression_path, "probeset")
    _makedirs(out_dir)
    written = []
    for cid in cluster_ids:
        data = profile_plot_data(cid, level, source, layout, sheet, models, gene_map,
                                 genomic_coords)
        stem = os.path.join(out_dir, f"{cid}_{data.gene_symbol}_{level}")
        write_plot_json(data, stem + ".json")
        render_svg(data, stem + ".svg")
        written.append(stem)
    return written


# ---------------------------------------------------------------------------
# full run

def write_manifest(cfg, inputs, path):
    """Config values as written and FNV-1a-64 checksums of every input file."""
    with _open_w(path) as fh:
        fh.write("kind\tkey\tvalue\n")
        for key in sorted(cfg.raw):
            if key in ("threads", "output_dir"):
                continue  # neither changes the content of any output
            fh.write(f"config\t{key}\t{cfg.raw[key]}\n")
        for name, p in inputs:
            fh.write(f"checksum\t{name}\t{file_checksum(p):016x}\n")


def run_pipeline(cfg, threads=None):
    threads = cfg.get_int("threads") if threads is None else threads
    out = cfg.path("output_dir")
    _makedirs(out)
    layout, sheet = load_inputs(cfg.path("layout"), cfg.path("sample_sheet"))
    data_dir = cfg.path("data_dir")
    inputs = [(k, cfg.path(k)) for k in ("layout", "sample_sheet", "annotation_transcript",
                                         "annotation_probeset", "transcript_models")]
    inputs += [(f"data/{c}.xarr", os.path.join(data_dir, c + ".xarr")) for c in sheet.cel_files]
    write_manifest(cfg, inputs, os.path.join(out, "manifest.tsv"))
    drop = cfg.get_bool("drop_ambiguous")
    gene_map = load_gene_map(cfg.path("annotation_transcript"))
    write_dropped_clusters(gene_map, os.path.join(out, "dropped_clusters.tsv"))
    logger.info("running with %d thread(s)", threads)

    with worker_pool(threads) as pool:
        stage_preprocess(layout, sheet, data_dir, out, pool)
        norm_dir = os.path.join(out, "normalized")
        stage_summarize(layout, sheet, norm_dir, out, pool)
        expr_path = os.path.join(out, "expression_probeset.tsv")
        stage_filter(layout, sheet, expr_path, cfg.path("annotation_probeset"), out,
                     cfg.get_float("presence_threshold"), cfg.get("presence_rule"))
        presence = read_presence_report(out, sheet)
        probe_res, sk1 = stage_anosva_probe(layout, sheet, norm_dir, presence,
                                            os.path.join(out, "anosva_probe.tsv"),
                                            gene_map, pool, drop)
        _, sk2 = stage_anosva_probeset(layout, sheet, expr_path, presence,
                                       os.path.join(out, "anosva_probeset.tsv"),
                                       gene_map, pool, drop)
        if len(sheet.treatments) == 2:
            stage_firma(layout, sheet, norm_dir, presence, os.path.join(out, "firma.tsv"),
                        gene_map, pool)
        else:
            logger.warning("FIRMA skipped: needs exactly two treatment groups")
        min_p = read_min_p(os.path.join(out, "anosva_probe_minp.tsv"))
        _, sk3 = stage_de(layout, sheet, norm_dir, presence, min_p,
                          os.path.join(out, "de.tsv"), gene_map,
                          cfg.get_float("interaction_alpha"), cfg.get("de_denominator"),
                          pool, drop)
    write_skipped(sk1 + sk2 + sk3, os.path.join(out, "skipped_clusters.tsv"))

    top = []
    models = parse_transcript_models(cfg.path("transcript_models"))
    for r in probe_res:
        if len(top) >= cfg.get_int("plot_top"):
            break
        sym = gene_map.mapped.get(r.cluster_id)
        if sym is not None and sym in models.genes:
            top.append(r.cluster_id)
    stage_report(layout, sheet, norm_dir, cfg.path("transcript_models"), gene_map, top,
                 os.path.join(out, "plots"))
    logger.info("pipeline finished, outputs in %s", out)
    return out
