"""Command-line entry point: one subcommand per pipeline stage plus ``pipeline``.

Exit codes: 0 success, 1 validation error, 2 numeric failure. Log lines go
to standard error as ``LEVEL<TAB>stage<TAB>message``.
"""

import argparse
import logging
import sys

from . import errors
from .annotate import write_dropped_clusters
from .filterpresence import read_presence_report
from .parallel import worker_pool
from .pipeline import (firma_groups, load_gene_map, load_inputs, parse_config, read_min_p,
                       run_pipeline, stage_anosva_probe, stage_anosva_probeset, stage_de,
                       stage_filter, stage_firma, stage_ingest_check, stage_preprocess,
                       stage_report, stage_summarize)
from .preprocess import BgParams
from .simulate import SimSpec, simulate_dataset

logger = logging.getLogger("exonarray.cli")

SUBCOMMANDS = ("simulate", "ingest-check", "preprocess", "summarize", "filter",
               "anosva-probe", "anosva-probeset", "firma", "de", "annotate", "report",
               "pipeline")


class StageFormatter(logging.Formatter):
    def format(self, record):
        stage = getattr(record, "stage", None) or record.name.rsplit(".", 1)[-1]
        return f"{record.levelname}\t{stage}\t{record.getMessage()}"


def setup_logging(verbosity):
    root = logging.getLogger("exonarray")
    for h in list(root.handlers):
        root.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(StageFormatter())
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if verbosity > 1 else logging.INFO if verbosity else
                  logging.WARNING)
    root.propagate = False


def _common(p, normalized=False, presence=False, annotation=False):
    p.add_argument("--layout", required=True)
    p.add_argument("--sample-sheet", required=True)
    if normalized:
        p.add_argument("--normalized-dir", required=True)
    if presence:
        p.add_argument("--presence-dir", required=True,
                       help="directory holding the filter stage output")
    if annotation:
        p.add_argument("--annotation-transcript", default=None)
        p.add_argument("--drop-ambiguous", action="store_true")
    p.add_argument("--threads", type=int, default=1)


def build_parser():
    parser = argparse.ArgumentParser(prog="exonarray",
                                     description="Exon array splicing analysis pipeline")
    parser.add_argument("-v", "--verbose", action="count", default=1)
    parser.add_argument("-q", "--quiet", action="store_const", const=0, dest="verbose")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-clusters", type=int, default=50)
    p.add_argument("--probesets", type=int, default=4)
    p.add_argument("--probes", type=int, default=4)
    p.add_argument("--treatments", default="normal,tumour")
    p.add_argument("--replicates", type=int, default=5)
    p.add_argument("--noise-sd", type=float, default=0.2)
    p.add_argument("--affinity-sd", type=float, default=0.5)
    p.add_argument("--baseline", type=float, default=9.0)
    p.add_argument("--splicing-events", type=int, default=0)
    p.add_argument("--splicing-delta", type=float, default=1.0)
    p.add_argument("--de-events", type=int, default=0)
    p.add_argument("--de-delta", type=float, default=1.0)
    p.add_argument("--bg", default="40,4,1", help="background mu,sigma,alpha")
    p.add_argument("--seed", type=int, default=1)

    p = sub.add_parser("ingest-check", help="parse and validate all inputs")
    _common(p)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--annotation-transcript")
    p.add_argument("--annotation-probeset")
    p.add_argument("--transcript-models")

    p = sub.add_parser("preprocess", help="background correction and normalization")
    _common(p)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("summarize", help="probe-level model at probeset and cluster level")
    _common(p, normalized=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("filter", help="presence calls and cross-hybridization filter")
    _common(p)
    p.add_argument("--expression", required=True, help="probeset-level expression TSV")
    p.add_argument("--annotation-probeset")
    p.add_argument("--threshold", type=float, default=3.0)
    p.add_argument("--presence-rule", choices=("any-group", "all-groups"), default="any-group")
    p.add_argument("--out", required=True)

    p = sub.add_parser("anosva-probe", help="probe-level splicing test")
    _common(p, normalized=True, presence=True, annotation=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("anosva-probeset", help="probeset-level splicing test")
    _common(p, presence=True, annotation=True)
    p.add_argument("--expression", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("firma", help="FIRMA probeset ranking")
    _common(p, normalized=True, presence=True)
    p.add_argument("--annotation-transcript")
    p.add_argument("--out", required=True)

    p = sub.add_parser("de", help="differential expression on gated clusters")
    _common(p, normalized=True, presence=True, annotation=True)
    p.add_argument("--splicing-minp", required=True,
                   help="min-p file written by anosva-probe")
    p.add_argument("--interaction-alpha", type=float, default=0.1)
    p.add_argument("--de-denominator", choices=("interaction", "within"),
                   default="interaction")
    p.add_argument("--out", required=True)

    p = sub.add_parser("annotate", help="gene symbols and the dropped-cluster report")
    p.add_argument("--annotation-transcript", required=True)
    p.add_argument("--out", required=True, help="dropped-cluster TSV")

    p = sub.add_parser("report", help="profile plots for selected clusters")
    _common(p, annotation=True)
    p.add_argument("--normalized-dir")
    p.add_argument("--expression")
    p.add_argument("--transcript-models", required=True)
    p.add_argument("--level", choices=("probe", "probeset"), default="probe")
    p.add_argument("--genomic-coords", action="store_true")
    p.add_argument("--cluster", action="append", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("pipeline", help="run every stage from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--threads", type=int, default=None, help="overrides the config value")
    return parser


def _simulate(a):
    mu, sigma, alpha = (float(x) for x in a.bg.split(","))
    spec = SimSpec(n_clusters=a.n_clusters, probesets_per_cluster=a.probesets,
                   probes_per_probeset=a.probes, treatments=tuple(a.treatments.split(",")),
                   n_replicates=a.replicates, noise_sd=a.noise_sd, affinity_sd=a.affinity_sd,
                   baseline_log2=a.baseline, n_splicing_events=a.splicing_events,
                   splicing_delta=a.splicing_delta, n_de_events=a.de_events,
                   de_delta=a.de_delta, background=BgParams(mu, sigma, alpha), seed=a.seed)
    truth = simulate_dataset(spec, a.out)
    logger.info("wrote %s (%d splicing, %d DE events)", a.out, len(truth.spliced_clusters),
                len(truth.de_clusters), extra={"stage": "simulate"})


def dispatch(a):
    cmd = a.command
    if cmd == "simulate":
        return _simulate(a)
    if cmd == "annotate":
        gene_map = load_gene_map(a.annotation_transcript)
        write_dropped_clusters(gene_map, a.out)
        logger.info("%d clusters mapped, %d dropped", len(gene_map.mapped),
                    len(gene_map.dropped), extra={"stage": "annotate"})
        return
    if cmd == "pipeline":
        overrides = {"threads": str(a.threads)} if a.threads is not None else None
        run_pipeline(parse_config(a.config, overrides))
        return
    layout, sheet = load_inputs(a.layout, a.sample_sheet)
    gene_map = load_gene_map(getattr(a, "annotation_transcript", None))
    presence = (read_presence_report(a.presence_dir, sheet)
                if getattr(a, "presence_dir", None) else None)
    drop = getattr(a, "drop_ambiguous", False)
    with worker_pool(a.threads) as pool:
        if cmd == "ingest-check":
            for line in stage_ingest_check(layout, sheet, a.data_dir, a.annotation_transcript,
                                           a.annotation_probeset, a.transcript_models):
                print(line)
        elif cmd == "preprocess":
            stage_preprocess(layout, sheet, a.data_dir, a.out, pool)
        elif cmd == "summarize":
            stage_summarize(layout, sheet, a.normalized_dir, a.out, pool)
        elif cmd == "filter":
            stage_filter(layout, sheet, a.expression, a.annotation_probeset, a.out,
                         a.threshold, a.presence_rule)
        elif cmd == "anosva-probe":
            stage_anosva_probe(layout, sheet, a.normalized_dir, presence, a.out, gene_map,
                               pool, drop)
        elif cmd == "anosva-probeset":
            stage_anosva_probeset(layout, sheet, a.expression, presence, a.out, gene_map,
                                  pool, drop)
        elif cmd == "firma":
            firma_groups(sheet)
            stage_firma(layout, sheet, a.normalized_dir, presence, a.out, gene_map, pool)
        elif cmd == "de":
            stage_de(layout, sheet, a.normalized_dir, presence, read_min_p(a.splicing_minp),
                     a.out, gene_map, a.interaction_alpha, a.de_denominator, pool, drop)
        elif cmd == "report":
            if gene_map is None:
                raise errors.ValidationError("report needs --annotation-transcript")
            stage_report(layout, sheet, a.normalized_dir, a.transcript_models, gene_map,
                         a.cluster, a.out, a.level, a.expression, a.genomic_coords)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if argv and not argv[0].startswith("-") and argv[0] not in SUBCOMMANDS:
        setup_logging(1)
        exc = errors.UnknownSubcommand(f"unknown subcommand {argv[0]!r}")
        logger.error("%s", exc, extra={"stage": "cli"})
        return exc.exit_code
    a = parser.parse_args(argv)
    setup_logging(a.verbose)
    if a.command is None:
        parser.print_help(sys.stderr)
        return 1
    stage = a.command
    try:
        dispatch(a)
    except errors.ExonArrayError as exc:
        logger.error("%s: %s: %s", exc.module, type(exc).__name__, exc,
                     extra={"stage": stage})
        return exc.exit_code
    except FileNotFoundError as exc:
        logger.error("missing file: %s", exc, extra={"stage": stage})
        return 1
    except (FloatingPointError, ArithmeticError) as exc:
        logger.error("numeric failure: %s", exc, extra={"stage": stage})
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
