"""Synthetic exon-array datasets with planted splicing and expression events.

Log2 intensity of probe ``p`` (probeset ``e``) on the chip of replicate ``r``
under treatment ``t``::

    baseline + affinity[p] + I[r] + C[t, r] + splice[e, t] + de[t] + noise

The linear value ``2 ** log2`` plus normal background (clipped at zero) is
written to disk. Background-control clusters carry exponential signal only,
so each array shows the background peak that RMA correction expects.

Draw order from the seeded stream: probeset counts per cluster (only for a
range), event clusters, each splice event's probeset and group, each DE
event's group, replicate effects, chip effects (treatment-major), probe
affinities (layout order), noise (sample-major), control-probe signal
(sample-major), background (sample-major).
"""

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import errors
from .ingest import (ChipLayout, Sample, SampleSheet, fnv1a_64, write_chip_layout,
                     write_sample_sheet, write_xarr)
from .preprocess import BgParams
from .rng import SplitMix64

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimSpec:
    n_clusters: int = 50
    probesets_per_cluster: object = 4  # int or (low, high) inclusive
    probes_per_probeset: int = 4
    treatments: tuple = ("normal", "tumour")
    n_replicates: int = 5
    noise_sd: float = 0.2
    affinity_sd: float = 0.5
    baseline_log2: float = 9.0
    n_splicing_events: int = 0
    splicing_delta: float = 1.0
    n_de_events: int = 0
    de_delta: float = 1.0
    background: BgParams = field(default_factory=lambda: BgParams(40.0, 4.0, 1.0))
    seed: int = 1
    random_effect_sd: float = 0.1
    n_background_clusters: int = None  # default max(8, n_clusters // 2)

    def __post_init__(self):
        if self.n_splicing_events + self.n_de_events > self.n_clusters:
            raise ValueError("more events than clusters")
        if min(self.splicing_delta, self.de_delta) < 0:
            raise ValueError("deltas must be non-negative")
        if min(self.noise_sd, self.affinity_sd, self.random_effect_sd) < 0:
            raise ValueError("standard deviations must be non-negative")
        if self.n_replicates < 1 or len(self.treatments) < 1:
            raise ValueError("need at least one replicate and one treatment")

    @property
    def n_controls(self):
        if self.n_background_clusters is not None:
            return self.n_background_clusters
        # enough pure-background probes that the density mode is the background
        # peak even on small arrays
        return max(8, self.n_clusters // 2) if self.background is not None else 0


@dataclass(frozen=True)
class GroundTruth:
    spliced_clusters: dict  # cluster -> (probeset, delta, group)
    de_clusters: dict       # cluster -> (delta, group)


def cluster_id(i):
    return f"TC{i:06d}"


def control_id(i):
    return f"BG{i:06d}"


def sample_name(treatment, replicate):
    return f"{treatment}_{replicate}"


def _structure(spec, rng):
    """Cluster -> list of probeset ids, for gene clusters then controls."""
    ppc = spec.probesets_per_cluster
    clusters = []
    for i in range(1, spec.n_clusters + 1):
        if isinstance(ppc, (tuple, list)):
            n_ps = ppc[0] + rng.below(ppc[1] - ppc[0] + 1)
        else:
            n_ps = int(ppc)
        clusters.append((cluster_id(i), [f"PS{i:06d}{e:02d}" for e in range(1, n_ps + 1)]))
    controls = []
    n_ctrl_ps = ppc[1] if isinstance(ppc, (tuple, list)) else int(ppc)
    for i in range(1, spec.n_controls + 1):
        controls.append((control_id(i), [f"BP{i:06d}{e:02d}" for e in range(1, n_ctrl_ps + 1)]))
    return clusters, controls


def _layout(clusters, controls, probes_per_probeset):
    probes = []
    for cid, pss in clusters + controls:
        for ps in pss:
            for _ in range(probes_per_probeset):
                probes.append((f"P{len(probes) + 1:08d}", ps, cid))
    lines = ["\t".join(("probe_id", "probeset_id", "transcript_cluster_id"))]
    lines += ["\t".join(p) for p in probes]
    raw = ("\n".join(lines) + "\n").encode("utf-8")
    return ChipLayout.from_probes(probes, fnv1a_64(raw))


def generate(spec):
    """Build layout, sheet, raw intensities and truth in memory."""
    rng = SplitMix64(spec.seed)
    clusters, controls = _structure(spec, rng)
    layout = _layout(clusters, controls, spec.probes_per_probeset)
    treatments = tuple(spec.treatments)
    reps = [str(r) for r in range(1, spec.n_replicates + 1)]
    sheet = SampleSheet(tuple(Sample(sample_name(t, r), r, t) for t in treatments for r in reps))

    n_events = spec.n_splicing_events + spec.n_de_events
    chosen = rng.sample_without_replacement(spec.n_clusters, n_events)
    spliced = {}
    for k in chosen[: spec.n_splicing_events]:
        cid, pss = clusters[k]
        ps = pss[rng.below(len(pss))]
        group = treatments[rng.below(len(treatments))]
        spliced[cid] = (ps, spec.splicing_delta, group)
    de = {}
    for k in chosen[spec.n_splicing_events:]:
        cid, _ = clusters[k]
        de[cid] = (spec.de_delta, treatments[rng.below(len(treatments))])

    n_probes = layout.n_probes
    n_samples = len(sheet.samples)
    rep_effect = spec.random_effect_sd * rng.normal(len(reps))
    chip_effect = spec.random_effect_sd * rng.normal(len(treatments) * len(reps))
    affinity = spec.affinity_sd * rng.normal(n_probes)
    noise = spec.noise_sd * rng.normal(n_probes * n_samples).reshape(n_samples, n_probes).T

    gene_rows = np.array([not p[2].startswith("BG") for p in layout.probes])
    log2 = np.empty((n_probes, n_samples))
    for j, s in enumerate(sheet.samples):
        t = treatments.index(s.treatment)
        r = reps.index(s.replicate)
        log2[:, j] = (spec.baseline_log2 + affinity + rep_effect[r]
                      + chip_effect[t * len(reps) + r] + noise[:, j])
    for cid, (ps, delta, group) in spliced.items():
        cols = [j for j, s in enumerate(sheet.samples) if s.treatment == group]
        rows = list(layout.probeset_index[ps])
        log2[np.ix_(rows, cols)] += delta
    for cid, (delta, group) in de.items():
        cols = [j for j, s in enumerate(sheet.samples) if s.treatment == group]
        rows, _ = layout.cluster_probes(cid)
        log2[np.ix_(rows, cols)] += delta

    linear = np.where(gene_rows[:, None], np.exp2(log2), 0.0)
    ctrl = np.flatnonzero(~gene_rows)
    if ctrl.size:
        bg_alpha = spec.background.alpha if spec.background is not None else 1.0
        signal = rng.exponential(bg_alpha, ctrl.size * n_samples)
        linear[ctrl, :] = signal.reshape(n_samples, ctrl.size).T
    if spec.background is not None:
        bg = rng.normal(n_probes * n_samples).reshape(n_samples, n_probes).T
        linear = linear + spec.background.mu + spec.background.sigma * bg
    linear = np.maximum(linear, 0.0)
    truth = GroundTruth(spliced, de)
    return layout, sheet, linear, truth, clusters


def _gene_symbol(cid):
    return "G" + str(int(cid[2:]))


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def simulate_dataset(spec, out_dir):
    """Write a complete synthetic dataset under ``out_dir``; return the truth."""
    layout, sheet, linear, truth, clusters = generate(spec)
    try:
        data_dir = os.path.join(out_dir, "data")
        os.makedirs(data_dir, exist_ok=True)
        write_chip_layout(layout, os.path.join(out_dir, "layout.tsv"))
        write_sample_sheet(sheet, os.path.join(data_dir, "SampleInformation.txt"))
        for j, s in enumerate(sheet.samples):
            write_xarr(linear[:, j], layout, os.path.join(data_dir, s.cel_file + ".xarr"),
                       meta=f"simulated seed={spec.seed}")
        _write_annotations(layout, os.path.join(out_dir, "annotation"))
        _write_models(clusters, truth, os.path.join(out_dir, "transcript_models.tsv"))
        write_truth(truth, os.path.join(out_dir, "truth.tsv"))
        _write(os.path.join(out_dir, "pipeline.conf"), "\n".join([
            "data_dir=data",
            "layout=layout.tsv",
            "sample_sheet=data/SampleInformation.txt",
            "annotation_transcript=annotation/transcript.csv",
            "annotation_probeset=annotation/probeset.csv",
            "transcript_models=transcript_models.tsv",
            "output_dir=results",
            f"seed={spec.seed}",
        ]) + "\n")
    except OSError as exc:
        raise errors.WriteFailure(f"cannot write simulated dataset: {exc}") from exc
    return truth


def _write_annotations(layout, directory):
    os.makedirs(directory, exist_ok=True)
    tx = ["# synthetic transcript cluster annotation",
          "# gene_assignment follows accession // symbol // description",
          "transcript_cluster_id,gene_assignment"]
    for cid in sorted(layout.cluster_index):
        if cid.startswith("BG"):
            tx.append(f"{cid},---")
        else:
            sym = _gene_symbol(cid)
            tx.append(f'{cid},"NM_{cid[2:]} // {sym} // synthetic gene {sym}"')
    _write(os.path.join(directory, "transcript.csv"), "\n".join(tx) + "\n")
    ps_lines = ["# synthetic probeset annotation",
                "probeset_id,transcript_cluster_id,crosshyb_type"]
    for ps in sorted(layout.probeset_index):
        ps_lines.append(f"{ps},{layout.probeset_cluster[ps]},1")
    _write(os.path.join(directory, "probeset.csv"), "\n".join(ps_lines) + "\n")


EXON_LENGTH = 150
EXON_SPACING = 1000


def _write_models(clusters, truth, path):
    lines = ["\t".join(("gene_symbol", "transcript_id", "chrom", "strand",
                        "exon_start", "exon_stop"))]
    for cid, pss in clusters:
        i = int(cid[2:])
        sym = _gene_symbol(cid)
        strand = "+" if i % 2 else "-"
        start0 = i * 100000
        exons = [(start0 + k * EXON_SPACING, start0 + k * EXON_SPACING + EXON_LENGTH)
                 for k in range(len(pss))]
        for s, e in exons:
            lines.append(f"{sym}\t{sym}.1\tchr1\t{strand}\t{s}\t{e}")
        if cid in truth.spliced_clusters and len(pss) > 1:
            skip = pss.index(truth.spliced_clusters[cid][0])
            for k, (s, e) in enumerate(exons):
                if k != skip:
                    lines.append(f"{sym}\t{sym}.2\tchr1\t{strand}\t{s}\t{e}")
    _write(path, "\n".join(lines) + "\n")


def write_truth(truth, path):
    lines = ["cluster_id\tevent_type\tprobeset_id\tdelta\tgroup"]
    for cid in sorted(truth.spliced_clusters):
        ps, delta, group = truth.spliced_clusters[cid]
        lines.append(f"{cid}\tsplice\t{ps}\t{delta:g}\t{group}")
    for cid in sorted(truth.de_clusters):
        delta, group = truth.de_clusters[cid]
        lines.append(f"{cid}\tde\t-\t{delta:g}\t{group}")
    _write(path, "\n".join(lines) + "\n")


def read_truth(path):
    spliced, de = {}, {}
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            if not line.strip():
                continue
            cid, kind, ps, delta, group = line.rstrip("\r\n").split("\t")
            if kind == "splice":
                spliced[cid] = (ps, float(delta), group)
            else:
                de[cid] = (float(delta), group)
    return GroundTruth(spliced, de)
