"""Readers and writers for the on-disk inputs of an exon-array analysis.

Formats
-------
CDL layout (TSV)
    Header ``probe_id<TAB>probeset_id<TAB>transcript_cluster_id``; one probe
    per line. Line ``i + 1`` defines probe index ``i``.
XARR (binary, little-endian)
    ``b"XARR"``, u32 version (1), u64 layout checksum, u32 probe count,
    u32 metadata length, metadata (UTF-8), then float32 intensities in
    layout order. No padding.
Sample sheet (TSV)
    Columns ``celFile``, ``replicate`` and ``treatment`` in any order; extra
    columns are ignored.
Annotation (CSV)
    NetAffx-style, leading ``#`` comment lines, quoted fields allowed.
Transcript models (TSV)
    ``gene_symbol, transcript_id, chrom, strand, exon_start, exon_stop``,
    one exon per row.
"""

import csv
import logging
import os
import struct
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from . import errors

logger = logging.getLogger(__name__)

LAYOUT_HEADER = ("probe_id", "probeset_id", "transcript_cluster_id")
XARR_MAGIC = b"XARR"
XARR_VERSION = 1
_XARR_HEADER = struct.Struct("<4sIQII")

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data):
    """64-bit FNV-1a hash of a byte string."""
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _MASK64
    return h


def file_checksum(path):
    with open(path, "rb") as fh:
        return fnv1a_64(fh.read())


def _text_lines(path):
    """Decode a UTF-8 text file into lines, accepting LF or CRLF.

    Trailing blank lines are dropped.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    text = raw.decode("utf-8")
    if text.startswith("\ufeff"):
        text = text[1:]
    lines = text.replace("\r\n", "\n").split("\n")
    while lines and not lines[-1].strip():
        lines.pop()
    return raw, lines


# ---------------------------------------------------------------------------
# chip layout

@dataclass(frozen=True)
class ChipLayout:
    """Probe -> probeset -> transcript cluster hierarchy.

    ``probes`` holds ``(probe_id, probeset_id, cluster_id)`` triples in
    source order. ``probeset_index`` maps a probeset to the indices of its
    probes, ``cluster_index`` maps a cluster to its probesets, both in
    first-appearance order.
    """

    probes: tuple
    probeset_index: MappingProxyType
    cluster_index: MappingProxyType
    checksum: int
    probeset_cluster: MappingProxyType = field(repr=False, default=None)

    @classmethod
    def from_probes(cls, probes, checksum):
        probes = tuple(tuple(p) for p in probes)
        ps_index = {}
        cl_index = {}
        ps_cluster = {}
        seen = set()
        for i, (probe_id, ps, cl) in enumerate(probes):
            if probe_id in seen:
                raise errors.DuplicateProbeId(probe_id, i + 2)
            seen.add(probe_id)
            owner = ps_cluster.setdefault(ps, cl)
            if owner != cl:
                raise errors.LayoutConflict(
                    f"probeset {ps!r} assigned to clusters {owner!r} and {cl!r} "
                    f"(line {i + 2})")
            if ps not in ps_index:
                ps_index[ps] = []
                cl_index.setdefault(cl, []).append(ps)
            ps_index[ps].append(i)
        return cls(
            probes=probes,
            probeset_index=MappingProxyType({k: tuple(v) for k, v in ps_index.items()}),
            cluster_index=MappingProxyType({k: tuple(v) for k, v in cl_index.items()}),
            checksum=checksum,
            probeset_cluster=MappingProxyType(ps_cluster),
        )

    @property
    def n_probes(self):
        return len(self.probes)

    def cluster_probes(self, cluster_id):
        """Probe indices of a cluster, in layout order, with probeset labels."""
        idx = []
        labels = []
        for ps in self.cluster_index[cluster_id]:
            for i in self.probeset_index[ps]:
                idx.append(i)
                labels.append(ps)
        order = np.argsort(idx, kind="stable")
        return [idx[k] for k in order], [labels[k] for k in order]


def parse_chip_layout(path):
    raw, lines = _text_lines(path)
    if not lines:
        raise errors.EmptyFile(f"{path} is empty")
    header = tuple(f.strip() for f in lines[0].split("\t"))
    if header != LAYOUT_HEADER:
        raise errors.MissingHeader(
            f"{path}: first line must be the tab-separated header "
            f"{' '.join(LAYOUT_HEADER)}")
    probes = []
    seen = {}
    for lineno, line in enumerate(lines[1:], start=2):
        fields = [f.strip() for f in line.split("\t")]
        if len(fields) != 3 or not all(fields):
            raise errors.MalformedLine(f"{path}:{lineno}: expected 3 non-empty fields")
        if fields[0] in seen:
            raise errors.DuplicateProbeId(fields[0], lineno)
        seen[fields[0]] = lineno
        probes.append(fields)
    if not probes:
        raise errors.EmptyFile(f"{path} has no probes")
    return ChipLayout.from_probes(probes, fnv1a_64(raw))


def write_chip_layout(layout, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(LAYOUT_HEADER) + "\n")
        for p in layout.probes:
            fh.write("\t".join(p) + "\n")


# ---------------------------------------------------------------------------
# XARR intensities

def encode_xarr(values, checksum, meta=""):
    values = np.asarray(values)
    if values.ndim != 1:
        raise errors.LengthMismatch("intensities must be a vector")
    out = values.astype("<f4")
    if not np.all(np.isfinite(values)) or not np.all(np.isfinite(out)):
        raise errors.NonFiniteValue("intensities must be finite (and fit in float32)")
    if np.any(out < 0):
        raise errors.NonFiniteValue("intensities must be non-negative")
    meta_bytes = meta.encode("utf-8")
    head = _XARR_HEADER.pack(XARR_MAGIC, XARR_VERSION, checksum, out.size, len(meta_bytes))
    return head + meta_bytes + out.tobytes()


def write_xarr(values, layout, path, meta=""):
    """Write one sample's intensities. Values are stored as float32."""
    values = np.asarray(values)
    if values.shape != (layout.n_probes,):
        raise errors.LengthMismatch(
            f"got {values.size} values for a layout of {layout.n_probes} probes")
    data = encode_xarr(values, layout.checksum, meta)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise errors.WriteFailure(f"cannot write {path}: {exc}") from exc


def read_xarr(path):
    """Return ``(checksum, meta, values)`` without checking a layout."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != XARR_MAGIC:
        raise errors.BadMagic(f"{path}: not an XARR file")
    if len(data) < _XARR_HEADER.size:
        raise errors.TruncatedFile(f"{path}: truncated header")
    _, version, checksum, n, meta_len = _XARR_HEADER.unpack_from(data)
    if version != XARR_VERSION:
        raise errors.UnsupportedVersion(f"{path}: XARR version {version}")
    start = _XARR_HEADER.size + meta_len
    end = start + 4 * n
    if len(data) < end:
        raise errors.TruncatedFile(f"{path}: expected {end} bytes, found {len(data)}")
    meta = data[_XARR_HEADER.size:start].decode("utf-8")
    values = np.frombuffer(data, dtype="<f4", count=n, offset=start)
    return checksum, meta, values


def parse_xarr(path, layout):
    checksum, _, values = read_xarr(path)
    if values.size != layout.n_probes:
        raise errors.ProbeCountMismatch(
            f"{path}: {values.size} probes, layout has {layout.n_probes}")
    if checksum != layout.checksum:
        raise errors.ChecksumMismatch(
            f"{path}: built against layout {checksum:016x}, "
            f"expected {layout.checksum:016x}")
    return values.astype(np.float64)


# ---------------------------------------------------------------------------
# samples and intensity matrices

@dataclass(frozen=True)
class Sample:
    cel_file: str
    replicate: str
    treatment: str


@dataclass(frozen=True)
class SampleSheet:
    samples: tuple

    @property
    def treatments(self):
        """Treatment labels in order of first appearance."""
        return tuple(dict.fromkeys(s.treatment for s in self.samples))

    @property
    def replicates(self):
        return tuple(dict.fromkeys(s.replicate for s in self.samples))

    @property
    def cel_files(self):
        return [s.cel_file for s in self.samples]

    def group_indices(self):
        """Map treatment -> column indices of its samples."""
        groups = {t: [] for t in self.treatments}
        for j, s in enumerate(self.samples):
            groups[s.treatment].append(j)
        return groups

    def sample_index(self, replicate, treatment):
        for j, s in enumerate(self.samples):
            if s.replicate == replicate and s.treatment == treatment:
                return j
        return None

    def is_balanced(self):
        return len(self.samples) == len(self.treatments) * len(self.replicates)


_SHEET_COLUMNS = {"celFile": "cel_file", "cel_file": "cel_file",
                  "replicate": "replicate", "treatment": "treatment"}


def parse_sample_sheet(path):
    _, lines = _text_lines(path)
    if not lines:
        raise errors.EmptyBody(f"{path} is empty")
    header = [h.strip() for h in lines[0].split("\t")]
    where = {}
    for k, h in enumerate(header):
        if h in _SHEET_COLUMNS:
            where.setdefault(_SHEET_COLUMNS[h], k)
    for col in ("cel_file", "replicate", "treatment"):
        if col not in where:
            raise errors.MissingColumn("celFile" if col == "cel_file" else col, path)
    samples = []
    pairs = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split("\t")]
        if len(fields) < len(header):
            fields += [""] * (len(header) - len(fields))
        s = Sample(fields[where["cel_file"]], fields[where["replicate"]],
                   fields[where["treatment"]])
        if not s.cel_file or not s.treatment or not s.replicate:
            raise errors.MalformedLine(f"{path}:{lineno}: empty required field")
        if (s.replicate, s.treatment) in pairs:
            raise errors.DuplicateReplicateTreatmentPair(
                f"{path}:{lineno}: replicate {s.replicate!r} appears twice "
                f"in treatment {s.treatment!r}")
        pairs.add((s.replicate, s.treatment))
        samples.append(s)
    if not samples:
        raise errors.EmptyBody(f"{path} has no samples")
    return SampleSheet(tuple(samples))


def write_sample_sheet(sheet, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("celFile\treplicate\ttreatment\n")
        for s in sheet.samples:
            fh.write(f"{s.cel_file}\t{s.replicate}\t{s.treatment}\n")


@dataclass(frozen=True, eq=False)
class IntensityMatrix:
    """Probes x samples intensities bound to one chip layout."""

    values: np.ndarray
    layout_checksum: int
    sample_names: tuple
    scale: str = "linear"
    stage: str = "raw"

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != len(self.sample_names):
            raise errors.LengthMismatch("matrix columns do not match sample names")
        if not np.all(np.isfinite(self.values)):
            raise errors.NonFiniteValue("intensities must be finite")
        if self.scale == "linear" and np.any(self.values < 0):
            raise errors.NonFiniteValue("linear intensities must be non-negative")

    @property
    def shape(self):
        return self.values.shape

    def check_layout(self, layout):
        if self.layout_checksum != layout.checksum or self.values.shape[0] != layout.n_probes:
            raise errors.LayoutMismatch(
                f"matrix bound to layout {self.layout_checksum:016x}, "
                f"got {layout.checksum:016x}")

    def replace(self, **changes):
        kw = dict(values=self.values, layout_checksum=self.layout_checksum,
                  sample_names=self.sample_names, scale=self.scale, stage=self.stage)
        kw.update(changes)
        return IntensityMatrix(**kw)


def load_dataset(directory, layout, sheet):
    columns = []
    for s in sheet.samples:
        path = os.path.join(directory, s.cel_file + ".xarr")
        if not os.path.exists(path):
            raise errors.SampleFileNotFound(s.cel_file, path)
        try:
            columns.append(parse_xarr(path, layout))
        except (errors.BadMagic, errors.UnsupportedVersion, errors.ProbeCountMismatch,
                errors.ChecksumMismatch, errors.TruncatedFile) as exc:
            tagged = type(exc)(f"sample {s.cel_file}: {exc}")
            tagged.sample = s.cel_file
            raise tagged from exc
    values = np.column_stack(columns) if columns else np.empty((layout.n_probes, 0))
    return IntensityMatrix(values, layout.checksum, tuple(sheet.cel_files))


# ---------------------------------------------------------------------------
# annotation

@dataclass(frozen=True)
class AnnotationRow:
    gene_symbols: tuple
    crosshyb_class: int = None


@dataclass(frozen=True)
class AnnotationTable:
    kind: str
    rows: MappingProxyType


_ANNOT_ID = {"transcript": "transcript_cluster_id", "probeset": "probeset_id"}
_ANNOT_REQUIRED = {"transcript": ("transcript_cluster_id", "gene_assignment"),
                   "probeset": ("probeset_id", "crosshyb_type")}


def split_gene_assignment(value):
    """Gene symbols of a NetAffx ``gene_assignment`` string, in source order."""
    value = value.strip()
    if not value or value == "---":
        return ()
    symbols = []
    for alt in value.split(" /// "):
        parts = alt.split(" // ")
        if len(parts) >= 2:
            sym = parts[1].strip()
            if sym and sym != "---":
                symbols.append(sym)
    return tuple(symbols)


def _parse_crosshyb(value, lineno, path):
    value = value.strip()
    if not value or value == "---":
        return None
    try:
        cls = int(value)
    except ValueError:
        raise errors.BadCrosshybValue(f"{path}:{lineno}: crosshyb_type {value!r}") from None
    if cls not in (1, 2, 3):
        raise errors.BadCrosshybValue(f"{path}:{lineno}: crosshyb_type {cls} not in 1..3")
    return cls


def _csv_fields(line, lineno):
    try:
        rows = list(csv.reader([line], strict=True))
    except csv.Error:
        raise errors.MalformedQuoting(lineno) from None
    return rows[0] if rows else []


def parse_annotation_csv(path, kind):
    if kind not in _ANNOT_ID:
        raise ValueError(f"unknown annotation kind {kind!r}")
    _, lines = _text_lines(path)
    k = 0
    while k < len(lines) and lines[k].startswith("#"):
        k += 1
    if k >= len(lines):
        raise errors.EmptyFile(f"{path} has no header")
    header = [h.strip() for h in _csv_fields(lines[k], k + 1)]
    for col in _ANNOT_REQUIRED[kind]:
        if col not in header:
            raise errors.MissingColumn(col, path)
    id_col = header.index(_ANNOT_ID[kind])
    ga_col = header.index("gene_assignment") if "gene_assignment" in header else None
    ch_col = header.index("crosshyb_type") if "crosshyb_type" in header else None
    rows = {}
    for lineno in range(k + 2, len(lines) + 1):
        line = lines[lineno - 1]
        if not line.strip():
            continue
        fields = _csv_fields(line, lineno)
        fields += [""] * (len(header) - len(fields))
        uid = fields[id_col].strip()
        if uid in rows:
            raise errors.DuplicateId(f"{path}:{lineno}: duplicate id {uid!r}")
        symbols = split_gene_assignment(fields[ga_col]) if ga_col is not None else ()
        crosshyb = (_parse_crosshyb(fields[ch_col], lineno, path)
                    if ch_col is not None else None)
        rows[uid] = AnnotationRow(symbols, crosshyb)
    return AnnotationTable(kind, MappingProxyType(rows))


# ---------------------------------------------------------------------------
# transcript models

TRANSCRIPT_HEADER = ("gene_symbol", "transcript_id", "chrom", "strand",
                     "exon_start", "exon_stop")


@dataclass(frozen=True)
class Transcript:
    transcript_id: str
    exons: tuple  # ((start, stop), ...) sorted by start


@dataclass(frozen=True)
class GeneModel:
    symbol: str
    strand: str
    chromosome: str
    transcripts: tuple


@dataclass(frozen=True)
class TranscriptModelSet:
    genes: MappingProxyType


def parse_transcript_models(path):
    _, lines = _text_lines(path)
    if not lines:
        raise errors.EmptyFile(f"{path} is empty")
    header = tuple(h.strip() for h in lines[0].split("\t"))
    if header != TRANSCRIPT_HEADER:
        raise errors.MissingHeader(f"{path}: expected header {'/'.join(TRANSCRIPT_HEADER)}")
    genes = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        f = [x.strip() for x in line.split("\t")]
        if len(f) != 6:
            raise errors.MalformedLine(f"{path}:{lineno}: expected 6 fields")
        symbol, tid, chrom, strand = f[:4]
        if strand in ("-", "−"):
            strand = "-"
        elif strand != "+":
            raise errors.BadStrand(f"{path}:{lineno}: strand {strand!r}")
        try:
            start, stop = int(f[4]), int(f[5])
        except ValueError:
            raise errors.MalformedLine(f"{path}:{lineno}: non-integer coordinates") from None
        if start >= stop:
            raise errors.InvertedExon(f"{path}:{lineno}: exon {start}-{stop}")
        g = genes.setdefault(symbol, {"strand": strand, "chrom": chrom, "tx": {}})
        if g["strand"] != strand or g["chrom"] != chrom:
            raise errors.MalformedLine(f"{path}:{lineno}: gene {symbol} changes strand/chrom")
        g["tx"].setdefault(tid, []).append((start, stop))
    out = {}
    for symbol, g in genes.items():
        transcripts = []
        for tid, exons in g["tx"].items():
            exons.sort()
            for (s0, e0), (s1, e1) in zip(exons, exons[1:]):
                if s1 < e0:
                    raise errors.OverlappingExons(
                        f"{path}: transcript {tid} exons {s0}-{e0} and {s1}-{e1} overlap")
            transcripts.append(Transcript(tid, tuple(exons)))
        out[symbol] = GeneModel(symbol, g["strand"], g["chrom"], tuple(transcripts))
    return TranscriptModelSet(MappingProxyType(out))
