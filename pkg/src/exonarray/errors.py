"""Exception hierarchy.

Every error carries the pipeline module it originated in so the command line
can prefix messages, plus the process exit code the command line should use
(1 for validation problems, 2 for numeric failures).
"""


class ExonArrayError(Exception):
    module = "exonarray"
    exit_code = 1


class ValidationError(ExonArrayError):
    exit_code = 1


class NumericError(ExonArrayError):
    exit_code = 2


# ingest

class IngestError(ValidationError):
    module = "ingest"


class MissingHeader(IngestError):
    pass


class DuplicateProbeId(IngestError):
    def __init__(self, probe_id, line):
        super().__init__(f"duplicate probe id {probe_id!r} at line {line}")
        self.probe_id = probe_id
        self.line = line


class EmptyFile(IngestError):
    pass


class BadMagic(IngestError):
    pass


class UnsupportedVersion(IngestError):
    pass


class ProbeCountMismatch(IngestError):
    pass


class ChecksumMismatch(IngestError):
    pass


class TruncatedFile(IngestError):
    pass


class LengthMismatch(IngestError):
    pass


class NonFiniteValue(IngestError):
    pass


class MissingColumn(IngestError):
    def __init__(self, column, path=None):
        where = f" in {path}" if path else ""
        super().__init__(f"missing column {column!r}{where}")
        self.column = column


class DuplicateReplicateTreatmentPair(IngestError):
    pass


class EmptyBody(IngestError):
    pass


class SampleFileNotFound(IngestError, FileNotFoundError):
    def __init__(self, sample, path):
        super().__init__(f"no intensity file for sample {sample!r}: {path}")
        self.sample = sample


class MalformedQuoting(IngestError):
    def __init__(self, line):
        super().__init__(f"unterminated quote starting at line {line}")
        self.line = line


class BadCrosshybValue(IngestError):
    pass


class BadStrand(IngestError):
    pass


class InvertedExon(IngestError):
    pass


class OverlappingExons(IngestError):
    pass


class LayoutConflict(IngestError):
    pass


class DuplicateId(IngestError):
    pass


class MalformedLine(IngestError):
    pass


class LayoutMismatch(ValidationError):
    """An intensity matrix was bound to a different chip layout."""


# preprocess

class PreprocessError(ExonArrayError):
    module = "preprocess"


class TooFewProbes(PreprocessError, ValidationError):
    pass


class DegenerateColumn(PreprocessError, NumericError):
    pass


class EmptyMatrix(PreprocessError, ValidationError):
    pass


class StageError(ValidationError):
    pass


# summarize

class SummarizeError(ExonArrayError):
    module = "summarize"


class NonFiniteInput(SummarizeError, NumericError):
    pass


class EmptyUnit(SummarizeError, ValidationError):
    pass


class MixedLevels(SummarizeError, ValidationError):
    pass


# statmodels

class StatModelsError(ExonArrayError):
    module = "statmodels"


class SingleProbesetForAnosva(StatModelsError, ValidationError):
    pass


class RankDeficient(StatModelsError, NumericError):
    def __init__(self, column):
        super().__init__(f"design is rank deficient at column {column!r}")
        self.column = column


class NonPositiveDf(StatModelsError, ValidationError):
    pass


class OutOfRangeP(StatModelsError, ValidationError):
    pass


# firma

class UnpairedDesign(ValidationError):
    module = "firma"

    def __init__(self, replicate):
        super().__init__(f"replicate {replicate!r} is not present in both groups")
        self.replicate = replicate


# simulate / report

class WriteFailure(ExonArrayError):
    pass


class ReportError(ValidationError):
    module = "report"


class GeneNotInModels(ReportError):
    pass


class ClusterNotMapped(ReportError):
    pass


# cli

class UnknownSubcommand(ValidationError):
    module = "cli"


class ConfigMissingKey(ValidationError):
    module = "cli"

    def __init__(self, key):
        super().__init__(f"config is missing required key {key!r}")
        self.key = key
