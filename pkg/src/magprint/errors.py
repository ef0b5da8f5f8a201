"""Exception hierarchy shared by all magprint modules.

Every error carries the name of the module that raised it so the CLI can emit
machine-readable, module-qualified diagnostics on stderr.
"""

from __future__ import annotations


class MagprintError(Exception):
    """Base class for all domain errors. CLI maps these to exit code 1."""

    module = "magprint"


# stimulus
class InvalidSpec(MagprintError):
    module = "stimulus"


class SampleRateTooLow(MagprintError):
    module = "stimulus"


# simulator
class InvalidSignature(MagprintError):
    module = "simulator"


class InvalidPark(MagprintError):
    module = "simulator"


class ZeroSignalPower(MagprintError):
    module = "simulator"


# ingest
class ParseError(MagprintError):
    module = "ingest"


class NonMonotonicTimestamps(ParseError):
    module = "ingest"


class IrregularSampling(ParseError):
    module = "ingest"


class EmptyTrace(MagprintError):
    module = "ingest"


class MissingTraceFile(MagprintError):
    module = "ingest"


# preprocess
class SignalTooShort(MagprintError):
    module = "preprocess"


class NoResponseDetected(MagprintError):
    module = "preprocess"


class ZeroSegment(MagprintError):
    module = "preprocess"


class SegmentTooShort(MagprintError):
    module = "preprocess"


# features
class DegenerateSegment(MagprintError):
    module = "features"


class DimensionMismatch(MagprintError):
    module = "features"


# learn
class SingleClassInput(MagprintError):
    module = "learn"


class EmptyTrain(MagprintError):
    module = "learn"


class InvalidHyperParams(MagprintError):
    module = "learn"


class UnknownFeatureIndex(MagprintError):
    module = "learn"


# evaluation
class TooFewSamples(MagprintError):
    module = "evaluation"


class EmptyCounts(MagprintError):
    module = "evaluation"


class EmptyScores(MagprintError):
    module = "evaluation"


class MissingDay(MagprintError):
    module = "evaluation"


class LabelMismatch(MagprintError):
    module = "evaluation"


# persistence / cli
class IoError(MagprintError):
    module = "cli"


class FormatVersionMismatch(MagprintError):
    module = "cli"


class CorruptModel(MagprintError):
    module = "cli"


class UsageError(MagprintError):
    """Bad invocation. CLI maps this to exit code 2."""

    module = "cli"
