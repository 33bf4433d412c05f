"""Exception hierarchy. Every error carries a machine-readable ``code``."""


class PumpwatchError(Exception):
    code = "PumpwatchError"


# validation of domain values
class ValidationError(PumpwatchError):
    code = "ValidationError"


class UnsortedLadder(ValidationError):
    code = "UnsortedLadder"


class NonPositiveValue(ValidationError):
    code = "NonPositiveValue"


class EmptyBothSides(ValidationError):
    code = "EmptyBothSides"


# ingestion
class IngestError(PumpwatchError):
    code = "IngestError"

    def __init__(self, message, *, path=None, offset=None):
        self.detail = message
        self.path = path
        self.offset = offset
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class MalformedRecord(IngestError):
    code = "MalformedRecord"


class SchemaViolation(IngestError):
    code = "SchemaViolation"


class OutOfOrderInput(IngestError):
    code = "OutOfOrderInput"


class IoFailure(PumpwatchError):
    code = "IoFailure"


# metric computation; compute_metric_vector turns these into absent values
class MetricError(PumpwatchError):
    code = "MetricError"


class EmptySide(MetricError):
    code = "EmptySide"


class ZeroDenominator(MetricError):
    code = "ZeroDenominator"


class InsufficientDepth(MetricError):
    code = "InsufficientDepth"


class MissingSide(MetricError):
    code = "MissingSide"


class EmptyWindow(MetricError):
    code = "EmptyWindow"


class SymbolMismatch(PumpwatchError):
    code = "SymbolMismatch"


# baselines and ranking
class NonMonotonicTime(PumpwatchError):
    code = "NonMonotonicTime"


class NoScorableMetrics(PumpwatchError):
    code = "NoScorableMetrics"


class EmptyInput(PumpwatchError):
    code = "EmptyInput"


# filtering and events
class DuplicateSymbol(PumpwatchError):
    code = "DuplicateSymbol"


class MissingExtraction(PumpwatchError):
    code = "MissingExtraction"


class InsufficientHistory(PumpwatchError):
    code = "InsufficientHistory"


class UnknownTarget(PumpwatchError):
    code = "UnknownTarget"


class InsufficientCoverage(PumpwatchError):
    code = "InsufficientCoverage"


# simulator
class InvalidConfig(PumpwatchError):
    code = "InvalidConfig"


class WindowOutOfRange(PumpwatchError):
    code = "WindowOutOfRange"
