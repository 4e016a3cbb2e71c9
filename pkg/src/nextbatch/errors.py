"""Shared exception types. ``code`` strings are stable wire identifiers."""


class HarnessError(Exception):
    """Base class for all harness errors."""

    code = "InternalError"

    def __init__(self, detail: str = ""):
        super().__init__(detail or self.code)
        self.detail = detail or self.code


# Ingestion
class InvalidDescriptor(HarnessError):
    code = "InvalidDescriptor"


class EmptyDataset(HarnessError):
    code = "EmptyDataset"


class TooManyRejections(HarnessError):
    code = "TooManyRejections"


# Window planning
class InvalidConfig(HarnessError):
    code = "InvalidConfig"


class SplitOutOfRange(HarnessError):
    code = "SplitOutOfRange"


class DegenerateSpan(HarnessError):
    code = "DegenerateSpan"


# Scoring and aggregation
class DuplicateInRanking(HarnessError):
    code = "DuplicateInRanking"


class EmptyWindow(HarnessError):
    code = "EmptyWindow"


class NoEvaluableWindows(HarnessError):
    code = "NoEvaluableWindows"


# Run lifecycle
class OutOfOrder(HarnessError):
    code = "OutOfOrder"


class UnknownRun(HarnessError):
    code = "UnknownRun"


class UnknownRequestId(HarnessError):
    code = "UnknownRequestId"


class StaleWindow(HarnessError):
    code = "StaleWindow"


class ConfigMissing(HarnessError):
    code = "ConfigMissing"


# Persistence
class CorruptLog(HarnessError):
    code = "CorruptLog"
