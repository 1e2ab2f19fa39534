"""Exception hierarchy shared by every foolmetrics module."""


class FoolMetricsError(Exception):
    """Base class for all library errors."""


# taxonomy
class TaxonomyError(FoolMetricsError):
    pass


class CycleDetected(TaxonomyError):
    pass


class MultipleRoots(TaxonomyError):
    pass


class NoRoot(TaxonomyError):
    pass


class UnknownNode(TaxonomyError, KeyError):
    pass


class UnmappedLabel(TaxonomyError, KeyError):
    pass


# file formats
class ParseError(FoolMetricsError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class InvariantViolation(FoolMetricsError):
    def __init__(self, message, record_id=None, path=None, line=None):
        self.message = message
        self.record_id = record_id
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        prefix = f"record {record_id!r}: " if record_id is not None else ""
        super().__init__(where + prefix + message)


# visual similarity
class ZeroNormRow(FoolMetricsError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"template row {row} has zero norm")


class DimensionMismatch(FoolMetricsError):
    pass


class IndexOutOfRange(FoolMetricsError, IndexError):
    pass


class EmptyInput(FoolMetricsError, ValueError):
    pass


class InvalidPercentile(FoolMetricsError, ValueError):
    pass


# metrics
class EmptyRecordSet(FoolMetricsError, ValueError):
    pass


class InvalidK(FoolMetricsError, ValueError):
    pass


class TooFewPoints(FoolMetricsError, ValueError):
    pass


class MissingTarget(FoolMetricsError, ValueError):
    pass


class EmptyThresholds(FoolMetricsError, ValueError):
    pass


# analysis
class NoFlips(FoolMetricsError, ValueError):
    pass


class EmptySubsetIntersection(FoolMetricsError, ValueError):
    pass


class ShapeMismatch(FoolMetricsError, ValueError):
    pass


class TooFewMatrices(FoolMetricsError, ValueError):
    pass


class LabelSpaceMismatch(FoolMetricsError, ValueError):
    pass


# attack lab
class InvalidShape(FoolMetricsError, ValueError):
    pass


class DivergedLoss(FoolMetricsError, ArithmeticError):
    pass


class NonFiniteInput(FoolMetricsError, ValueError):
    pass


class NonFiniteGradient(FoolMetricsError, ArithmeticError):
    pass


class OptimizerDiverged(FoolMetricsError, ArithmeticError):
    pass


class ZeroActivation(FoolMetricsError, ArithmeticError):
    pass


# -- command line

class UsageError(FoolMetricsError):
    """Bad command-line arguments; the CLI exits with status 2."""
