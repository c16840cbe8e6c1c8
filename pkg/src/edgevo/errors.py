"""Exception hierarchy.

The four top-level categories (config, dataset, tracking, evaluation) map
one-to-one onto CLI exit codes; everything else subclasses one of them.
"""


class EdgeVOError(Exception):
    exit_code = 1


class ConfigError(EdgeVOError, ValueError):
    exit_code = 2


class DatasetError(EdgeVOError):
    exit_code = 3


class TrackingError(EdgeVOError):
    exit_code = 4


class EvaluationError(EdgeVOError):
    exit_code = 5


# dataset_io
class EmptyInput(DatasetError, ValueError):
    pass


class DecodeError(DatasetError):
    pass


class DimensionMismatch(DatasetError, ValueError):
    pass


class ParseError(DatasetError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class NonMonotonicTimestamps(DatasetError, ValueError):
    pass


class IndexOutOfRange(DatasetError, IndexError):
    pass


# edge_detection / corner_opt
class BadThresholds(ConfigError):
    pass


class NoEdgePixels(TrackingError, ValueError):
    pass


class OutOfBounds(TrackingError, ValueError):
    pass


class ImageTooSmall(TrackingError, ValueError):
    pass


# geometry
class NearPiRotation(TrackingError, ValueError):
    pass


class BehindCamera(TrackingError, ValueError):
    pass


class InvalidDepth(TrackingError, ValueError):
    pass


class TooManyLevels(ConfigError):
    pass


# tracker
class TooFewPoints(TrackingError):
    pass


class NoValidPoints(TrackingError):
    pass


class EmptyResiduals(TrackingError, ValueError):
    pass


class SingularNormalEquations(TrackingError):
    pass


class Diverged(TrackingError):
    pass


class TrackingLost(TrackingError):
    pass


# evaluation
class NoMatches(EvaluationError):
    pass


class DegenerateGeometry(EvaluationError, ValueError):
    pass


class InsufficientSpan(EvaluationError):
    pass


class SceneNotVisible(EvaluationError):
    pass
