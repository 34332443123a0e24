"""Exception hierarchy shared by every module."""


class DetsgradError(Exception):
    pass


# graph
class GraphError(DetsgradError):
    pass


class DisconnectedGraph(GraphError):
    pass


class InvalidEdge(GraphError):
    pass


class NumericalFailure(GraphError):
    pass


# problems / data
class DataError(DetsgradError):
    pass


class UnknownProblem(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class BadMagic(DataError):
    pass


class CountMismatch(DataError):
    pass


class TruncatedFile(DataError):
    pass


class InsufficientData(DataError):
    pass


class ClassCountMismatch(DataError):
    pass


class EmptyShard(DataError):
    pass


# agent / sim
class DimensionMismatch(DetsgradError):
    pass


class ConfigInvalid(DetsgradError):
    pass


# analysis
class NonPositiveValues(DetsgradError):
    pass


class WindowTooSmall(DetsgradError):
    pass
