"""Exception hierarchy shared by every pipeline stage."""


class GazemarkError(Exception):
    """Base class for data errors raised by the toolkit."""


# ingest
class EmptyInput(GazemarkError):
    pass


class MissingColumn(GazemarkError):
    def __init__(self, column):
        super().__init__(f"missing required column: {column}")
        self.column = column


class NonMonotoneTime(GazemarkError):
    pass


class InvalidGeometry(GazemarkError):
    pass


# events / mainseq
class TooFewSamples(GazemarkError):
    pass


class TooFewSaccades(GazemarkError):
    pass


class DegenerateAmplitudeRange(GazemarkError):
    pass


class NegativeAmplitude(GazemarkError, ValueError):
    pass


# aoi
class SchemaError(GazemarkError):
    pass


class DuplicateAoi(GazemarkError):
    pass


class OutOfBounds(GazemarkError):
    pass


class UnknownStimulus(GazemarkError):
    pass


class MissingAoi(GazemarkError):
    pass


# features
class NoEvents(GazemarkError):
    pass


class EmptyTable(GazemarkError):
    pass


# ml
class TooFewInstances(GazemarkError):
    pass


class BadK(GazemarkError):
    pass


class EmptyGrid(GazemarkError):
    pass


class SingleClassScores(GazemarkError):
    pass


class InvalidSpec(GazemarkError, ValueError):
    pass


# cohort statistics
class InconsistentCounts(GazemarkError):
    pass


class DegenerateVariance(GazemarkError):
    pass
