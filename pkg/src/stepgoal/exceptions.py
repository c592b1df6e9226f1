"""Exception hierarchy shared by every stage of the pipeline."""


class StepGoalError(Exception):
    """Base class for all errors raised by stepgoal."""


class DataError(StepGoalError, ValueError):
    """Input data failed validation. The CLI maps these to exit code 2."""


class MalformedDocument(DataError):
    pass


class InvalidValue(DataError):
    pass


class DuplicateMinute(DataError):
    pass


class OverlappingSegments(DataError):
    pass


class ConflictingDuplicate(DataError):
    pass


class IoFailure(StepGoalError, OSError):
    pass


class EmptySpan(DataError):
    pass


class MalformedFixture(DataError):
    pass


class TooFewRows(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


class ConstantTarget(DataError):
    pass


class DegenerateInput(DataError):
    pass


class SingleClass(DataError):
    pass


class NonBinaryLabels(DataError):
    pass


class EmptyClass(DataError):
    pass


class ZeroVector(DataError):
    pass


class UnsupportedKernel(StepGoalError, NotImplementedError):
    pass


class InvalidSpec(DataError):
    pass
