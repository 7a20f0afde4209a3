"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end:
1 usage, 2 I/O, 3 validation, 4 numeric.
"""


class BevMotionError(Exception):
    exit_code = 1


class UsageError(BevMotionError):
    exit_code = 1


class IoError(BevMotionError):
    exit_code = 2


class ValidationError(BevMotionError):
    exit_code = 3


class NumericError(BevMotionError):
    exit_code = 4


# scene loading
class ParseError(ValidationError):
    pass


class SchemaError(ValidationError):
    pass


class InvariantError(ValidationError):
    pass


# frames / rasterization
class DegenerateFrame(NumericError):
    pass


class UnknownAgent(ValidationError):
    pass


class NotATarget(ValidationError):
    pass


# cache files
class FormatError(IoError):
    pass


class CorruptionError(IoError):
    pass


# loss / model
class ShapeMismatch(ValidationError):
    pass


class NoValidSteps(ValidationError):
    pass


class NonFiniteGradient(NumericError):
    pass


class EmptyDataset(ValidationError):
    pass


# metrics
class EmptySet(ValidationError):
    pass


class MissingPrediction(ValidationError):
    pass


class UnknownTarget(ValidationError):
    pass


# synthetic data
class InvalidSpec(ValidationError):
    pass
