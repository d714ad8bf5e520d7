"""Exception hierarchy shared by every module."""


class CrossNavError(Exception):
    """Base class for all package errors."""


class InvalidDepthError(CrossNavError, ValueError):
    """A depth value was non-finite or non-positive."""


class BehindCameraError(CrossNavError, ValueError):
    """A point lies at or behind the camera plane."""


class InvalidRotationError(CrossNavError, ValueError):
    """A matrix failed the rotation-matrix checks."""


class NumericalError(CrossNavError, ArithmeticError):
    """An iterative method failed to converge.

    ``trace`` holds whatever per-iteration diagnostics the solver kept.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class NonConvergenceError(NumericalError):
    pass


class IllConditionedError(NumericalError):
    pass


class DegenerateTargetError(CrossNavError, ValueError):
    """Marker corners are (near) collinear or self-intersecting."""


class InvalidSampleError(CrossNavError, ValueError):
    """All neighbours of a sub-pixel depth sample were invalid."""


class EmptyCalibrationError(CrossNavError, ValueError):
    pass


class EmptyEvaluationError(CrossNavError, ValueError):
    pass


class EncodingError(CrossNavError, ValueError):
    pass


class ConfigMismatchError(CrossNavError, ValueError):
    pass


class FormatError(CrossNavError, ValueError):
    """A file did not follow its documented format."""


class NumericParseError(FormatError):
    """A field that must be numeric could not be parsed as a number."""


class GenerationError(CrossNavError, RuntimeError):
    pass


class PathPlanningError(CrossNavError, ValueError):
    pass


class IllConditionedWarning(UserWarning):
    pass


class CalibrationSpreadWarning(UserWarning):
    """Calibration samples do not cover a near and a far distance."""


class SkippedSampleWarning(UserWarning):
    pass
