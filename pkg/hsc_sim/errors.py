"""Exceptions raised by the simulator.

Every error carries an ``exit_code`` that the command line maps onto its
process status: 1 for configuration and input problems, 2 for numerical
failures.
"""


class HscError(Exception):
    """Base class for all simulator errors"""

    exit_code = 1

    def __init__(self, message="Hybrid semantic communication error"):
        super().__init__(message)


class DimensionMismatch(HscError, ValueError):
    """Raised when array shapes do not agree"""

    def __init__(self, message="Array dimensions do not match"):
        super().__init__(message)


class RankOutOfRange(HscError, ValueError):
    """Raised when a projection rank d is outside [0, L]"""

    def __init__(self, message="Projection rank out of range"):
        super().__init__(message)


class NotSymmetric(HscError, ValueError):
    """Raised when an error matrix is not symmetric within tolerance"""

    def __init__(self, message="Matrix is not symmetric"):
        super().__init__(message)


class NotPositiveSemidefinite(HscError, ValueError):
    """Raised when an error matrix has eigenvalues below zero beyond tolerance"""

    def __init__(self, message="Matrix is not positive semidefinite"):
        super().__init__(message)


class ZeroVectorError(HscError, ValueError):
    """Raised when power normalization receives an all-zero vector"""

    def __init__(self, message="Cannot normalize a zero vector"):
        super().__init__(message)


class ZeroFadingCoefficient(HscError, ValueError):
    """Raised when the channel coefficient is zero"""

    def __init__(self, message="Fading coefficient is zero"):
        super().__init__(message)


class EmptyCodebook(HscError, ValueError):
    """Raised when vector quantization is asked to use an empty codebook"""

    def __init__(self, message="Codebook has no entries"):
        super().__init__(message)


class EmptyInput(HscError, ValueError):
    """Raised when an operation receives an empty block, list or dataset"""

    def __init__(self, message="Input is empty"):
        super().__init__(message)


class PayloadLengthError(HscError, ValueError):
    """Raised when a serialized complementary payload has the wrong length"""

    def __init__(self, message="Complementary payload length does not match 2dL"):
        super().__init__(message)


class ChannelCountMismatch(HscError, ValueError):
    """Raised when a colour operation receives the wrong number of channels"""

    def __init__(self, message="Expected three colour channels"):
        super().__init__(message)


class ConfigError(HscError, ValueError):
    """Raised for invalid configuration values"""

    def __init__(self, message="Invalid configuration"):
        super().__init__(message)


class CheckpointError(HscError, ValueError):
    """Raised when a checkpoint file is malformed"""

    def __init__(self, message="Checkpoint file is malformed"):
        super().__init__(message)


class MissingCheckpoint(HscError, FileNotFoundError):
    """Raised when a sweep needs a checkpoint that has not been trained"""

    def __init__(self, message="Checkpoint not found"):
        super().__init__(message)


class IdxFormatError(HscError, ValueError):
    """Raised when an IDX dataset file is malformed"""

    def __init__(self, message="Malformed IDX file"):
        super().__init__(message)


class AdapterNotTrained(HscError, KeyError):
    """Raised when no adapter pair has been trained for the requested d"""

    def __init__(self, message="No adapter trained for this CR rank"):
        super().__init__(message)

    def __str__(self):
        # KeyError quotes its argument otherwise
        return str(self.args[0])


class NumericalFailure(HscError, ArithmeticError):
    """Base class for failures of the numerical core"""

    exit_code = 2

    def __init__(self, message="Numerical failure"):
        super().__init__(message)


class ConvergenceFailure(NumericalFailure):
    """Raised when an iterative solver reaches its iteration cap"""

    def __init__(self, message="Eigen-solver did not converge"):
        super().__init__(message)


class TrainingDiverged(NumericalFailure):
    """Raised when a training loss becomes NaN or infinite"""

    def __init__(self, message="Training diverged"):
        super().__init__(message)
