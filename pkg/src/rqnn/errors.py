"""Exception and warning types raised across the package."""


class RQNNError(Exception):
    """Base class for all package errors."""


class InvalidArgument(RQNNError, ValueError):
    pass


class UnsupportedMethod(RQNNError, ValueError):
    pass


class InvalidState(RQNNError, ValueError):
    pass


class UnsupportedTarget(RQNNError, TypeError):
    pass


class AmplitudeOutOfRange(RQNNError, ValueError):
    """A fitted or sampled amplitude exceeds the scale ``R`` of the circuit."""


class SamplingFailure(RQNNError, RuntimeError):
    """Rejection sampling gave up before finding an admissible draw."""


class NumericWarning(RuntimeWarning):
    """Iterative routine stopped without meeting its tolerance."""
