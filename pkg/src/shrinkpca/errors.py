"""Exception hierarchy shared by every solver module.

Each class carries an ``exit_code`` so the command line front end can map a
failure to a stable process status without a lookup table of its own.
"""


class ShrinkPcaError(Exception):
    exit_code = 1


class InputError(ShrinkPcaError, ValueError):
    """Malformed data, out-of-range parameters or dimension mismatch."""

    exit_code = 2


class NoGapError(ShrinkPcaError):
    """Gap search reached its floor without validating a candidate."""

    exit_code = 3


class ToleranceError(ShrinkPcaError):
    """An inner solver failed to certify the requested accuracy."""

    exit_code = 4


class ConditioningError(ToleranceError):
    """The shifted operator looks singular or indefinite."""


class SingularOperatorError(ToleranceError):
    """A matrix-vector product vanished numerically."""


class StepSizeError(ToleranceError):
    """SVRG iterates blew up; the step size is too large for this problem."""


class GuardViolation(ShrinkPcaError):
    """The shrinking loop ran past its iteration guard."""

    exit_code = 5
