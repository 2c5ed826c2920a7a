"""Exception and warning types raised across the package."""


class QJumpError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(QJumpError, ValueError):
    pass


class NegativeWeight(QJumpError, ValueError):
    pass


class NegativeRate(QJumpError, ValueError):
    pass


class NonHermitianH(QJumpError, ValueError):
    pass


class NonHermitianChoi(QJumpError, ValueError):
    """Choi matrix too far from Hermitian to trust an eigenvalue verdict."""


class GridMismatch(QJumpError, ValueError):
    pass


class InvalidGrid(QJumpError, ValueError):
    pass


class IncompleteFamily(QJumpError, ValueError):
    """An operation needed grid columns that were never computed."""


class NotCompletelyPositive(QJumpError, ValueError):
    pass


class ChannelNotCPTP(QJumpError, ValueError):
    pass


class SingularDeconvolution(QJumpError, ArithmeticError):
    pass


class SingularMap(QJumpError, ArithmeticError):
    pass


class TailTooHeavy(QJumpError, ValueError):
    pass


class UnknownModel(QJumpError, KeyError):
    pass


class InvalidConfig(QJumpError, ValueError):
    pass


class NotConvergedWarning(UserWarning):
    """A jump series hit ``lmax`` before its last term dropped below ``tol``."""


class SingularMapWarning(UserWarning):
    """TCL extraction skipped nodes whose map was too ill-conditioned to invert."""


class SlowDecayWarning(UserWarning):
    """Jump-series term norms failed the factorial-decay soft check."""
