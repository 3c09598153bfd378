"""Exception hierarchy shared by the library and the command line front end."""


class DeconvBandError(Exception):
    """Base class for all errors raised by :mod:`deconvband`."""

    exit_code = 1


class InputShapeError(DeconvBandError, ValueError):
    """Array lengths or grid alignments do not match."""

    exit_code = 3


class DataError(DeconvBandError, ValueError):
    """Input data are unusable (empty, non-finite, unreadable)."""

    exit_code = 3


class NumericError(DeconvBandError, ArithmeticError):
    """A numerical step produced non-finite or degenerate output."""

    exit_code = 4


class EstimationError(NumericError):
    """The density estimate is non-positive on the whole evaluation grid."""


class DegenerateVarianceError(NumericError):
    """The variance estimate vanishes on the whole evaluation grid."""


class PilotError(NumericError):
    """The corrected moment matrix of the pilot polynomial fit is singular."""


class SelectionError(NumericError):
    """Bandwidth selection criteria could not be evaluated."""


class ExperimentError(DeconvBandError):
    """Too many Monte Carlo replications failed."""

    exit_code = 4
