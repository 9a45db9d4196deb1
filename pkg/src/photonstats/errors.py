"""Exception hierarchy. The CLI maps each class to an exit code."""


class PhotonStatsError(Exception):
    exit_code = 1


class ValidationError(PhotonStatsError, ValueError):
    """Bad configuration or arguments."""

    exit_code = 2


class DataError(PhotonStatsError, ValueError):
    """Malformed or insufficient input data."""

    exit_code = 3


class NumericalError(PhotonStatsError, ArithmeticError):
    """A root-find, fit or inversion did not produce a usable answer."""

    exit_code = 4
