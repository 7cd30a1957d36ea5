"""Exception types raised by the navigation and fusion routines."""


class MimuFuseError(Exception):
    """Base class for all package errors."""


class PoleSingularityError(MimuFuseError, ValueError):
    """Latitude is too close to a pole for the NED mechanization."""


class NonFiniteState(MimuFuseError, FloatingPointError):
    """A propagated or corrected state contains NaN or Inf."""


class CovarianceNotPSD(MimuFuseError, FloatingPointError):
    """Error-state covariance lost positive semi-definiteness."""


class InnovationNotInvertible(MimuFuseError, FloatingPointError):
    """Innovation covariance is numerically singular."""


class SingularWeightMatrix(MimuFuseError, FloatingPointError):
    """Federated weight matrix cannot be inverted."""


class EmptyFrame(MimuFuseError, ValueError):
    """A multi-IMU frame holds no samples."""


class TimestampMismatch(MimuFuseError, ValueError):
    """Samples grouped into one frame disagree on their timestamp."""


class DegenerateErrors(MimuFuseError, ArithmeticError):
    """Accumulated sensor errors are too small to redistribute variances."""


class UnsupportedSpec(MimuFuseError, ValueError):
    """A trajectory specification cannot be generated."""


class EmptyOverlap(MimuFuseError, ValueError):
    """Solution and truth share no common epochs."""


class ConfigError(MimuFuseError, ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class LogFormatError(MimuFuseError, ValueError):
    """A CSV log does not follow the expected layout."""
