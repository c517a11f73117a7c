"""Exception types raised across the package."""


class MVaeError(ValueError):
    """Base class for every error raised by this package."""


class DimensionError(MVaeError):
    pass


class NonFiniteError(MVaeError):
    """A value that must be finite was NaN or infinite.

    ``term`` names the offending quantity when it is known (for example an
    ELBO term such as ``"recon_x"``).
    """

    def __init__(self, message, term=None, epoch=None):
        super().__init__(message)
        self.term = term
        self.epoch = epoch


class InvalidDistributionError(MVaeError):
    pass


class InvalidNoiseMatrixError(MVaeError):
    pass


class ImpossibleObservationError(MVaeError):
    """An observed label has zero probability under the noise channel."""


class DataError(MVaeError):
    pass


class ConfigError(MVaeError):
    pass


class TrainingError(MVaeError):
    """Training aborted; carries the ELBO term and epoch that failed."""

    def __init__(self, message, term=None, epoch=None):
        super().__init__(message)
        self.term = term
        self.epoch = epoch
