class TaylorNetError(Exception):
    """Base class for all taylornet errors."""


class ConfigError(TaylorNetError, ValueError):
    """Invalid configuration value or flag combination."""


class NumericalError(TaylorNetError):
    """A numerical check failed or a computation produced non-finite values."""


class DivergenceError(NumericalError):
    """Training loss became non-finite."""

    def __init__(self, message: str, *, epoch: int, step: int):
        super().__init__(message)
        self.epoch = epoch
        self.step = step


class ToleranceError(NumericalError):
    """A verification oracle exceeded its tolerance."""


class SequenceStateError(TaylorNetError):
    """Recurrent state used across independent sequences without a reset."""


class DataError(TaylorNetError):
    """Dataset, container or artifact I/O failure."""


class SpriteLoadError(DataError):
    """Digit sprites could not be loaded."""


class ContainerError(DataError):
    """Malformed sequence container."""


class DownloadError(DataError):
    """Remote archive could not be fetched."""


class CheckpointError(DataError):
    """Checkpoint archive is missing or malformed."""
