"""Exception types raised across the package."""


class VceClipError(Exception):
    """Base class for all package errors."""


class DimensionError(VceClipError, ValueError):
    """Tensor or config shapes do not agree."""


class ContractError(VceClipError, RuntimeError):
    """An API precondition was violated (e.g. backward on a non-scalar)."""


class NumericalError(VceClipError, ArithmeticError):
    """An operation produced a non-finite value from finite inputs."""


class ConfigError(VceClipError, ValueError):
    """Invalid or inconsistent configuration."""


class FormatError(VceClipError, ValueError):
    """A file did not match its expected format."""


class ValidationError(VceClipError, ValueError):
    """Input data failed a semantic check."""


class ChecksumError(FormatError):
    """Stored checksum does not match file contents."""


class DivergenceError(VceClipError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
