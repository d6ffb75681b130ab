"""Exception hierarchy shared by all modules."""


class LabError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(LabError, ValueError):
    """Invalid problem or run configuration.

    ``key`` names the offending configuration entry when known.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class DomainError(LabError, ValueError):
    pass


class RootOnContourError(LabError):
    pass


class ContourTooCoarseError(LabError):
    pass


class RefineError(LabError):
    pass


class CertificateUnavailableError(LabError):
    pass


class SingularTransferError(LabError, ZeroDivisionError):
    pass


class StepSingularError(LabError):
    pass


class PreconditionError(LabError):
    pass


class TailBoundUnavailableError(LabError):
    pass


class InsufficientLengthError(LabError):
    pass


class NonConvergenceError(LabError):
    pass


class ModeError(LabError):
    """Wraps a failure inside a per-mode computation, keeping the mode index."""

    def __init__(self, k, cause):
        super().__init__(f"mode {k}: {cause}")
        self.k = k
        self.cause = cause
