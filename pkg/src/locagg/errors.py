"""Exception hierarchy shared by the library and the CLI."""


class LocaggError(Exception):
    """Base class for all errors raised by locagg."""


class ValidationError(LocaggError, ValueError):
    """An input violates a documented precondition."""


class FormatError(LocaggError):
    """A binary or text file does not follow its declared layout."""


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class DimensionOverflowError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class SolverError(LocaggError):
    """A numerical routine could not produce a valid result."""


class LineSearchError(SolverError):
    """Backtracking ran out of halvings.

    The iterate reached before failure is kept on ``last_iterate``.
    """

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class NonFiniteError(SolverError, FloatingPointError):
    pass


class SingularSystemError(SolverError):
    pass


class CovarianceError(SolverError):
    """Covariance factorization failed even after jitter retries."""


class NetworkError(LocaggError):
    """Base class for coordinator/worker failures."""


class ProtocolError(NetworkError):
    """Malformed frame, bad checksum or unexpected message type."""


class WorkerTimeoutError(NetworkError):
    def __init__(self, worker, message=None):
        super().__init__(message or f"worker {worker} timed out; round aborted")
        self.worker = worker


class StartupError(NetworkError):
    """A worker rejected its assignment."""
