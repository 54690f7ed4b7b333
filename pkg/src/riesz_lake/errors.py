"""Exception hierarchy shared by every module."""


class RieszLakeError(Exception):
    """Base class for all package errors."""


class SingularityError(RieszLakeError):
    """A singular kernel was evaluated at (or collapsed onto) the origin."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class AccuracyError(RieszLakeError):
    """Quadrature did not reach the requested tolerance within its budget."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class IllPosedError(RieszLakeError):
    pass


class UnsupportedError(RieszLakeError):
    pass


class DomainError(RieszLakeError):
    pass


class PreconditionError(RieszLakeError):
    pass


class InvalidKernelError(RieszLakeError):
    pass


class SolverError(RieszLakeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StabilityError(RieszLakeError):
    pass


class SamplingError(RieszLakeError):
    pass


class GridMismatchError(RieszLakeError):
    pass


class InsufficientSamplesError(RieszLakeError):
    pass


class ConfigError(RieszLakeError):
    """Invalid scenario configuration; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class SimulationError(RieszLakeError):
    """Runtime failure during time stepping, tagged with the failing time."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time
