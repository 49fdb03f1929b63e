"""Exception types shared across the solver."""


class FalconError(Exception):
    """Base class for all solver errors."""


class DimensionError(FalconError):
    """A vector or matrix has the wrong length/shape."""


class DomainError(FalconError):
    """A scalar argument is outside its permitted range."""


class SizeError(FalconError):
    """A problem is too large for the requested (exhaustive) routine."""


class FormatError(FalconError):
    """An on-disk bundle or result artifact is malformed."""


class CertificateError(FalconError):
    """The KKT feasibility subproblem is inconsistent beyond tolerance."""


class SingularityError(FalconError):
    """A linear system requires a positive ridge term (n*lambda > 0)."""


class StageError(FalconError):
    """A multi-stage provider failed; carries the failing stage index."""

    def __init__(self, stage: int, message: str, traces=None):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage
        self.traces = traces or []
