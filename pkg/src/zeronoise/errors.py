"""Exception types raised across the package."""


class ValidationError(ValueError):
    """An input object violates one of its invariants."""


class UnsupportedError(ValueError):
    """The operation is not defined for this input (wrong backend, range, ...)."""


class RepresentationError(ValueError):
    """Operands live in different discretizations or resolutions."""


class ResolutionError(RuntimeError):
    """The discretization is too coarse for the requested accuracy."""


class AssemblyError(RuntimeError):
    """Operator assembly failed on a specific bin or mode."""


class SpectralGapError(RuntimeError):
    """The deflated system is singular, i.e. no usable spectral gap."""


class ConvergenceError(RuntimeError):
    """An iterative solve hit its iteration cap.

    The partial :class:`~zeronoise.solver.SolveReport` is attached as ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(ValueError):
    """Malformed experiment configuration; ``lineno`` points at the offending line."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno
