"""Exception hierarchy.

Every error that can escape the pipeline carries a stable ``exit_code`` so the
command-line driver can map failures to process exit statuses without
inspecting messages.
"""


class PSpectralError(Exception):
    """Base class for all package errors."""

    exit_code = 1
    stage = "internal"


class ConfigError(PSpectralError, ValueError):
    """Invalid configuration or argument values."""

    exit_code = 2
    stage = "config"


class ShapeError(PSpectralError, ValueError):
    """Operands with incompatible dimensions."""

    exit_code = 2
    stage = "kernel"


class DomainError(PSpectralError, ValueError):
    """Scalar parameter outside its admissible range (e.g. p not in (1, 2])."""

    exit_code = 2
    stage = "config"


class InputError(PSpectralError):
    """Input could not be read or parsed."""

    exit_code = 3
    stage = "io"


class MatrixMarketError(InputError, ValueError):
    """Malformed Matrix Market stream. ``lineno`` is 1-based, or None."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class GraphValidationError(PSpectralError, ValueError):
    """Graph violates an invariant or is unusable for the requested run."""

    exit_code = 4
    stage = "graph"


class DegenerateEmbeddingError(PSpectralError, ValueError):
    """An embedding column is identically zero."""

    exit_code = 5
    stage = "solve"


class ContractViolation(PSpectralError, RuntimeError):
    """A documented precondition was not met by the caller."""

    exit_code = 5
    stage = "solve"


class StaleHessianError(ContractViolation):
    """Hessian parts were built for a different embedding or p."""


class SolverError(PSpectralError, RuntimeError):
    """The trust-region solver failed. ``trace`` holds the iterations so far."""

    exit_code = 5
    stage = "solve"

    def __init__(self, message, trace=None, p=None):
        self.trace = trace
        self.p = p
        if p is not None:
            message = f"{message} (p={p:g})"
        super().__init__(message)


class ClusteringError(PSpectralError, ValueError):
    """k-means or cut-metric failure (e.g. empty cluster)."""

    exit_code = 6
    stage = "cluster"


class DeterminismError(PSpectralError, RuntimeError):
    """Outputs differed across worker counts."""

    exit_code = 7
    stage = "bench"


class OutputError(PSpectralError, OSError):
    """Result files could not be written."""

    exit_code = 8
    stage = "output"
