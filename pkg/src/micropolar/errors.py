"""Exception hierarchy shared by the solver modules."""


class MicropolarError(Exception):
    """Base class for all package errors."""


class GridMismatchError(MicropolarError, ValueError):
    """Fields or sample arrays live on incompatible grids."""


class DomainError(MicropolarError, ValueError):
    """An operator was applied outside its domain (nonzero mean, wrong subspace, bad parameter)."""


class ConvergenceError(MicropolarError, RuntimeError):
    """Picard iteration failed to converge or produced non-finite values."""

    def __init__(self, message, *, t=None, iterations=None, contraction=None):
        super().__init__(message)
        self.t = t
        self.iterations = iterations
        self.contraction = contraction


class ConfigError(MicropolarError, ValueError):
    """Invalid run configuration."""


class SnapshotFormatError(MicropolarError, ValueError):
    """A snapshot file is malformed or violates Hermitian symmetry."""
