"""Exception types shared across the package."""


class SplatFormatError(ValueError):
    """Scene file violates the expected PLY schema (e.g. missing property)."""


class SplatDataError(ValueError):
    """Scene file parses but carries invalid values (non-finite, bad range)."""


class GeometryError(ValueError):
    """Degenerate geometry where the operation requires non-degenerate input."""


class NeighborhoodError(ValueError):
    """A local neighborhood is too small for the requested construction."""


class SolverError(RuntimeError):
    """Numerical failure in a linear solve or optimization."""
