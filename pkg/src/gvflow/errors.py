"""Exception types shared across the toolkit."""


class GvfError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(GvfError):
    """Grid too small for a stencil, or grids that must match do not."""


class ParameterError(GvfError):
    """Parameter value outside its documented range."""


class DivergenceError(GvfError):
    """The explicit iteration blew up (non-finite values or unbounded growth)."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class FormatError(GvfError):
    """Malformed file content."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class GeometryError(GvfError):
    """Degenerate contour, or a shape that does not fit its grid."""


class SizeError(GvfError):
    """Problem too large for the dense steady-state oracle."""


class RankError(GvfError):
    """Singular steady-state system (diffusion and reaction both vanish)."""
