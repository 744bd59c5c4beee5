"""Exception types raised by the solver library."""


class SurfFVError(Exception):
    """Base class for all library errors."""


class CapacityError(SurfFVError, ValueError):
    """Requested mesh resolution exceeds what the build supports."""


class ParameterError(SurfFVError, ValueError):
    """Invalid geometric or numerical parameter."""


class GeometryError(SurfFVError, ValueError):
    """Degenerate geometry (zero area, zero length, antipodal points...)."""

    def __init__(self, message, index=None):
        super().__init__(message if index is None else f"{message} (index {index})")
        self.index = index


class ToleranceError(SurfFVError, RuntimeError):
    """An iterative quadrature did not reach its tolerance."""


class UnsupportedFluxError(SurfFVError, NotImplementedError):
    """The flux lacks the representation required by the requested path."""


class BlowUpError(SurfFVError, RuntimeError):
    """A time step produced non-finite values."""

    def __init__(self, cell, step):
        super().__init__(f"non-finite value in cell {cell} at step {step}")
        self.cell = cell
        self.step = step


class UnsupportedError(SurfFVError, NotImplementedError):
    """The requested combination of options is not supported."""
