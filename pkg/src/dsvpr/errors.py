"""Exception types shared across the package."""


class DsvprError(Exception):
    """Base class for all errors raised by dsvpr."""


class DimensionError(DsvprError, ValueError):
    """Operand shapes are incompatible."""


class ParameterError(DsvprError, ValueError):
    """A numeric parameter is outside its admissible range."""


class EvaluationError(DsvprError, RuntimeError):
    """A function under evaluation produced a non-finite value."""


class ConfigurationError(DsvprError, ValueError):
    """Configuration or input data cannot support the requested run."""


class DataError(DsvprError, ValueError):
    """Input records violate an invariant (duplicate ids, bad norms, ...)."""


class DegenerateGeometryError(DsvprError, ValueError):
    """Point set has no spread, so principal directions are undefined."""


class FormatError(DsvprError, ValueError):
    """A binary file is malformed. ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
