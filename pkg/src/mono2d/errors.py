"""Exception types shared across the package."""


class Mono2DError(Exception):
    """Base class for all package errors."""


class InvalidShapeError(Mono2DError, ValueError):
    pass


class InvalidInputError(Mono2DError, ValueError):
    pass


class ConfigError(Mono2DError, ValueError):
    pass


class OracleSizeError(Mono2DError, ValueError):
    """Raised when the brute-force DFT oracle is asked for a too-large input."""


class CheckpointError(Mono2DError, ValueError):
    pass


class DivergenceError(Mono2DError, RuntimeError):
    """Raised when training produces a non-finite loss."""


class UnreadableFileError(InvalidInputError):
    pass


class UnsupportedFormatError(InvalidInputError):
    pass
