"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """A precondition on an argument value was violated."""


class ShapeError(InvalidArgument):
    """Tensor dimensions are incompatible for the requested operation."""


class NonFiniteError(ArithmeticError):
    """A loss or gradient became NaN or infinite."""

    def __init__(self, message, *, step=None, name=None):
        super().__init__(message)
        self.step = step
        self.name = name


class GradCheckFailure(ArithmeticError):
    """The function was non-finite at a finite-difference probe point."""

    def __init__(self, message, *, param_index, flat_index):
        super().__init__(message)
        self.param_index = param_index
        self.flat_index = flat_index


class FormatError(ValueError):
    """A file could not be parsed; ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset=0):
        super().__init__(f"{message} (at byte offset {offset})")
        self.detail = message
        self.offset = offset


class UnsupportedFormat(FormatError):
    pass


class IntegrityError(ValueError):
    """Checkpoint checksum or magic mismatch."""


class VersionError(ValueError):
    """Checkpoint written by a newer format version."""


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
