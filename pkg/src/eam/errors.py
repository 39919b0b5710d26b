"""Exception hierarchy shared by all eam modules."""


class EamError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(EamError, ValueError):
    """Operands disagree on the number of arguments or values."""


class RangeError(EamError, ValueError):
    """A value level lies outside ``[0, n_vals)``."""


class PartialityError(EamError, ValueError):
    """A total function was required but some argument is undefined."""


class CalibrationError(EamError, ValueError):
    """A quantizer could not be fitted."""


class RoutingError(EamError, LookupError):
    """A label does not select exactly one register."""


class SizeError(EamError, ValueError):
    """An image does not fit the extractor frame."""


class FormatError(EamError, ValueError):
    """A file does not follow its expected format.

    ``line`` is the 1-based line number for text formats, when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
