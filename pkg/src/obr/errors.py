"""Exception hierarchy shared by the library and the command line."""


class ObrError(Exception):
    """Base class for every error raised by this package."""


class FormatError(ObrError):
    """Malformed, truncated or otherwise unreadable container file."""


class ShapeError(ObrError, ValueError):
    """Dimensions of the inputs do not agree, or a pattern cannot be satisfied."""


class NumericalError(ObrError, ArithmeticError):
    """A factorization or solve failed.

    ``row`` and ``stage`` locate the failure inside a pipeline run when known.
    """

    def __init__(self, message, row=None, stage=None):
        self.row = row
        self.stage = stage
        context = []
        if stage is not None:
            context.append(f"stage={stage}")
        if row is not None:
            context.append(f"row={row}")
        if context:
            message = f"{message} ({', '.join(context)})"
        super().__init__(message)
