"""Exception hierarchy shared by all pipeline stages."""


class DynfvError(Exception):
    """Base class for every error raised by this package."""


class ParseError(DynfvError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidTrackletError(DynfvError):
    pass


class DimensionError(DynfvError):
    pass


class InsufficientDataError(DynfvError):
    pass


class CodebookError(DynfvError):
    pass


class FormatError(DynfvError):
    """Bad magic bytes or an unsupported on-disk format version."""


class ProtocolError(DynfvError):
    pass
