"""Exception types shared across the package."""


class AttitudeError(Exception):
    """Base class for all package errors."""


class InvalidInputError(AttitudeError, ValueError):
    pass


class InvalidConfigError(AttitudeError, ValueError):
    pass


class ParseError(AttitudeError, ValueError):
    """Malformed input file. ``line`` is 1-based and counts the header."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ShapeError(AttitudeError, ValueError):
    pass


class InvalidLabelError(AttitudeError, ValueError):
    pass


class StratificationError(AttitudeError, ValueError):
    pass


class CoverageError(AttitudeError, ValueError):
    """Raised when an included view has no frame at some timestamp."""

    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(f"({t}, {v})" for t, v in self.missing[:10])
        more = "" if len(self.missing) <= 10 else f" and {len(self.missing) - 10} more"
        super().__init__(f"missing frames for (timestamp, view): {shown}{more}")
