"""Exception hierarchy shared across the toolkit."""


class ComfortIndexError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(ComfortIndexError, ValueError):
    """Invalid argument or configuration value."""


class InsufficientDataError(ComfortIndexError, ValueError):
    """Not enough samples, peaks, intervals or pairs to compute a quantity."""


class EmptyWindowError(InsufficientDataError):
    """A requested time window does not intersect the signal."""


class QualityError(ComfortIndexError, ValueError):
    """Signal quality too poor to process (e.g. mostly blinks)."""


class DataError(ComfortIndexError, ValueError):
    """Non-finite values or dimension mismatches in model inputs."""


class DegenerateReportError(ComfortIndexError, ValueError):
    """All emotion intensities are zero, so no AV location exists."""


class TrainingError(ComfortIndexError, RuntimeError):
    """Gradient training diverged."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class ParseError(ComfortIndexError, ValueError):
    """Malformed file; carries the offending line and byte offset."""

    def __init__(self, message, line=None, offset=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if offset is not None:
            loc.append(f"byte offset {offset}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.line = line
        self.offset = offset


class VersionError(ComfortIndexError, ValueError):
    """File format version is not supported by this reader."""


class RoutingError(ComfortIndexError, KeyError):
    """Sample pushed to a channel the stream does not know."""
