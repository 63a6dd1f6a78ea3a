"""Exception hierarchy shared by every module of the package."""


class TraceOracleError(Exception):
    """Base class for all errors raised by the package."""


class ManifestError(TraceOracleError):
    """A trace manifest could not be parsed or violates the trace invariants."""


class MissingImageError(ManifestError):
    """A manifest references an image file that does not exist."""


class EmptyTraceError(ManifestError):
    """A trace has no state observations."""


class UnsupportedImageError(ManifestError):
    """An observation image is not a PNG file."""


class ImageDecodeError(TraceOracleError):
    """An image could not be decoded or has zero area."""


class ThresholdError(TraceOracleError):
    """Equivalence thresholds are out of range or their bands overlap."""


class ConfigError(TraceOracleError):
    """Invalid configuration (environment, judge settings, benchmark spec)."""


class StartStateMismatchError(TraceOracleError):
    """Training traces do not share an equivalent first state."""


class UnreachableNodeError(TraceOracleError):
    """A graph node cannot be reached from the initial node."""


class OracleSizeError(TraceOracleError):
    """The brute-force dominator oracle was given too large a graph."""


class EmptyModelError(TraceOracleError):
    """A model has no reference states to validate against."""


class ModelFormatError(TraceOracleError):
    """A model file is corrupt or written by an incompatible version."""


class PreconditionError(TraceOracleError):
    """An operation was called with inputs outside its contract."""


class JudgeError(TraceOracleError):
    """Base class for semantic judge failures."""


class JudgeTransportError(JudgeError):
    """The judge endpoint could not be reached or answered with an HTTP error."""


class JudgeResponseError(JudgeError):
    """The judge answered with a body that is not JSON."""


class JudgeSchemaError(JudgeError):
    """The judge answered with JSON that does not follow the response schema."""
