"""Exception hierarchy shared across the toolkit.

Each category maps to a distinct CLI exit code (see cli.EXIT_CODES).
"""


class BitsdfError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(BitsdfError):
    """Invalid parameters: bad dimensions, missing inputs, out-of-range knobs."""


class ResourceError(BitsdfError):
    """A requested allocation exceeds the configured memory cap."""


class FormatError(BitsdfError):
    """Unrecognized or malformed input file (extension, magic, field layout)."""


class CorruptionError(BitsdfError):
    """Structurally valid container with inconsistent payload (short reads,
    bad magic, non-run distance masks in checked decodes)."""


class EvaluationError(BitsdfError):
    """Metric evaluation on degenerate inputs (empty point sets or meshes)."""
