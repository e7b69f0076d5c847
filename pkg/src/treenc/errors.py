"""Exception types shared across the toolkit."""


class TreencError(Exception):
    """Base class for all toolkit errors."""


class EmptyDocumentError(TreencError):
    """Parsing or simplification left no usable content."""


class SplitImpossibleError(TreencError):
    """A tree cannot be partitioned under the node budget."""


class FormatError(TreencError):
    """A data file is malformed; message carries line/field diagnostics."""


class VersionError(FormatError):
    """A data file declares an unknown schema version."""


class DimensionMismatchError(TreencError):
    """Vector or matrix shapes are inconsistent."""


class KeyMissingError(TreencError):
    """A strict embedding provider has no vector for the requested key."""


class ZeroNormError(TreencError):
    """Cosine similarity hit a zero-norm vector."""


class DegenerateRowError(TreencError):
    """An attention mask row masks out every target, self included."""


class NonFiniteError(TreencError):
    """A loss or gradient became NaN/Inf."""


class ConfigError(TreencError):
    """Model or training configuration is invalid."""


class TooFewInterestsError(TreencError):
    """Not enough distinct interests to build disjoint splits."""


class EmptySplitError(TreencError):
    """A train/validation partition contains no trees."""
