"""Exception hierarchy shared by all ksmix modules."""


class KsmixError(Exception):
    """Base class for every error raised by ksmix."""


class ParameterError(KsmixError, ValueError):
    """A parameter lies outside its admissible range."""


class DataIntegrityError(KsmixError, ValueError):
    """Field data is non-finite or violates a structural invariant."""


class PreconditionError(KsmixError, ValueError):
    """Input data violates a documented precondition (e.g. positivity)."""


class DegenerateInputError(KsmixError, ValueError):
    """The requested quantity is undefined for this input."""


class ResolutionError(KsmixError, ValueError):
    """The input cannot be represented on the requested grid."""


class SizeError(KsmixError, ValueError):
    """A dense operator would exceed the configured size cap."""


class ConfigError(KsmixError, ValueError):
    """An experiment configuration is missing keys or malformed."""
