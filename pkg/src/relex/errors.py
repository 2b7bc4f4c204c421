"""Exception hierarchy shared across the pipeline."""


class RelexError(Exception):
    """Base class for all pipeline errors."""


class ParseError(RelexError):
    """Input file could not be parsed; message carries position info."""


class ValidationError(RelexError):
    """Parsed data violates a documented invariant."""


class TemplateError(RelexError):
    """Prompt template is malformed or missing a placeholder value."""


class TransportError(RelexError):
    """Endpoint unreachable or returned a non-2xx status."""


class ProtocolError(RelexError):
    """Endpoint reachable but its response violates the wire contract."""


class CacheError(RelexError):
    """Response cache misuse, e.g. a conflicting second write for a key."""


class ConfigError(RelexError):
    """Experiment configuration is invalid or inconsistent."""


class ConfigDriftError(ConfigError):
    """Resume was attempted with settings that differ from the manifest."""


class LeakageError(RelexError):
    """Train/test separation would be violated."""
