"""Exception hierarchy shared by every pipeline stage."""


class AuditError(Exception):
    """Base class for all errors raised by suggestaudit."""


class ConfigError(AuditError, ValueError):
    """Invalid or incomplete configuration."""


class TransportError(AuditError):
    """The suggestion endpoint could not be reached after all retries.

    ``partial_tree`` is set by the tree builder when the failure happened
    mid-crawl so the caller can checkpoint and resume.
    """

    partial_tree = None


class ProtocolError(AuditError):
    """The endpoint answered, but not with a usable suggestion payload."""


class FixtureMissError(AuditError, KeyError):
    """A replay fixture has no entry for the requested query."""


class ParseError(AuditError, ValueError):
    """Malformed input file. ``lineno`` is 1-based when known."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class RankDeficiencyError(AuditError, ValueError):
    """Design matrix is not of full column rank."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = list(columns)


class MissingInputError(AuditError, FileNotFoundError):
    """A pipeline stage was run before the stage producing its inputs."""
