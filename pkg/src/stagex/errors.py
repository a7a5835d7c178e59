"""Exception types shared across the staging stack."""


class StagexError(Exception):
    """Base class for every error raised by this package."""


class ProtocolError(StagexError):
    """A frame could not be encoded or decoded."""


class TransportError(StagexError):
    """A network operation against a store server failed.

    Carries the endpoint so callers can tell which server is unhealthy.
    """

    def __init__(self, endpoint, message):
        super().__init__(f"{endpoint}: {message}")
        self.endpoint = endpoint


class ServerRejected(StagexError):
    """The server answered with a non-OK status for an operation."""

    def __init__(self, endpoint, key, status, message=""):
        detail = f" ({message})" if message else ""
        super().__init__(f"{endpoint}: {status.name} for key {key!r}{detail}")
        self.endpoint = endpoint
        self.key = key
        self.status = status


class IntegrityError(StagexError):
    """A stored container failed validation (magic, checksum, or lengths)."""


class ConfigError(StagexError):
    """A configuration file or compression spec is invalid."""


class UnknownSimulation(StagexError):
    """No info record exists for the requested simulation id."""


class MissingChunk(StagexError):
    """A data or metadata record expected in the store is absent."""

    def __init__(self, key, which):
        super().__init__(f"missing {which} record {key!r}")
        self.key = key
        self.which = which
