"""Exception hierarchy shared by every layer of the bridge."""


class BridgewireError(Exception):
    """Base class for everything raised by this package."""


class WireError(BridgewireError):
    """Malformed bytes on the wire. Carries the offset of the bad data."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = "%s (at byte offset %d)" % (message, offset)
        super().__init__(message)
        self.offset = offset


class PrematureEndError(WireError):
    """The byte stream ended in the middle of an encoded item."""


class ProtocolError(BridgewireError):
    """Fatal protocol violation: the connection cannot be trusted anymore.

    Unknown frame kinds, handshake mismatches and mid-frame decode
    failures all land here; the session must be closed.
    """


class HandshakeError(ProtocolError):
    pass


class TranslationError(BridgewireError):
    """A host value has no defined wire representation, or vice versa."""


class EvalError(BridgewireError):
    """Evaluation failure inside the runtime (becomes a FAIL frame)."""

    def __init__(self, message, detail=""):
        super().__init__(message)
        self.message = message
        self.detail = detail


class ParseError(EvalError):
    """Expression syntax error; ``position`` is a character index."""

    def __init__(self, message, position):
        super().__init__("%s (at position %d)" % (message, position))
        self.position = position


class RemoteError(BridgewireError):
    """A FAIL frame surfaced on the client side."""

    def __init__(self, message, detail=""):
        super().__init__(message if not detail else "%s\n%s" % (message, detail))
        self.message = message
        self.detail = detail


class StaleProxyError(BridgewireError):
    """A proxy minted before the last interrupt/restart was used."""


class SessionError(BridgewireError):
    """The session is dead or was used in an unsupported way."""


class SessionInterrupted(SessionError):
    """The in-flight request was aborted by ``interrupt()``."""


class DiscoveryError(BridgewireError):
    """No usable server executable could be located."""
