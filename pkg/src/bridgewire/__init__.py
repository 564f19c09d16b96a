"""bridgewire: a client/server bridge for remote evaluation.

A small binary protocol connects a host process (this library) to an
evaluation server. Scalars, arrays, tables and records cross the wire
by value; everything else stays server-side behind proxy references.
Host functions can be handed over as callbacks and invoked from the
other side, re-entrantly.

Typical use::

    import bridgewire as bw

    with bw.spawn() as session:
        sqrt = session.import_module("Base").sqrt
        assert sqrt(4.0) == 2.0
"""

from .errors import (
    BridgewireError,
    DiscoveryError,
    EvalError,
    HandshakeError,
    ParseError,
    PrematureEndError,
    ProtocolError,
    RemoteError,
    SessionError,
    SessionInterrupted,
    StaleProxyError,
    TranslationError,
    WireError,
)
from .values import MISSING, is_missing
from .translate import Annotated, ColumnTable
from .client import (
    ImportedEnv,
    Proxy,
    RemoteFunction,
    Session,
    connect,
    find_server_bin,
    setup_ok,
    spawn,
)

__version__ = "0.1.0"

__all__ = [
    "MISSING",
    "is_missing",
    "Annotated",
    "ColumnTable",
    "Session",
    "Proxy",
    "RemoteFunction",
    "ImportedEnv",
    "connect",
    "spawn",
    "setup_ok",
    "find_server_bin",
    "BridgewireError",
    "WireError",
    "PrematureEndError",
    "ProtocolError",
    "HandshakeError",
    "TranslationError",
    "EvalError",
    "ParseError",
    "RemoteError",
    "StaleProxyError",
    "SessionError",
    "SessionInterrupted",
    "DiscoveryError",
    "__version__",
]
