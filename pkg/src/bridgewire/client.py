"""Host-side session management.

A Session owns one connection to an evaluation server, optionally the
server process itself (``spawn``). All traffic is strictly
conversational: one request at a time, with nested callback traffic
stacked LIFO inside it. Values cross per the translation policy;
anything the server keeps by reference surfaces as a Proxy whose
garbage collection enqueues a RELEASE, flushed at the next frame
boundary.

Interruption follows the terminate-and-restart model: kill the spawned
server (or drop the connection to a remote one), invalidate every
proxy via the session epoch, and start fresh.
"""

from __future__ import annotations

import os
import select
import shutil
import socket
import subprocess
import sys
import threading
import time
import traceback
import weakref
from typing import Callable, Dict, List, Optional, Tuple

from . import values as V
from . import wire
from .errors import (
    BridgewireError,
    DiscoveryError,
    PrematureEndError,
    ProtocolError,
    RemoteError,
    SessionError,
    SessionInterrupted,
    StaleProxyError,
    TranslationError,
)
from .stream import SocketStream
from .translate import (
    ColumnTable,
    InboundHooks,
    OutboundHooks,
    translate_inbound,
    translate_outbound,
)

ENV_SERVER_BIN = "BRIDGEWIRE_SERVER_BIN"
ENV_PORT = "BRIDGEWIRE_PORT"
SPAWN_TIMEOUT = 10.0
LISTENING_PREFIX = "BRIDGEWIRE LISTENING "


class Proxy:
    """Handle to an object living in the server's registry.

    Callable when the remote object is; dropping the handle schedules a
    release. A proxy minted before an interrupt refuses to be used
    afterwards (stale epoch).
    """

    __slots__ = ("_session", "_id", "_type_name", "_epoch", "_finalizer", "__weakref__")

    def __init__(self, session: "Session", ref_id: int, type_name: str, epoch: int):
        self._session = session
        self._id = ref_id
        self._type_name = type_name
        self._epoch = epoch
        self._finalizer = weakref.finalize(
            self, session._enqueue_release, epoch, ref_id
        )

    @property
    def type_name(self) -> str:
        return self._type_name

    def __call__(self, *args, **kwargs):
        return self._session.call_proxy(self, args, kwargs)

    def fetch(self):
        return self._session.fetch(self)

    def release(self) -> None:
        """Schedule the release now instead of waiting for collection."""
        self._finalizer()

    def __repr__(self):
        stale = "" if self._epoch == self._session.epoch else ", stale"
        return "<proxy %d: %s%s>" % (self._id, self._type_name, stale)


class RemoteFunction:
    """A callable imported from a server module by name."""

    __slots__ = ("_session", "qualified_name", "is_type")

    def __init__(self, session: "Session", qualified_name: str, is_type: bool):
        self._session = session
        self.qualified_name = qualified_name
        self.is_type = is_type

    def __call__(self, *args, **kwargs):
        return self._session.call(self.qualified_name, *args, **kwargs)

    def __repr__(self):
        kind = "type" if self.is_type else "function"
        return "<remote %s %s>" % (kind, self.qualified_name)


class ImportedEnv:
    """Name -> callable mapping for one scanned server module.

    Original names are attributes; ascii aliases (which may contain
    characters not valid in attribute syntax) are reachable through
    item access as well.
    """

    def __init__(self, module_name: str, entries: Dict[str, RemoteFunction]):
        self._module_name = module_name
        self._entries = entries

    def __getattr__(self, name: str):
        try:
            return self._entries[name]
        except KeyError:
            raise AttributeError(
                "module %r has no symbol %r" % (self._module_name, name)
            ) from None

    def __getitem__(self, name: str):
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def names(self) -> List[str]:
        return sorted(self._entries)

    def __repr__(self):
        return "ImportedEnv(%s: %s)" % (self._module_name, ", ".join(self.names()))


class _SessionOutbound(OutboundHooks):
    def __init__(self, session: "Session"):
        self.session = session

    def function_ref(self, fn) -> "V.FnRef":
        if isinstance(fn, RemoteFunction):
            if fn.is_type:
                return V.FnRef.constructor(fn.qualified_name)
            return V.FnRef.named(fn.qualified_name)
        cb_id = self.session._register_callback(fn)
        return V.FnRef.callback(cb_id)

    def proxy_ref(self, obj) -> Optional["V.Ref"]:
        if isinstance(obj, Proxy):
            self.session._check_epoch(obj)
            return V.Ref(obj._id, obj._type_name)
        return None


class _SessionInbound(InboundHooks):
    def __init__(self, session: "Session"):
        self.session = session

    def make_proxy(self, ref: "V.Ref"):
        return self.session._make_proxy(ref)

    def make_function(self, fnref: "V.FnRef"):
        if fnref.kind == V.FnKind.CALLBACK:
            fn = self.session._callbacks.get(fnref.callback_id)
            if fn is not None:
                return fn
            return fnref
        return RemoteFunction(
            self.session, fnref.name, fnref.kind == V.FnKind.CONSTRUCTOR
        )


class Session:
    """One conversation with one evaluation server."""

    def __init__(
        self,
        stream: SocketStream,
        address: Optional[Tuple[str, int]] = None,
        process: Optional[subprocess.Popen] = None,
        server_bin: Optional[str] = None,
        out: Optional[Callable[[str], None]] = None,
        err: Optional[Callable[[str], None]] = None,
    ):
        self._stream: Optional[SocketStream] = stream
        self._address = address
        self._process = process
        self._server_bin = server_bin
        self.epoch = 1
        self._callbacks: Dict[int, Callable] = {}
        self._callback_ids: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()
        self._next_callback_id = 1
        self._release_queue: List[Tuple[int, int]] = []
        self._release_lock = threading.Lock()
        self._outbound = _SessionOutbound(self)
        self._inbound = _SessionInbound(self)
        self._out_sink = out
        self._err_sink = err
        self.bytes_sent = 0
        self.bytes_received = 0
        self._depth = 0
        self._closed = False
        self._attach_taps()

    # -- plumbing ------------------------------------------------------------

    def _attach_taps(self) -> None:
        if self._stream is None:
            return

        def count_out(data: bytes) -> None:
            self.bytes_sent += len(data)

        def count_in(data: bytes) -> None:
            self.bytes_received += len(data)

        self._stream.tap_out = count_out
        self._stream.reader.tap = count_in

    def set_output(self, out: Optional[Callable[[str], None]] = None,
                   err: Optional[Callable[[str], None]] = None) -> None:
        """Install sinks for server OUT/ERR chunks (None = standard streams)."""
        self._out_sink = out
        self._err_sink = err

    def _emit_out(self, chunk: str) -> None:
        if self._out_sink is not None:
            self._out_sink(chunk)
        else:
            sys.stdout.write(chunk)
            sys.stdout.flush()

    def _emit_err(self, chunk: str) -> None:
        if self._err_sink is not None:
            self._err_sink(chunk)
        else:
            sys.stderr.write(chunk)
            sys.stderr.flush()

    @property
    def is_spawned(self) -> bool:
        return self._server_bin is not None

    @property
    def live(self) -> bool:
        return self._stream is not None and not self._closed

    # -- proxies and callbacks --------------------------------------------------

    def _make_proxy(self, ref: "V.Ref") -> Proxy:
        return Proxy(self, ref.id, ref.type_name, self.epoch)

    def _check_epoch(self, proxy: Proxy) -> None:
        if proxy._session is not self:
            raise StaleProxyError("proxy belongs to a different session")
        if proxy._epoch != self.epoch:
            raise StaleProxyError(
                "proxy %d (%s) predates the last interrupt/restart"
                % (proxy._id, proxy._type_name)
            )
        if not proxy._finalizer.alive:
            raise StaleProxyError(
                "proxy %d (%s) was released" % (proxy._id, proxy._type_name)
            )

    def _register_callback(self, fn) -> int:
        try:
            cached = self._callback_ids.get(fn)
        except TypeError:  # unhashable/unweakrefable callables get fresh ids
            cached = None
        if cached is not None:
            return cached
        cb_id = self._next_callback_id
        self._next_callback_id += 2
        self._callbacks[cb_id] = fn
        try:
            self._callback_ids[fn] = cb_id
        except TypeError:
            pass
        return cb_id

    def _enqueue_release(self, epoch: int, ref_id: int) -> None:
        with self._release_lock:
            self._release_queue.append((epoch, ref_id))

    def _flush_releases_locked(self) -> int:
        with self._release_lock:
            queue, self._release_queue = self._release_queue, []
        sent = 0
        for i, (epoch, ref_id) in enumerate(queue):
            if epoch != self.epoch:
                continue  # stale ids die with their epoch
            try:
                wire.write_frame(wire.Release(ref_id), self._stream)
            except OSError:
                with self._release_lock:
                    self._release_queue = list(queue[i:]) + self._release_queue
                raise
            sent += 1
        return sent

    def release_flush(self) -> int:
        """Send every queued release now; returns how many were sent."""
        if not self.live:
            if any(e[0] == self.epoch for e in self._release_queue):
                raise SessionError("session is not connected; releases retained")
            with self._release_lock:
                self._release_queue = []
            return 0
        return self._flush_releases_locked()

    # -- request/response core ------------------------------------------------------

    def _ensure_live(self) -> None:
        if self._closed:
            raise SessionError("session is closed")
        if self._stream is not None:
            return
        if self.is_spawned:
            self._respawn()
            return
        raise SessionError(
            "session is not connected; call reconnect() to dial %s:%d again"
            % (self._address if self._address else ("?", 0))
        )

    def _request(self, frame, raw: bool = False):
        self._ensure_live()
        epoch_at_send = self.epoch
        self._depth += 1
        try:
            self._flush_releases_locked()
            wire.write_frame(frame, self._stream)
            return self._await_result(raw)
        except (PrematureEndError, OSError) as exc:
            interrupted = epoch_at_send != self.epoch or self._stream is None
            self._mark_dead()
            if interrupted:
                raise SessionInterrupted("request interrupted") from None
            raise SessionError("connection lost: %s" % exc) from None
        finally:
            self._depth -= 1

    def _await_result(self, raw: bool):
        while True:
            reply = wire.read_frame(self._stream.reader)
            if isinstance(reply, wire.Result):
                if raw:
                    return reply.value
                return translate_inbound(reply.value, self._inbound)
            if isinstance(reply, wire.Fail):
                raise RemoteError(reply.message, reply.detail)
            if isinstance(reply, wire.Out):
                self._emit_out(reply.chunk)
                continue
            if isinstance(reply, wire.Err):
                self._emit_err(reply.chunk)
                continue
            if isinstance(reply, wire.Call):
                self._serve_callback(reply)
                continue
            raise ProtocolError(
                "unexpected %s frame while awaiting a result" % type(reply).__name__
            )

    def _serve_callback(self, frame: "wire.Call") -> None:
        if frame.callee_kind != wire.CalleeKind.CALLBACK:
            raise ProtocolError("server issued a non-callback call")
        fn = self._callbacks.get(frame.callee)
        try:
            if fn is None:
                raise SessionError("unknown callback id %d" % frame.callee)
            args = [translate_inbound(v, self._inbound) for v in frame.positional]
            kwargs = {n: translate_inbound(v, self._inbound) for n, v in frame.named}
            result = fn(*args, **kwargs)
            value = translate_outbound(result, self._outbound)
        except (PrematureEndError, OSError, SessionInterrupted):
            raise
        except Exception as exc:
            wire.write_frame(
                wire.Fail(str(exc) or type(exc).__name__, traceback.format_exc()),
                self._stream,
            )
            return
        wire.write_frame(wire.Result(value), self._stream)

    # -- public operations ---------------------------------------------------------

    def call(self, name: str, *args, **kwargs):
        """Call a server function by qualified name."""
        frame = wire.Call.to_named(name, *self._marshal(args, kwargs))
        return self._request(frame)

    def call_proxy(self, proxy: Proxy, args, kwargs):
        self._check_epoch(proxy)
        frame = wire.Call.to_reference(proxy._id, *self._marshal(args, kwargs))
        return self._request(frame)

    def _marshal(self, args, kwargs):
        positional = tuple(translate_outbound(a, self._outbound) for a in args)
        named = tuple(
            (n, translate_outbound(v, self._outbound)) for n, v in kwargs.items()
        )
        return positional, named

    def eval(self, src: str):
        """Evaluate an expression server-side."""
        return self._request(wire.Eval(src))

    def let_eval(self, src: str, **bindings):
        """Evaluate with the given values bound to local names."""
        named = tuple(
            (n, translate_outbound(v, self._outbound)) for n, v in bindings.items()
        )
        return self._request(wire.Let(src, named))

    def put(self, value) -> Proxy:
        """Store a value server-side once; returns its handle."""
        result = self._request(wire.Put(translate_outbound(value, self._outbound)))
        if not isinstance(result, Proxy):
            raise ProtocolError("PUT did not return a reference")
        return result

    def fetch(self, proxy: Proxy):
        """Deep-translate a stored object back to a host value."""
        self._check_epoch(proxy)
        return self._request(wire.Fetch(proxy._id))

    def to_table(self, proxy: Proxy) -> ColumnTable:
        """Fetch a table proxy as a host table, column order preserved."""
        result = self.fetch(proxy)
        if not isinstance(result, ColumnTable):
            raise TranslationError(
                "proxy %d is %s, not a table" % (proxy._id, proxy._type_name)
            )
        return result

    def import_module(self, path: str, include_unexported: bool = False) -> ImportedEnv:
        """Scan a server module and wrap each symbol as a host callable."""
        listing = self._request(wire.Scan(path, include_unexported), raw=True)
        if not isinstance(listing, V.List):
            raise ProtocolError("scan reply is not a symbol list")
        entries: Dict[str, RemoteFunction] = {}
        for item in listing.items:
            if not isinstance(item, V.Struct) or item.type_name != "SymbolInfo":
                raise ProtocolError("malformed scan entry")
            name = item.get("name").elements()[0]
            kind = item.get("kind").elements()[0]
            alias = item.get("alias").elements()[0]
            fn = RemoteFunction(self, "%s.%s" % (path, name), kind == "type")
            entries[name] = fn
            if alias != name:
                entries[alias] = fn
        return ImportedEnv(path, entries)

    # -- lifecycle --------------------------------------------------------------------

    def _mark_dead(self) -> None:
        # flip the state before closing: the close wakes any blocked
        # reader, which must already see the new epoch
        stream, self._stream = self._stream, None
        if stream is not None:
            self.epoch += 1
            self._callbacks.clear()
            self._callback_ids = weakref.WeakKeyDictionary()
            stream.close()

    def interrupt(self) -> None:
        """Stop whatever the server is doing by killing the conversation.

        Spawned servers are terminated outright and respawned on next
        use; remote ones just lose the connection (reconnect() to
        resume). Every existing proxy becomes stale.
        """
        proc, self._process = self._process, None
        self._mark_dead()  # state first: killing the child also wakes the reader
        if proc is not None:
            proc.kill()
            proc.wait()

    def reconnect(self) -> None:
        """Re-dial a remote server after a drop or interrupt."""
        if self._closed:
            raise SessionError("session is closed")
        if self.is_spawned:
            self._ensure_live()
            return
        if self._stream is not None:
            return
        if self._address is None:
            raise SessionError("no address to reconnect to")
        self._stream = _dial(self._address)
        self._attach_taps()

    def _respawn(self) -> None:
        stream, process, address = _spawn_process(self._server_bin)
        self._stream = stream
        self._process = process
        self._address = address
        self._attach_taps()

    def close(self) -> None:
        """Say goodbye, release everything, and reap any child process."""
        if self._closed:
            return
        self._closed = True
        if self._stream is not None:
            try:
                wire.write_frame(wire.Byebye(), self._stream)
            except OSError:
                pass
            self._stream.close()
            self._stream = None
        if self._process is not None:
            self._process.terminate()
            try:
                self._process.wait(timeout=3.0)
            except subprocess.TimeoutExpired:
                self._process.kill()
                self._process.wait()
            self._process = None

    def __enter__(self) -> "Session":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __repr__(self):
        mode = "spawned" if self.is_spawned else "connected"
        state = "live" if self.live else ("closed" if self._closed else "down")
        return "<Session %s, %s, epoch %d>" % (mode, state, self.epoch)


# -- connection establishment ------------------------------------------------------


def _dial(address: Tuple[str, int], timeout: float = 5.0) -> SocketStream:
    try:
        sock = socket.create_connection(address, timeout=timeout)
    except OSError as exc:
        raise SessionError("cannot connect to %s:%d: %s" % (*address, exc)) from None
    sock.settimeout(None)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    stream = SocketStream(sock)
    try:
        wire.client_handshake(stream)
    except BridgewireError:
        stream.close()
        raise
    return stream


def connect(host: str = "127.0.0.1", port: Optional[int] = None, **session_kw) -> Session:
    """Open a session against an already-running server."""
    if port is None:
        port = int(os.environ.get(ENV_PORT, "0"))
    if not port:
        raise SessionError("no port given and %s is not set" % ENV_PORT)
    address = (host, port)
    return Session(_dial(address), address=address, **session_kw)


def find_server_bin(explicit: Optional[str] = None) -> str:
    """Resolve the server executable: explicit > env var > PATH."""
    candidates = []
    if explicit:
        candidates.append((explicit, "explicit path"))
    env = os.environ.get(ENV_SERVER_BIN)
    if env:
        candidates.append((env, "environment variable %s" % ENV_SERVER_BIN))
    found = shutil.which("bridgewire-server")
    if found:
        candidates.append((found, "PATH search"))
    for path, origin in candidates:
        if os.path.isfile(path) and os.access(path, os.X_OK):
            return path
        if origin != "PATH search":
            raise DiscoveryError(
                "server executable from %s is not runnable: %s" % (origin, path)
            )
    raise DiscoveryError(
        "no server executable found (tried explicit path, %s, PATH)" % ENV_SERVER_BIN
    )


def _spawn_process(server_bin: str, timeout: float = SPAWN_TIMEOUT):
    port_req = os.environ.get(ENV_PORT, "0")
    proc = subprocess.Popen(
        [server_bin, "--port", port_req],
        stdout=subprocess.PIPE,
        stderr=None,
        text=True,
        bufsize=1,
    )
    port = _read_listening_line(proc, timeout)
    address = ("127.0.0.1", port)
    try:
        stream = _dial(address)
    except BridgewireError:
        proc.kill()
        proc.wait()
        raise
    return stream, proc, address


def _read_listening_line(proc: subprocess.Popen, timeout: float) -> int:
    deadline = time.monotonic() + timeout
    buffered = ""
    fd = proc.stdout.fileno()
    while time.monotonic() < deadline:
        if proc.poll() is not None:
            raise SessionError(
                "server exited with code %d before listening" % proc.returncode
            )
        ready, _, _ = select.select([fd], [], [], 0.1)
        if not ready:
            continue
        chunk = os.read(fd, 4096).decode("utf-8", "replace")
        if not chunk:
            continue
        buffered += chunk
        for line in buffered.splitlines():
            if line.startswith(LISTENING_PREFIX):
                try:
                    return int(line[len(LISTENING_PREFIX):].strip())
                except ValueError:
                    raise SessionError("malformed listening line %r" % line) from None
    proc.kill()
    proc.wait()
    raise SessionError("server did not report a port within %.0f s" % timeout)


def spawn(server_bin: Optional[str] = None, **session_kw) -> Session:
    """Start a private server process and connect to it."""
    path = find_server_bin(server_bin)
    stream, proc, address = _spawn_process(path)
    return Session(stream, address=address, process=proc, server_bin=path, **session_kw)


def setup_ok(server_bin: Optional[str] = None) -> bool:
    """True when a server can be discovered, started, and spoken to."""
    try:
        session = spawn(server_bin)
    except BridgewireError:
        return False
    try:
        return session.eval("1 + 1") == 2
    except BridgewireError:
        return False
    finally:
        session.close()
