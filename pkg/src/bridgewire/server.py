"""The evaluation server: accepts connections, runs sessions.

One connection is one session: its own registry, its own module table,
one evaluation at a time. The session loop reads frames, evaluates,
streams OUT/ERR while evaluation runs, and answers RESULT or FAIL.
Evaluation problems become FAIL frames; only protocol violations (an
unparseable frame) tear the connection down.

Callbacks re-enter: when evaluated code applies a client function, the
session writes a CALL frame upstream and services nested requests from
the client until the matching RESULT/FAIL arrives, stack-fashion.
"""

from __future__ import annotations

import logging
import os
import socket
import threading
import traceback
from typing import Dict, Optional

from . import values as V
from . import wire
from .builtins import build_modules
from .errors import (
    BridgewireError,
    EvalError,
    PrematureEndError,
    ProtocolError,
    TranslationError,
)
from .interp import (
    CALLABLE_SHAPES,
    CallbackHandle,
    Constructor,
    Env,
    EvalContext,
    apply_function,
    eval_expression,
    julia_type_name,
)
from .registry import ObjectRegistry
from .stream import SocketStream
from .translate import FULL, ascii_alias, classify_result, deep_translate
from .values import ElementType

log = logging.getLogger("bridgewire.server")


def _configure_logging() -> None:
    level = os.environ.get("BRIDGEWIRE_LOG", "off").lower()
    if level == "off":
        log.setLevel(logging.CRITICAL + 10)
        return
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter("[bridgewire %(levelname)s] %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.DEBUG if level == "debug" else logging.INFO)


def _widen_i32(arr: "V.TypedArray") -> "V.TypedArray":
    if not isinstance(arr, V.TypedArray) or arr.elem != ElementType.I32:
        return arr
    return V.TypedArray.from_elements(ElementType.I64, arr.elements(), dims=arr.dims)


class _CallbackFailed(Exception):
    def __init__(self, message: str, detail: str):
        super().__init__(message)
        self.message = message
        self.detail = detail


class SessionHandler:
    """State and frame dispatch for one connected client."""

    def __init__(self, stream):
        self.stream = stream
        self.registry = ObjectRegistry()
        self.modules = build_modules()
        self.ctx = EvalContext(
            self.modules,
            out=self._emit_out,
            err=self._emit_err,
            call_callback=self._call_callback,
        )
        self.alive = True

    # -- output forwarding ---------------------------------------------------

    def _emit_out(self, chunk: str) -> None:
        wire.write_frame(wire.Out(chunk), self.stream)

    def _emit_err(self, chunk: str) -> None:
        wire.write_frame(wire.Err(chunk), self.stream)

    # -- value plumbing --------------------------------------------------------

    def reify(self, v):
        """Wire Value to runtime object: references and function refs
        become the live things they point at, recursively. 32-bit
        integer payloads widen to the runtime's native 64-bit width."""
        if isinstance(v, V.Ref):
            return self.registry.get(v.id)
        if isinstance(v, V.FnRef):
            if v.kind == V.FnKind.CALLBACK:
                return CallbackHandle(v.callback_id)
            entity = self._resolve_name(v.name)
            if v.kind == V.FnKind.CONSTRUCTOR and not isinstance(entity, Constructor):
                raise EvalError("%r is not a type" % v.name)
            return entity
        if isinstance(v, V.TypedArray):
            return _widen_i32(v)
        if isinstance(v, V.List):
            return V.List(tuple(self._reify_value(item) for item in v.items))
        if isinstance(v, V.NamedList):
            return V.NamedList(
                tuple((n, self._reify_value(item)) for n, item in v.items)
            )
        if isinstance(v, V.Struct):
            return V.Struct(
                v.type_name,
                tuple((n, self._reify_value(item)) for n, item in v.fields),
            )
        if isinstance(v, V.Table):
            return V.Table(
                tuple((n, _widen_i32(col)) for n, col in v.columns)
            )
        return v

    def _reify_value(self, v):
        """Reify for container slots: the result must stay a Value."""
        out = self.reify(v)
        if not V.is_value(out):
            raise EvalError(
                "a reference to a function cannot be embedded in a container"
            )
        return out

    def _resolve_name(self, name: str):
        env = Env({}, modules=self.modules)
        return env.resolve_path(tuple(name.split(".")))

    def outbound_runtime(self, obj) -> "V.Value":
        """Runtime object to a Value suitable for a frame we send."""
        if V.is_value(obj):
            return obj
        if isinstance(obj, CallbackHandle):
            return V.FnRef.callback(obj.cb_id)
        if isinstance(obj, CALLABLE_SHAPES):
            ref_id = self.registry.put(obj)
            return V.Ref(ref_id, julia_type_name(obj))
        raise EvalError("cannot send runtime object %r" % type(obj).__name__)

    def reply_value(self, obj) -> None:
        """Classify and answer RESULT: by value when fully translatable,
        otherwise as a fresh registry reference."""
        if V.is_value(obj) and classify_result(obj) == FULL:
            wire.write_frame(wire.Result(obj), self.stream)
            return
        if V.is_value(obj) or isinstance(obj, CALLABLE_SHAPES):
            ref_id = self.registry.put(obj)
            ref = V.Ref(ref_id, julia_type_name(obj))
            wire.write_frame(wire.Result(ref), self.stream)
            return
        raise EvalError("cannot return runtime object %r" % type(obj).__name__)

    # -- callbacks -----------------------------------------------------------------

    def _call_callback(self, cb_id: int, positional, named):
        frame = wire.Call.to_callback(
            cb_id,
            tuple(self.outbound_runtime(a) for a in positional),
            tuple((n, self.outbound_runtime(a)) for n, a in named),
        )
        wire.write_frame(frame, self.stream)
        while True:
            reply = wire.read_frame(self.stream.reader)
            if isinstance(reply, wire.Result):
                return self.reify(reply.value)
            if isinstance(reply, wire.Fail):
                raise _CallbackFailed(reply.message, reply.detail)
            if isinstance(reply, wire.Release):
                self.registry.release(reply.ref_id)
                continue
            if isinstance(reply, wire.Byebye):
                self.alive = False
                raise ProtocolError("client left during a callback")
            # a nested request issued while the client handles our callback
            self.dispatch(reply)

    # -- dispatch ----------------------------------------------------------------

    def dispatch(self, frame) -> None:
        if isinstance(frame, wire.Release):
            self.registry.release(frame.ref_id)
            return
        if isinstance(frame, wire.Byebye):
            self.alive = False
            return
        try:
            if isinstance(frame, wire.Call):
                self._do_call(frame)
            elif isinstance(frame, wire.Eval):
                self.reply_value(eval_expression(frame.expression, {}, self.ctx))
            elif isinstance(frame, wire.Let):
                bindings = {n: self.reify(v) for n, v in frame.bindings}
                self.reply_value(eval_expression(frame.expression, bindings, self.ctx))
            elif isinstance(frame, wire.Fetch):
                stored = self.registry.get(frame.ref_id)
                if not V.is_value(stored):
                    raise TranslationError(
                        "function at $ cannot be deep-translated"
                    )
                wire.write_frame(wire.Result(deep_translate(stored)), self.stream)
            elif isinstance(frame, wire.Put):
                obj = self.reify(frame.value)
                ref_id = self.registry.put(obj)
                ref = V.Ref(ref_id, julia_type_name(obj))
                wire.write_frame(wire.Result(ref), self.stream)
            elif isinstance(frame, wire.Scan):
                wire.write_frame(wire.Result(self._do_scan(frame)), self.stream)
            else:
                raise ProtocolError(
                    "unexpected frame %s from client" % type(frame).__name__
                )
        except _CallbackFailed as exc:
            detail = exc.message if not exc.detail else "%s\n%s" % (exc.message, exc.detail)
            self._fail("callback failed", detail)
        except (EvalError, TranslationError, V.ValueError_) as exc:
            self._fail(str(exc), getattr(exc, "detail", ""))
        except ProtocolError:
            raise
        except BridgewireError:
            raise
        except Exception as exc:  # an evaluator bug must not kill the session
            log.exception("internal error during dispatch")
            self._fail("internal error: %s" % exc, traceback.format_exc())

    def _fail(self, message: str, detail: str = "") -> None:
        wire.write_frame(wire.Fail(message, detail), self.stream)

    def _do_call(self, frame: "wire.Call") -> None:
        if frame.callee_kind == wire.CalleeKind.NAMED:
            callee = self._resolve_name(frame.callee)
        elif frame.callee_kind == wire.CalleeKind.REFERENCE:
            callee = self.registry.get(frame.callee)
        else:
            callee = CallbackHandle(frame.callee)
        positional = [self.reify(v) for v in frame.positional]
        named = [(n, self.reify(v)) for n, v in frame.named]
        self.reply_value(apply_function(callee, positional, named, self.ctx))

    def _do_scan(self, frame: "wire.Scan") -> "V.List":
        module = self.modules.get(frame.module_path)
        if module is None:
            raise EvalError("unknown module %r" % frame.module_path)
        entries = dict(module.exports)
        if frame.include_unexported:
            entries.update(module.unexported)
        infos = []
        claimed: Dict[str, str] = {}
        for name in sorted(entries):
            entity = entries[name]
            if isinstance(entity, Constructor):
                kind = "type"
            elif isinstance(entity, CALLABLE_SHAPES):
                kind = "function"
            else:
                kind = "value"
            alias = ascii_alias(name)
            for key in {name, alias}:
                owner = claimed.setdefault(key, name)
                if owner != name:
                    raise EvalError(
                        "alias collision in %s: %r and %r both map to %r"
                        % (frame.module_path, owner, name, key)
                    )
            infos.append(
                V.Struct(
                    "SymbolInfo",
                    (
                        ("name", V.TypedArray.scalar(ElementType.STRING, name)),
                        ("kind", V.TypedArray.scalar(ElementType.STRING, kind)),
                        ("alias", V.TypedArray.scalar(ElementType.STRING, alias)),
                    ),
                )
            )
        return V.List(tuple(infos))

    # -- session loop -------------------------------------------------------------

    def run(self) -> None:
        try:
            wire.server_handshake(self.stream)
        except (BridgewireError, OSError) as exc:
            log.info("handshake failed: %s", exc)
            self.stream.close()
            return
        log.info("session open")
        try:
            while self.alive:
                frame = wire.try_read_frame(self.stream.reader)
                if frame is None:
                    break
                self.dispatch(frame)
        except PrematureEndError:
            log.info("connection dropped mid-frame")
        except (ProtocolError, OSError) as exc:
            log.info("session aborted: %s", exc)
        finally:
            self.registry.clear()
            self.stream.close()
            log.info("session closed")


class Server:
    """TCP acceptor; one daemon thread per session."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.host = host
        self.port = port
        self._sock: Optional[socket.socket] = None
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def start(self) -> int:
        """Bind and begin accepting in the background; returns the port."""
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((self.host, self.port))
        self._sock.listen(16)
        self._sock.settimeout(0.2)
        self.port = self._sock.getsockname()[1]
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._thread.start()
        return self.port

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _addr = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            handler = SessionHandler(SocketStream(conn))
            threading.Thread(target=handler.run, daemon=True).start()

    def stop(self) -> None:
        self._stop.set()
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    def serve_forever(self) -> None:
        """Run until interrupted; used by the command-line server."""
        self.start()
        print("BRIDGEWIRE LISTENING %d" % self.port, flush=True)
        log.info("listening on %s:%d", self.host, self.port)
        try:
            while True:
                self._thread.join(timeout=1.0)
                if not self._thread.is_alive():
                    break
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()


def main(host: str = "127.0.0.1", port: int = 0) -> int:
    _configure_logging()
    server = Server(host, port)
    try:
        server.serve_forever()
    except OSError as exc:
        print("bridgewire-server: %s" % exc, flush=True)
        return 1
    return 0


if __name__ == "__main__":
    import sys

    from .cli import server_main

    sys.exit(server_main())
