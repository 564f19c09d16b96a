"""Framing, handshake, and the public codec surface.

Value encode/decode is delegated to the fastest available backend: the
compiled extension ``_wirecore`` when it imported cleanly, otherwise
the pure-Python ``_pycodec``. Setting BRIDGEWIRE_PURE=1 forces the
fallback. Both produce byte-identical streams.

Frames are thin dataclasses; each one is self-delimiting on the wire,
so a reader can parse as bytes arrive without any message length
prefix.
"""

from __future__ import annotations

import enum
import os
import struct
from dataclasses import dataclass
from typing import Optional, Tuple, Union

from . import _pycodec
from . import values as V
from .errors import HandshakeError, ProtocolError, WireError
from .stream import BufferReader, Reader

if os.environ.get("BRIDGEWIRE_PURE"):
    _backend = _pycodec
else:
    try:
        from . import _wirecore as _backend  # type: ignore[attr-defined]
    except ImportError:
        _backend = _pycodec

encode_value_into = _backend.encode_value_into
decode_value_from = _backend.decode_value


def backend_name() -> str:
    return _backend.BACKEND


MAGIC = b"BWR1"
PROTOCOL_VERSION = 1

_u32 = struct.Struct("<I")
_u64 = struct.Struct("<Q")


def encode_value(v) -> bytes:
    """One Value to its exact wire bytes."""
    out = bytearray()
    encode_value_into(v, out)
    return bytes(out)


def decode_value(source) -> "V.Value":
    """One Value from bytes or a Reader; bytes must contain exactly one."""
    if isinstance(source, (bytes, bytearray, memoryview)):
        reader = BufferReader(bytes(source))
        v = decode_value_from(reader)
        if not reader.at_end():
            raise WireError(
                "%d trailing bytes after value" % reader.remaining,
                offset=reader.offset,
            )
        return v
    return decode_value_from(source)


class FrameKind(enum.IntEnum):
    CALL = 0x01
    RESULT = 0x02
    FAIL = 0x03
    RELEASE = 0x04
    EVAL = 0x05
    LET = 0x06
    FETCH = 0x07
    PUT = 0x08
    SCAN = 0x09
    BYEBYE = 0x0F
    OUT = 0x50
    ERR = 0x51


class CalleeKind(enum.IntEnum):
    NAMED = 0x00
    REFERENCE = 0x01
    CALLBACK = 0x02


@dataclass(frozen=True)
class Call:
    callee_kind: CalleeKind
    callee: Union[str, int]
    positional: Tuple["V.Value", ...] = ()
    named: Tuple[Tuple[str, "V.Value"], ...] = ()

    kind = FrameKind.CALL

    @classmethod
    def to_named(cls, name, positional=(), named=()):
        return cls(CalleeKind.NAMED, name, tuple(positional), tuple(named))

    @classmethod
    def to_reference(cls, ref_id, positional=(), named=()):
        return cls(CalleeKind.REFERENCE, int(ref_id), tuple(positional), tuple(named))

    @classmethod
    def to_callback(cls, cb_id, positional=(), named=()):
        return cls(CalleeKind.CALLBACK, int(cb_id), tuple(positional), tuple(named))


@dataclass(frozen=True)
class Result:
    value: "V.Value"

    kind = FrameKind.RESULT


@dataclass(frozen=True)
class Fail:
    message: str
    detail: str = ""

    kind = FrameKind.FAIL


@dataclass(frozen=True)
class Release:
    ref_id: int

    kind = FrameKind.RELEASE


@dataclass(frozen=True)
class Eval:
    expression: str

    kind = FrameKind.EVAL


@dataclass(frozen=True)
class Let:
    expression: str
    bindings: Tuple[Tuple[str, "V.Value"], ...] = ()

    kind = FrameKind.LET


@dataclass(frozen=True)
class Fetch:
    ref_id: int

    kind = FrameKind.FETCH


@dataclass(frozen=True)
class Put:
    value: "V.Value"

    kind = FrameKind.PUT


@dataclass(frozen=True)
class Scan:
    module_path: str
    include_unexported: bool = False

    kind = FrameKind.SCAN


@dataclass(frozen=True)
class Out:
    chunk: str

    kind = FrameKind.OUT


@dataclass(frozen=True)
class Err:
    chunk: str

    kind = FrameKind.ERR


@dataclass(frozen=True)
class Byebye:
    kind = FrameKind.BYEBYE


Frame = Union[Call, Result, Fail, Release, Eval, Let, Fetch, Put, Scan, Out, Err, Byebye]


def _enc_str(s: str, out: bytearray) -> None:
    raw = s.encode("utf-8")
    out += _u32.pack(len(raw))
    out += raw


def encode_frame(frame) -> bytes:
    """One Frame to its exact wire bytes."""
    out = bytearray([frame.kind])
    if isinstance(frame, Call):
        out.append(frame.callee_kind)
        if frame.callee_kind == CalleeKind.NAMED:
            _enc_str(frame.callee, out)
        else:
            out += _u64.pack(frame.callee)
        out += _u32.pack(len(frame.positional))
        for v in frame.positional:
            encode_value_into(v, out)
        out += _u32.pack(len(frame.named))
        for name, v in frame.named:
            _enc_str(name, out)
            encode_value_into(v, out)
    elif isinstance(frame, Result):
        encode_value_into(frame.value, out)
    elif isinstance(frame, Fail):
        _enc_str(frame.message, out)
        _enc_str(frame.detail, out)
    elif isinstance(frame, Release):
        out += _u64.pack(frame.ref_id)
    elif isinstance(frame, Eval):
        _enc_str(frame.expression, out)
    elif isinstance(frame, Let):
        _enc_str(frame.expression, out)
        out += _u32.pack(len(frame.bindings))
        for name, v in frame.bindings:
            _enc_str(name, out)
            encode_value_into(v, out)
    elif isinstance(frame, Fetch):
        out += _u64.pack(frame.ref_id)
    elif isinstance(frame, Put):
        encode_value_into(frame.value, out)
    elif isinstance(frame, Scan):
        _enc_str(frame.module_path, out)
        out.append(0x01 if frame.include_unexported else 0x00)
    elif isinstance(frame, (Out, Err)):
        _enc_str(frame.chunk, out)
    elif isinstance(frame, Byebye):
        pass
    else:
        raise ProtocolError("cannot encode frame %r" % type(frame).__name__)
    return bytes(out)


def write_frame(frame, stream) -> int:
    """Encode and send one frame; returns the byte count written."""
    data = encode_frame(frame)
    stream.write(data)
    return len(data)


def _read_u32(r: Reader) -> int:
    return _u32.unpack(r.read_exact(4))[0]


def _read_u64(r: Reader) -> int:
    return _u64.unpack(r.read_exact(8))[0]


def _read_str(r: Reader) -> str:
    at = r.offset
    n = _read_u32(r)
    if n >= _pycodec.MAX_STRING:
        raise WireError("string length %d exceeds cap" % n, offset=at)
    raw = r.read_exact(n)
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise WireError("invalid UTF-8 in string: %s" % exc, offset=at) from None


def read_frame(r: Reader) -> Frame:
    """Parse exactly one frame from the reader.

    An unknown kind byte is fatal for the whole session: with no length
    prefix there is no way to resynchronize past an unparseable frame.
    """
    at = r.offset
    kind = r.read_byte()
    if kind == FrameKind.CALL:
        ck = r.read_byte()
        if ck == CalleeKind.NAMED:
            callee: Union[str, int] = _read_str(r)
        elif ck in (CalleeKind.REFERENCE, CalleeKind.CALLBACK):
            callee = _read_u64(r)
        else:
            raise ProtocolError("unknown callee kind 0x%02X at offset %d" % (ck, at))
        npos = _read_u32(r)
        positional = tuple(decode_value_from(r) for _ in range(npos))
        nnamed = _read_u32(r)
        named = []
        for _ in range(nnamed):
            name = _read_str(r)
            named.append((name, decode_value_from(r)))
        return Call(CalleeKind(ck), callee, positional, tuple(named))
    if kind == FrameKind.RESULT:
        return Result(decode_value_from(r))
    if kind == FrameKind.FAIL:
        return Fail(_read_str(r), _read_str(r))
    if kind == FrameKind.RELEASE:
        return Release(_read_u64(r))
    if kind == FrameKind.EVAL:
        return Eval(_read_str(r))
    if kind == FrameKind.LET:
        expression = _read_str(r)
        n = _read_u32(r)
        bindings = []
        for _ in range(n):
            name = _read_str(r)
            bindings.append((name, decode_value_from(r)))
        return Let(expression, tuple(bindings))
    if kind == FrameKind.FETCH:
        return Fetch(_read_u64(r))
    if kind == FrameKind.PUT:
        return Put(decode_value_from(r))
    if kind == FrameKind.SCAN:
        path = _read_str(r)
        flags = r.read_byte()
        if flags & ~0x01:
            raise ProtocolError(
                "reserved scan flag bits set: 0x%02X at offset %d" % (flags, at)
            )
        return Scan(path, bool(flags & 0x01))
    if kind == FrameKind.OUT:
        return Out(_read_str(r))
    if kind == FrameKind.ERR:
        return Err(_read_str(r))
    if kind == FrameKind.BYEBYE:
        return Byebye()
    raise ProtocolError("unknown frame kind 0x%02X at offset %d" % (kind, at))


def try_read_frame(r: Reader) -> Optional[Frame]:
    """read_frame, but None if the stream is cleanly at its end."""
    first = r.try_read_byte()
    if first is None:
        return None
    return read_frame(_ChainReader(first, r))


class _ChainReader(Reader):
    """Reader that replays one already-consumed byte, then delegates."""

    def __init__(self, first_byte: int, rest: Reader):
        self._first: Optional[bytes] = bytes([first_byte])
        self._rest = rest
        super().__init__(self._pull)
        self._offset = rest.offset - 1

    def _pull(self, n: int) -> bytes:
        if self._first is not None:
            b, self._first = self._first, None
            return b
        return self._rest._read(n)


def encode_handshake(version: int = PROTOCOL_VERSION) -> bytes:
    return MAGIC + _u32.pack(version)


def read_handshake(r: Reader) -> int:
    got = r.read_exact(4)
    if got != MAGIC:
        raise HandshakeError("bad magic %r (expected %r)" % (got, MAGIC))
    return _read_u32(r)


def client_handshake(stream, version: int = PROTOCOL_VERSION) -> int:
    """Send our hello, require the peer to answer with an equal version."""
    stream.write(encode_handshake(version))
    peer = read_handshake(stream.reader)
    if peer != version:
        raise HandshakeError(
            "protocol version mismatch: ours %d, peer %d" % (version, peer)
        )
    return peer


def server_handshake(stream, version: int = PROTOCOL_VERSION) -> int:
    """Read the client hello, answer, and require equal versions."""
    peer = read_handshake(stream.reader)
    stream.write(encode_handshake(version))
    if peer != version:
        raise HandshakeError(
            "protocol version mismatch: ours %d, peer %d" % (version, peer)
        )
    return peer
