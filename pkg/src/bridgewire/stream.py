"""Byte sources and sinks for the streaming codec.

The decoder never sees a whole message; it pulls exactly the bytes it
needs through a Reader. A Reader wraps any object with a
``recv_into(memoryview) -> int`` style primitive (socket-like) or a
``read(n) -> bytes`` primitive (file-like), tracks the absolute offset
consumed, and turns short reads at end of stream into
PrematureEndError so truncation is always a loud, typed failure.
"""

from __future__ import annotations

import io
import socket
from typing import Callable, Optional

from .errors import PrematureEndError


class Reader:
    """Pull-based reader with offset tracking over a read(n) callable."""

    def __init__(self, read: Callable[[int], bytes], tap: Optional[Callable] = None):
        self._read = read
        self._offset = 0
        self.tap = tap

    @property
    def offset(self) -> int:
        """Absolute count of bytes consumed so far."""
        return self._offset

    def read_exact(self, n: int) -> bytes:
        if n == 0:
            return b""
        parts = []
        remaining = n
        while remaining > 0:
            chunk = self._read(remaining)
            if not chunk:
                raise PrematureEndError(
                    "stream ended %d bytes short" % remaining, offset=self._offset
                )
            parts.append(chunk)
            remaining -= len(chunk)
        data = parts[0] if len(parts) == 1 else b"".join(parts)
        self._offset += n
        if self.tap is not None:
            self.tap(data)
        return data

    def read_byte(self) -> int:
        return self.read_exact(1)[0]

    def try_read_byte(self) -> Optional[int]:
        """One byte, or None if the stream is already at its end."""
        chunk = self._read(1)
        if not chunk:
            return None
        self._offset += 1
        if self.tap is not None:
            self.tap(chunk)
        return chunk[0]


class BufferReader(Reader):
    """Reader over an in-memory bytes object."""

    def __init__(self, data: bytes):
        self._buf = memoryview(data)
        self._pos = 0
        super().__init__(self._pull)

    def _pull(self, n: int) -> bytes:
        chunk = self._buf[self._pos : self._pos + n]
        self._pos += len(chunk)
        return bytes(chunk)

    @property
    def remaining(self) -> int:
        return len(self._buf) - self._pos

    def at_end(self) -> bool:
        return self._pos >= len(self._buf)


class ChunkedReader(Reader):
    """Reader that feeds at most ``chunk`` bytes per pull.

    Only used in tests, to prove decoding is independent of read
    granularity.
    """

    def __init__(self, data: bytes, chunk: int):
        if chunk < 1:
            raise ValueError("chunk must be >= 1")
        self._buf = memoryview(data)
        self._pos = 0
        self._chunk = chunk
        super().__init__(self._pull)

    def _pull(self, n: int) -> bytes:
        n = min(n, self._chunk)
        chunk = self._buf[self._pos : self._pos + n]
        self._pos += len(chunk)
        return bytes(chunk)


class SocketStream:
    """Blocking socket wrapped as a paired Reader plus write side.

    ``tap_in`` and ``tap_out`` observe every byte moved, for traffic
    accounting in tests and the benchmark.
    """

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.tap_out: Optional[Callable] = None
        self.reader = Reader(self._recv)

    def _recv(self, n: int) -> bytes:
        try:
            return self.sock.recv(min(n, 1 << 16))
        except (ConnectionResetError, BrokenPipeError, OSError):
            return b""

    def write(self, data: bytes) -> None:
        if self.tap_out is not None:
            self.tap_out(data)
        self.sock.sendall(data)

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class FileStream:
    """Paired reader/writer over binary file objects (pipes, BytesIO)."""

    def __init__(self, rfile: io.RawIOBase, wfile: io.RawIOBase):
        self.rfile = rfile
        self.wfile = wfile
        self.reader = Reader(self._pull)

    def _pull(self, n: int) -> bytes:
        return self.rfile.read(n) or b""

    def write(self, data: bytes) -> None:
        self.wfile.write(data)
        self.wfile.flush()

    def close(self) -> None:
        for f in (self.rfile, self.wfile):
            try:
                f.close()
            except OSError:
                pass
