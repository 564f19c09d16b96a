"""Shared fixtures: one in-process server, per-test sessions.

The TCP server is process-wide (session scope) because starting one is
cheap but not free and sessions are fully isolated anyway. The `pair`
fixture instead wires a Session straight to its SessionHandler over a
socketpair, so tests can watch the server-side registry.
"""

import socket
import threading

import pytest

from bridgewire import connect, wire
from bridgewire.client import Session
from bridgewire.server import Server, SessionHandler
from bridgewire.stream import SocketStream


@pytest.fixture(scope="session")
def server():
    srv = Server("127.0.0.1", 0)
    srv.start()
    yield srv
    srv.stop()


@pytest.fixture
def session(server):
    s = connect("127.0.0.1", server.port)
    yield s
    s.close()


class HandlerPair:
    """A client session plus direct access to its server-side handler."""

    def __init__(self):
        client_sock, server_sock = socket.socketpair()
        self.handler = SessionHandler(SocketStream(server_sock))
        self.thread = threading.Thread(target=self.handler.run, daemon=True)
        self.thread.start()
        stream = SocketStream(client_sock)
        wire.client_handshake(stream)
        self.session = Session(stream)

    def registry_size(self) -> int:
        return self.handler.registry.size()

    def close(self):
        self.session.close()
        self.thread.join(timeout=2.0)


@pytest.fixture
def pair():
    p = HandlerPair()
    yield p
    p.close()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One verdict line per acceptance criterion at the end of the run."""
    rows = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" in nodeid and getattr(rep, "when", "call") == "call":
                rows.append((nodeid.split("::")[-1], status))
    if not rows:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, status in sorted(rows):
        verdict = "PASS" if status == "passed" else "FAIL"
        terminalreporter.write_line("%s  %s" % (verdict, name))
