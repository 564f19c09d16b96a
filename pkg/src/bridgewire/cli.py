"""Command-line entry points.

``bridgewire`` is the operator tool (serve, repl, bench, selftest);
``bridgewire-server`` is the bare server binary that sessions spawn.
Exit codes: 0 success, 1 operational failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
import threading
import time
from typing import List, Optional

from . import __version__
from .errors import (
    BridgewireError,
    DiscoveryError,
    RemoteError,
    SessionError,
    SessionInterrupted,
)
from .values import MISSING


def _port_arg(s: str) -> int:
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError("port must be an integer")
    if not 0 <= v <= 65535:
        raise argparse.ArgumentTypeError("port must be in [0, 65535]")
    return v


def _size_arg(s: str) -> int:
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError("size must be an integer")
    if v < 1:
        raise argparse.ArgumentTypeError("size must be >= 1")
    return v


def _apply_log(level: Optional[str]) -> None:
    if level:
        os.environ["BRIDGEWIRE_LOG"] = level


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bridgewire",
        description="Control a remote evaluation server over the binary wire protocol.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("serve", help="run an evaluation server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=_port_arg, default=0, help="0 picks an ephemeral port")
    p.add_argument("--log", choices=["off", "info", "debug"], default=None)

    p = sub.add_parser("repl", help="interactive expression prompt")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=_port_arg, default=None,
                   help="connect to a running server instead of spawning one")
    p.add_argument("--server-bin", default=None, help="server executable to spawn")
    p.add_argument("--log", choices=["off", "info", "debug"], default=None)

    p = sub.add_parser("bench", help="time the binary codec against the text baseline")
    p.add_argument("--size", type=_size_arg, default=1_000_000,
                   help="float element count (default 10^6)")
    p.add_argument("--format", choices=["binary", "json-baseline", "both"],
                   default="both")

    p = sub.add_parser("selftest", help="golden vectors, round trips, spawn smoke")
    p.add_argument("--server-bin", default=None)

    return parser


# -- serve -----------------------------------------------------------------


def cmd_serve(args) -> int:
    _apply_log(args.log)
    from .server import Server

    server = Server(host=args.host, port=args.port)
    try:
        server.serve_forever()
    except OSError as exc:
        print("cannot listen on %s:%d: %s" % (args.host, args.port, exc),
              file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        server.stop()
    return 0


def server_main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="bridgewire-server", description="Evaluation server."
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=_port_arg, default=0)
    parser.add_argument("--log", choices=["off", "info", "debug"], default=None)
    args = parser.parse_args(argv)
    args.cmd = "serve"
    return cmd_serve(args)


# -- repl --------------------------------------------------------------------


def _render(result) -> Optional[str]:
    import numpy as np

    from .client import Proxy
    from .translate import Annotated, ColumnTable

    if result is None:
        return None
    if result is MISSING:
        return "missing"
    if isinstance(result, Annotated):
        inner = _render(result.value)
        return "%s :: %s" % (inner, result.type_name)
    if isinstance(result, (Proxy, ColumnTable)):
        return repr(result)
    if isinstance(result, np.ma.MaskedArray) and result.ndim == 1:
        mask = np.ma.getmaskarray(result)
        parts = [
            "missing" if m else repr(v)
            for v, m in zip(result.data.tolist(), mask.tolist())
        ]
        return "[%s]" % ", ".join(parts)
    if isinstance(result, np.ndarray):
        return np.array2string(result, separator=", ")
    if isinstance(result, list):
        return "[%s]" % ", ".join(
            "missing" if item is MISSING else repr(item) for item in result
        )
    return repr(result)


def _open_repl_session(args):
    from . import client

    port = args.port
    if port is None and os.environ.get(client.ENV_PORT):
        port = int(os.environ[client.ENV_PORT])
    if port:
        session = client.connect(args.host, port)
        print("connected to %s:%d" % (args.host, port), file=sys.stderr)
    else:
        session = client.spawn(args.server_bin)
        print("spawned private server", file=sys.stderr)
    return session


def cmd_repl(args) -> int:
    _apply_log(args.log)
    try:
        session = _open_repl_session(args)
    except BridgewireError as exc:
        print("cannot start session: %s" % exc, file=sys.stderr)
        return 1
    print("type expressions; :quit leaves, Ctrl-C interrupts", file=sys.stderr)
    try:
        while True:
            try:
                line = input("bw> ")
            except EOFError:
                break
            except KeyboardInterrupt:
                print(file=sys.stderr)
                continue
            line = line.strip()
            if not line:
                continue
            if line == ":quit":
                break
            try:
                result = session.eval(line)
            except KeyboardInterrupt:
                session.interrupt()
                print("interrupted", file=sys.stderr)
                continue
            except SessionInterrupted:
                print("interrupted", file=sys.stderr)
                continue
            except RemoteError as exc:
                print("error: %s" % exc.message, file=sys.stderr)
                if exc.detail:
                    print(exc.detail, file=sys.stderr)
                continue
            except SessionError as exc:
                print("session lost: %s" % exc, file=sys.stderr)
                return 1
            text = _render(result)
            if text is not None:
                print(text)
    finally:
        session.close()
    return 0


# -- bench ---------------------------------------------------------------------


def cmd_bench(args) -> int:
    from . import bench

    print(bench.format_report(args.size, repeats=5, which=args.format))
    return 0


# -- selftest ---------------------------------------------------------------------


def _check(name: str, fn) -> Optional[str]:
    try:
        detail = fn()
    except Exception as exc:
        print("FAIL %-24s %s" % (name, exc))
        return "%s: %s" % (name, exc)
    print("PASS %-24s %s" % (name, detail or ""))
    return None


def _selftest_golden() -> str:
    from . import golden

    failures = golden.check_all()
    if failures:
        raise AssertionError("; ".join(failures))
    return "%d vectors" % len(golden.VECTORS)


def _selftest_roundtrip() -> str:
    from . import wire
    from .conformance import ValueGenerator

    g = ValueGenerator(seed=99, max_depth=3)
    for i in range(300):
        v = g.value()
        if wire.decode_value(wire.encode_value(v)) != v:
            raise AssertionError("round trip diverged on sample %d" % i)
    return "300 samples"


def _selftest_truncation() -> str:
    import random

    from . import golden, wire
    from . import values as V
    from .conformance import mutate_truncate
    from .errors import PrematureEndError
    from .stream import BufferReader

    rng = random.Random(5)
    n = 0
    for vec in golden.VECTORS:
        data = bytes.fromhex(vec.hex)
        for _ in range(10):
            cut = mutate_truncate(rng, data)
            if cut == data:
                continue
            try:
                if V.is_value(vec.subject):
                    wire.decode_value(cut)
                else:
                    wire.read_frame(BufferReader(cut))
                raise AssertionError("truncated %s decoded" % vec.name)
            except PrematureEndError:
                n += 1
    return "%d truncations" % n


def _selftest_spawn(server_bin: Optional[str]) -> str:
    from . import client

    session = client.spawn(server_bin)
    try:
        if session.call("Base.sqrt", 4.0) != 2.0:
            raise AssertionError("sqrt(4.0) != 2.0")
        timer = threading.Timer(0.3, session.interrupt)
        timer.start()
        t0 = time.monotonic()
        try:
            session.call("Base.spin")
            raise AssertionError("spin returned")
        except SessionInterrupted:
            pass
        finally:
            timer.cancel()
        elapsed = time.monotonic() - t0
        if elapsed > 2.0:
            raise AssertionError("interrupt took %.2f s" % elapsed)
        if session.call("Base.add", 1, 1) != 2:
            raise AssertionError("post-interrupt call failed")
        return "spawn+call+interrupt %.2f s" % elapsed
    finally:
        session.close()


def cmd_selftest(args) -> int:
    from .client import find_server_bin

    failures = []
    for name, fn in (
        ("golden-vectors", _selftest_golden),
        ("round-trip", _selftest_roundtrip),
        ("truncation", _selftest_truncation),
    ):
        failure = _check(name, fn)
        if failure:
            failures.append(failure)
    try:
        find_server_bin(args.server_bin)
        have_server = True
    except DiscoveryError:
        have_server = False
    if have_server:
        failure = _check("spawn-scenario", lambda: _selftest_spawn(args.server_bin))
        if failure:
            failures.append(failure)
    else:
        print("SKIP spawn-scenario          no server binary found")
    return 1 if failures else 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {
        "serve": cmd_serve,
        "repl": cmd_repl,
        "bench": cmd_bench,
        "selftest": cmd_selftest,
    }[args.cmd]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
