"""Session behavior against a live in-process server.

Covers the paper-shaped workflows: remote calls, proxies, callbacks
(including re-entrant nesting), module import, output forwarding,
release hygiene, interrupts, and error containment.
"""

import gc
import threading
import time

import numpy as np
import pytest

from bridgewire import (
    MISSING,
    Annotated,
    ColumnTable,
    Proxy,
    RemoteError,
    RemoteFunction,
    SessionError,
    SessionInterrupted,
    StaleProxyError,
    connect,
)


# --- basic calls ---------------------------------------------------------------


def test_eval_scalar(session):
    assert session.eval("1 + 1") == 2


def test_call_positional(session):
    assert session.call("Base.sqrt", 4.0) == 2.0


def test_call_named(session):
    t = session.call("Base.maketable", a=[1, 2], b=["x", "y"])
    assert isinstance(t, Proxy)


def test_let_eval_binds_values(session):
    assert session.let_eval("x * y", x=6, y=7.0) == 42.0


def test_let_bindings_do_not_persist(session):
    session.let_eval("x + 1", x=1)
    with pytest.raises(RemoteError, match="x"):
        session.eval("x")


def test_scalar_int_widens_remotely(session):
    # host ints travel 32-bit; the runtime widens to its native width
    assert session.call("Base.typeof", 3) == "Int64"
    assert session.call("Base.typeof", [1, 2]) == "Array{Int64,1}"


def test_float_vector_roundtrip(session):
    got = session.call("Base.identity", [1.0, 2.5])
    assert isinstance(got, np.ndarray)
    assert list(got) == [1.0, 2.5]


def test_missing_and_nan_survive(session):
    got = session.call("Base.identity", [1.0, MISSING, float("nan")])
    assert isinstance(got, np.ma.MaskedArray)
    assert bool(got.mask[1]) and not bool(got.mask[2])
    assert np.isnan(got.data[2])


def test_annotated_value_passes_through(session):
    got = session.call("Base.typeof", Annotated(1.5, "Float32"))
    assert got == "Float32"


# --- errors ----------------------------------------------------------------------


def test_remote_error_surfaces(session):
    with pytest.raises(RemoteError, match="DomainError"):
        session.call("Base.sqrt", -1.0)


def test_parse_error_carries_position(session):
    with pytest.raises(RemoteError, match="position"):
        session.eval("1 +")


def test_failed_call_does_not_poison_session(session):
    with pytest.raises(RemoteError):
        session.eval("nonsense(")
    assert session.eval("2 + 2") == 4


def test_unknown_function(session):
    with pytest.raises(RemoteError, match="nosuch"):
        session.call("Base.nosuch", 1)


# --- proxies ------------------------------------------------------------------------


def test_put_fetch_roundtrip(session):
    p = session.put({"a": 1, "b": [1.0, 2.0]})
    assert isinstance(p, Proxy)
    got = session.fetch(p)
    assert got["a"] == 1
    assert list(got["b"]) == [1.0, 2.0]


def test_proxy_reference_used_in_call(session):
    p = session.put([3.0, 4.0])
    got = session.call("Base.sum", p)
    assert got == 7.0


def test_complex_results_arrive_as_proxies(session):
    p = session.eval('Library.Book("A", "T", 1999)')
    assert isinstance(p, Proxy)
    rec = session.fetch(p)
    assert rec.type_name == "Library.Book"
    assert rec.value["year"] == 1999


def test_proxy_fetch_method(session):
    p = session.put([1, 2, 3])
    assert list(p.fetch()) == [1, 2, 3]


def test_function_proxy_is_callable(session):
    f = session.eval("fn(x) -> x * x")
    assert callable(f)
    assert f(5) == 25


def test_proxy_repr_mentions_type(session):
    p = session.eval('Library.Book("A", "T", 1999)')
    assert "Book" in repr(p)


def test_released_proxy_rejected(session):
    p = session.put([1, 2])
    p.release()
    with pytest.raises(StaleProxyError):
        session.fetch(p)


# --- release hygiene ------------------------------------------------------------------


def test_dropped_proxies_release_server_objects(pair):
    session = pair.session
    baseline = pair.registry_size()
    proxies = [session.put([float(i)]) for i in range(50)]
    assert pair.registry_size() == baseline + 50
    del proxies
    gc.collect()
    session.release_flush()
    session.eval("0")  # sync: releases are processed in stream order
    assert pair.registry_size() == baseline


def test_explicit_release_frees_immediately(pair):
    session = pair.session
    baseline = pair.registry_size()
    p = session.put([1.0])
    p.release()
    session.eval("0")
    assert pair.registry_size() == baseline


# --- callbacks --------------------------------------------------------------------------


def test_host_callback(session):
    got = session.call("Base.map", lambda x: x + 1, [1, 2, 3])
    assert list(got) == [2, 3, 4]


def test_callback_result_translates_both_ways(session):
    got = session.call("Base.map", lambda s: s.upper(), ["a", "b"])
    assert got == ["A", "B"]


def test_reentrant_callback_calls_back_in(session):
    def cb(x):
        return session.call("Base.sqrt", float(x * x))

    got = session.call("Base.map", cb, [2, 3])
    assert list(got) == [2.0, 3.0]


def test_callback_exception_propagates_with_detail(session):
    def bad(x):
        raise ValueError("host-side boom")

    with pytest.raises(RemoteError, match="host-side boom") as ei:
        session.call("Base.map", bad, [1])
    assert "ValueError" in ei.value.detail


def test_session_usable_after_callback_failure(session):
    with pytest.raises(RemoteError):
        session.call("Base.map", lambda x: 1 / 0, [1])
    assert session.eval("1 + 1") == 2


def test_same_function_reuses_callback_id(session):
    fn = lambda x: x  # noqa: E731
    session.call("Base.map", fn, [1])
    first = dict(session._callbacks)
    session.call("Base.map", fn, [2])
    assert list(session._callbacks) == list(first)


def test_lambda_from_eval_passed_back(session):
    f = session.eval("fn(x) -> x + 10")
    got = session.call("Base.map", f, [1, 2])
    assert list(got) == [11, 12]


# --- module import ---------------------------------------------------------------------


def test_import_module_lists_exports(session):
    base = session.import_module("Base")
    assert "sqrt" in base and "map" in base
    assert base.sqrt(9.0) == 3.0


def test_import_module_constructor(session):
    lib = session.import_module("Library")
    assert isinstance(lib.Book, RemoteFunction) and lib.Book.is_type
    p = lib.Book("Shakespeare", "Romeo and Julia", 1597)
    assert session.call("Library.cite", p) == "Shakespeare: Romeo and Julia (1597)"


def test_import_module_hides_unexported_by_default(session):
    lib = session.import_module("Library")
    assert "shelfcount" not in lib
    full = session.import_module("Library", include_unexported=True)
    assert full.shelfcount() == 3


def test_import_module_ascii_alias(session):
    greek = session.import_module("Greek")
    assert "logσ" in greek and "log<sigma>" in greek
    assert greek["log<sigma>"] is greek["logσ"]
    out = greek["log<sigma>"](0.0)
    assert abs(out - (-0.6931471805599453)) < 1e-12


def test_import_unknown_module(session):
    with pytest.raises(RemoteError, match="Nope"):
        session.import_module("Nope")


# --- output forwarding -------------------------------------------------------------------


def test_print_routed_to_out_sink(server):
    outs, errs = [], []
    s = connect("127.0.0.1", server.port, out=outs.append, err=errs.append)
    try:
        s.eval('Base.println("to out")')
        s.eval('Base.warn("to err")')
    finally:
        s.close()
    assert "".join(outs) == "to out\n"
    assert "".join(errs) == "Warning: to err\n"


def test_output_arrives_before_result(session):
    events = []
    session.set_output(out=lambda c: events.append(("out", c)))
    session.eval('Base.println("x")')
    events.append(("result", None))
    assert events[0][0] == "out" and events[-1][0] == "result"


# --- interrupt and reconnect ----------------------------------------------------------------


def test_interrupt_unblocks_eval(server):
    s = connect("127.0.0.1", server.port)
    try:
        pre = s.put([1.0])
        timer = threading.Timer(0.3, s.interrupt)
        timer.start()
        t0 = time.monotonic()
        with pytest.raises(SessionInterrupted):
            s.eval("Base.spin()")
        assert time.monotonic() - t0 < 2.0
        # connected sessions require an explicit reconnect
        with pytest.raises(SessionError, match="reconnect"):
            s.eval("1")
        s.reconnect()
        assert s.call("Base.sqrt", 4.0) == 2.0
        with pytest.raises(StaleProxyError):
            s.fetch(pre)
    finally:
        s.close()


def test_proxies_from_before_interrupt_are_stale_in_calls(server):
    s = connect("127.0.0.1", server.port)
    try:
        pre = s.put([2.0])
        s.interrupt()
        s.reconnect()
        with pytest.raises(StaleProxyError):
            s.call("Base.sum", pre)
    finally:
        s.close()


def test_closed_session_rejects_use(server):
    s = connect("127.0.0.1", server.port)
    s.close()
    with pytest.raises(SessionError, match="closed"):
        s.eval("1")


def test_context_manager_closes(server):
    with connect("127.0.0.1", server.port) as s:
        assert s.eval("1") == 1
    assert not s.live


# --- wire accounting ---------------------------------------------------------------------------


def test_byte_counters_move(session):
    sent0, recv0 = session.bytes_sent, session.bytes_received
    session.eval("1 + 1")
    assert session.bytes_sent > sent0
    assert session.bytes_received > recv0
