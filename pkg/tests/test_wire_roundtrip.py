"""Round-trip and robustness properties of the binary codec.

Three pillars:
  * decode(encode(v)) == v over a large generated corpus,
  * decoding is independent of read granularity,
  * no prefix of a valid message decodes (the format is self-delimiting
    only at full length), and arbitrary corruption never escapes the
    error taxonomy.

The pure-Python and compiled backends are additionally held to
byte-identical output and error parity.
"""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _refcodec import ref_encode_value
from bridgewire import golden, wire
from bridgewire import values as V
from bridgewire.conformance import ValueGenerator, mutate
from bridgewire.errors import BridgewireError, PrematureEndError
from bridgewire.stream import BufferReader, ChunkedReader
from bridgewire.values import MISSING, ElementType as E

try:
    from bridgewire import _wirecore
except ImportError:
    _wirecore = None

from bridgewire import _pycodec


def _corpus(seed, n):
    gen = ValueGenerator(seed=seed)
    return [gen.value() for _ in range(n)]


def test_generated_values_roundtrip():
    for v in _corpus(101, 2000):
        raw = wire.encode_value(v)
        assert wire.decode_value(raw) == v


def test_reference_encoder_differential():
    # the production encoder must agree with the naive transcription
    for v in _corpus(202, 1000):
        assert wire.encode_value(v) == ref_encode_value(v)


@pytest.mark.parametrize("chunk", [1, 7, 4096])
def test_chunked_reads_are_equivalent(chunk):
    for v in _corpus(303, 400):
        raw = wire.encode_value(v)
        r = ChunkedReader(raw, chunk)
        assert wire.decode_value_from(r) == v


def test_every_strict_prefix_fails_cleanly():
    # exhaustive prefixes on the golden corpus: small, but covers every
    # construct in the grammar
    for vec in golden.VECTORS:
        raw = bytes.fromhex(vec.hex)
        for cut in range(len(raw)):
            r = BufferReader(raw[:cut])
            with pytest.raises(PrematureEndError):
                if vec.is_frame:
                    wire.read_frame(r)
                else:
                    wire.decode_value_from(r)


def test_random_cut_points_on_generated_values():
    import random

    rng = random.Random(404)
    for v in _corpus(404, 300):
        raw = wire.encode_value(v)
        if len(raw) < 2:
            continue
        cut = rng.randrange(0, len(raw))
        with pytest.raises(PrematureEndError):
            wire.decode_value(raw[:cut])


def test_trailing_garbage_rejected():
    raw = wire.encode_value(V.TypedArray.scalar(E.F64, 1.0)) + b"\x00"
    with pytest.raises(BridgewireError):
        wire.decode_value(raw)


def test_mutated_bytes_never_escape_error_taxonomy():
    import random

    rng = random.Random(505)
    base = [wire.encode_value(v) for v in _corpus(505, 120)]
    for raw in base:
        for _ in range(20):
            blob = mutate(rng, raw)
            r = BufferReader(blob)
            try:
                while wire.try_read_frame(r) is not None:
                    pass
            except BridgewireError:
                pass


@pytest.mark.skipif(_wirecore is None, reason="compiled backend unavailable")
def test_backends_encode_identically():
    for v in _corpus(606, 1500):
        out_py = bytearray()
        _pycodec.encode_value_into(v, out_py)
        out_c = bytearray()
        _wirecore.encode_value_into(v, out_c)
        assert bytes(out_py) == bytes(out_c)


@pytest.mark.skipif(_wirecore is None, reason="compiled backend unavailable")
def test_backends_decode_identically():
    for v in _corpus(707, 1500):
        raw = wire.encode_value(v)
        a = _pycodec.decode_value(BufferReader(raw))
        b = _wirecore.decode_value(BufferReader(raw))
        assert a == b == v


@pytest.mark.skipif(_wirecore is None, reason="compiled backend unavailable")
def test_backends_raise_identical_errors():
    import random

    rng = random.Random(808)
    base = [wire.encode_value(v) for v in _corpus(808, 150)]
    for raw in base:
        for _ in range(10):
            blob = mutate(rng, raw)
            outcomes = []
            for mod in (_pycodec, _wirecore):
                try:
                    got = mod.decode_value(BufferReader(blob))
                    outcomes.append(("ok", got))
                except BridgewireError as exc:
                    outcomes.append((type(exc).__name__, str(exc)))
            assert outcomes[0] == outcomes[1], blob.hex()


# --- hypothesis properties ---------------------------------------------------

finite_floats = st.floats(allow_nan=False, width=64)


@settings(max_examples=200, deadline=None)
@given(st.lists(finite_floats, max_size=40))
def test_float_vectors_roundtrip(xs):
    v = V.TypedArray.from_elements(E.F64, xs, dims=(len(xs),))
    assert wire.decode_value(wire.encode_value(v)) == v


@settings(max_examples=200, deadline=None)
@given(st.lists(st.one_of(st.text(max_size=20), st.none()), max_size=20))
def test_string_vectors_with_missing_roundtrip(items):
    cleaned = [MISSING if s is None else s for s in items]
    v = V.TypedArray.from_elements(E.STRING, cleaned, dims=(len(cleaned),))
    back = wire.decode_value(wire.encode_value(v))
    assert back == v
    assert list(back.elements()) == cleaned


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(min_value=-(2**63), max_value=2**63 - 1), max_size=30))
def test_i64_vectors_roundtrip(xs):
    v = V.TypedArray.from_elements(E.I64, xs, dims=(len(xs),))
    assert list(wire.decode_value(wire.encode_value(v)).elements()) == xs


@settings(max_examples=100, deadline=None)
@given(st.text(max_size=200))
def test_unicode_strings_roundtrip(s):
    v = V.TypedArray.scalar(E.STRING, s)
    assert wire.decode_value(wire.encode_value(v)).elements()[0] == s


@settings(max_examples=100, deadline=None)
@given(st.binary(max_size=64))
def test_random_bytes_decode_totally(blob):
    # decode must terminate with a value or a BridgewireError, nothing else
    try:
        wire.decode_value(blob)
    except BridgewireError:
        pass
