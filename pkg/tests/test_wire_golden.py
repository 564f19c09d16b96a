"""Golden wire vectors: every stored encoding is pinned byte for byte.

Each vector was produced by the naive reference encoder in _refcodec,
so these tests tie the production codec to an independently written
transcription of the byte grammar. A failure here means the wire
format moved.
"""

import pytest

from _refcodec import ref_encode_handshake, ref_encode_value
from bridgewire import golden, wire
from bridgewire.stream import BufferReader


@pytest.mark.parametrize("vec", golden.VECTORS, ids=lambda v: v.name)
def test_stored_bytes_match_production_encoder(vec):
    assert golden.encode_subject(vec).hex() == vec.hex


@pytest.mark.parametrize("vec", golden.VECTORS, ids=lambda v: v.name)
def test_stored_bytes_decode_back_to_subject(vec):
    raw = bytes.fromhex(vec.hex)
    r = BufferReader(raw)
    if vec.is_frame:
        decoded = wire.read_frame(r)
    else:
        decoded = wire.decode_value_from(r)
    assert r.at_end()
    assert decoded == vec.subject


@pytest.mark.parametrize("vec", golden.VECTORS, ids=lambda v: v.name)
def test_packaged_hex_files_match(vec):
    assert golden.load_hex(vec.name) == vec.hex


def test_reference_encoder_agrees_on_value_vectors():
    for vec in golden.VECTORS:
        if not vec.is_frame:
            assert ref_encode_value(vec.subject).hex() == vec.hex, vec.name


def test_check_all_passes():
    problems = golden.check_all()
    assert problems == []


def test_handshake_bytes_pinned():
    assert wire.encode_handshake().hex() == golden.HANDSHAKE_HEX
    assert ref_encode_handshake().hex() == golden.HANDSHAKE_HEX
    assert wire.encode_handshake()[:4] == b"BWR1"


def test_vector_corpus_covers_every_frame_and_tag():
    frames = {bytes.fromhex(v.hex)[0] for v in golden.VECTORS if v.is_frame}
    assert frames == {0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08,
                      0x09, 0x0F, 0x50, 0x51}
    tags = {bytes.fromhex(v.hex)[0] for v in golden.VECTORS if not v.is_frame}
    assert tags == {0x00, 0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07}
