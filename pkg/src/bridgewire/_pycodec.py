"""Pure-Python codec kernels: one value in, bytes out, and back.

This is the fallback backend when the compiled extension is missing or
disabled. Both backends implement exactly two entry points with
byte-identical behavior:

    encode_value_into(value, out: bytearray) -> None
    decode_value(reader, max_depth=...) -> Value

The decoder is strict: unknown tags, set padding bits, non-0/1
booleans, non-zeroed missing placeholders, oversized dims and reserved
callback ids are all errors carrying the stream offset. Strictness
keeps independently written encoders honest.
"""

from __future__ import annotations

import struct

from . import values as V
from .errors import WireError
from .stream import Reader

BACKEND = "python"

MAX_STRING = 2**31
MAX_DIMS_PRODUCT = 2**31

_u32 = struct.Struct("<I")
_u64 = struct.Struct("<Q")
_i64 = struct.Struct("<q")

TAG_NULL = 0x00
TAG_ARRAY = 0x01
TAG_LIST = 0x02
TAG_NAMEDLIST = 0x03
TAG_STRUCT = 0x04
TAG_REF = 0x05
TAG_FNREF = 0x06
TAG_TABLE = 0x07

_ELEMENT_CODES = frozenset(int(e) for e in V.ElementType)


def _encode_str(s: str, out: bytearray) -> None:
    raw = s.encode("utf-8")
    if len(raw) >= MAX_STRING:
        raise WireError("string too long to encode: %d bytes" % len(raw))
    out += _u32.pack(len(raw))
    out += raw


def encode_value_into(v, out: bytearray, depth: int = 0) -> None:
    if depth > V.MAX_NESTING:
        raise WireError("value nesting exceeds %d levels" % V.MAX_NESTING)

    if isinstance(v, V.TypedArray):
        out.append(TAG_ARRAY)
        out.append(v.elem)
        out.append(0x01 if v.missing is not None else 0x00)
        dims = v.dims
        out.append(len(dims))
        for d in dims:
            out += _i64.pack(d)
        if v.missing is not None:
            out += v.missing
        if v.elem == V.ElementType.STRING:
            for s in v.data:
                _encode_str(s, out)
        else:
            out += v.data
        return

    if isinstance(v, V.Null):
        out.append(TAG_NULL)
        return

    if isinstance(v, V.List):
        out.append(TAG_LIST)
        out += _u32.pack(len(v.items))
        for item in v.items:
            encode_value_into(item, out, depth + 1)
        return

    if isinstance(v, V.NamedList):
        out.append(TAG_NAMEDLIST)
        out += _u32.pack(len(v.items))
        for name, item in v.items:
            _encode_str(name, out)
            encode_value_into(item, out, depth + 1)
        return

    if isinstance(v, V.Struct):
        out.append(TAG_STRUCT)
        _encode_str(v.type_name, out)
        out += _u32.pack(len(v.fields))
        for name, item in v.fields:
            _encode_str(name, out)
            encode_value_into(item, out, depth + 1)
        return

    if isinstance(v, V.Ref):
        out.append(TAG_REF)
        out += _u64.pack(v.id)
        _encode_str(v.type_name, out)
        return

    if isinstance(v, V.FnRef):
        out.append(TAG_FNREF)
        out.append(v.kind)
        if v.kind == V.FnKind.CALLBACK:
            if v.callback_id == 0:
                raise WireError("callback id 0 is reserved")
            out += _u64.pack(v.callback_id)
        else:
            _encode_str(v.name, out)
        return

    if isinstance(v, V.Table):
        out.append(TAG_TABLE)
        out += _u32.pack(len(v.columns))
        for name, col in v.columns:
            _encode_str(name, out)
            encode_value_into(col, out, depth + 1)
        return

    raise WireError("cannot encode %r as a wire value" % type(v).__name__)


def _read_u32(r: Reader) -> int:
    return _u32.unpack(r.read_exact(4))[0]


def _read_u64(r: Reader) -> int:
    return _u64.unpack(r.read_exact(8))[0]


def _read_str(r: Reader) -> str:
    at = r.offset
    n = _read_u32(r)
    if n >= MAX_STRING:
        raise WireError("string length %d exceeds cap" % n, offset=at)
    raw = r.read_exact(n)
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise WireError("invalid UTF-8 in string: %s" % exc, offset=at) from None


def _decode_array(r: Reader) -> V.TypedArray:
    at = r.offset
    elem_code = r.read_byte()
    if elem_code not in _ELEMENT_CODES:
        raise WireError("unknown element type 0x%02X" % elem_code, offset=at)
    elem = V.ElementType(elem_code)
    flags = r.read_byte()
    if flags & ~0x01:
        raise WireError("reserved array flag bits set: 0x%02X" % flags, offset=at)
    ndims = r.read_byte()
    dims = []
    count = 1
    for _ in range(ndims):
        d = _i64.unpack(r.read_exact(8))[0]
        if d < 0:
            raise WireError("negative array dimension %d" % d, offset=at)
        dims.append(d)
        count *= d
        if count > MAX_DIMS_PRODUCT:
            raise WireError("array element count exceeds cap", offset=at)
    missing = None
    if flags & 0x01:
        missing = r.read_exact(V.bitmap_size(count))
    if elem == V.ElementType.STRING:
        data = tuple(_read_str(r) for _ in range(count))
    else:
        data = r.read_exact(count * V.ELEMENT_WIDTH[elem])
    try:
        return V.TypedArray(elem, tuple(dims), data, missing)
    except V.ValueError_ as exc:
        raise WireError("invalid array: %s" % exc, offset=at) from None


def decode_value(r: Reader, depth: int = 0):
    if depth > V.MAX_NESTING:
        raise WireError(
            "value nesting exceeds %d levels" % V.MAX_NESTING, offset=r.offset
        )
    at = r.offset
    tag = r.read_byte()

    if tag == TAG_ARRAY:
        return _decode_array(r)

    if tag == TAG_NULL:
        return V.NULL

    if tag == TAG_LIST:
        n = _read_u32(r)
        return V.List(tuple(decode_value(r, depth + 1) for _ in range(n)))

    if tag == TAG_NAMEDLIST:
        n = _read_u32(r)
        items = []
        for _ in range(n):
            name = _read_str(r)
            items.append((name, decode_value(r, depth + 1)))
        try:
            return V.NamedList(tuple(items))
        except V.ValueError_ as exc:
            raise WireError("invalid named list: %s" % exc, offset=at) from None

    if tag == TAG_STRUCT:
        type_name = _read_str(r)
        n = _read_u32(r)
        fields = []
        for _ in range(n):
            name = _read_str(r)
            fields.append((name, decode_value(r, depth + 1)))
        try:
            return V.Struct(type_name, tuple(fields))
        except V.ValueError_ as exc:
            raise WireError("invalid struct: %s" % exc, offset=at) from None

    if tag == TAG_REF:
        ref_id = _read_u64(r)
        type_name = _read_str(r)
        return V.Ref(ref_id, type_name)

    if tag == TAG_FNREF:
        kind_code = r.read_byte()
        if kind_code == V.FnKind.CALLBACK:
            cb = _read_u64(r)
            if cb == 0:
                raise WireError("callback id 0 is reserved", offset=at)
            return V.FnRef.callback(cb)
        if kind_code == V.FnKind.NAMED:
            return V.FnRef.named(_read_str(r))
        if kind_code == V.FnKind.CONSTRUCTOR:
            return V.FnRef.constructor(_read_str(r))
        raise WireError("unknown function-reference kind 0x%02X" % kind_code, offset=at)

    if tag == TAG_TABLE:
        n = _read_u32(r)
        cols = []
        for _ in range(n):
            name = _read_str(r)
            col_at = r.offset
            col = decode_value(r, depth + 1)
            if not isinstance(col, V.TypedArray):
                raise WireError("table column is not an array", offset=col_at)
            cols.append((name, col))
        try:
            return V.Table(tuple(cols))
        except V.ValueError_ as exc:
            raise WireError("invalid table: %s" % exc, offset=at) from None

    raise WireError("unknown value tag 0x%02X" % tag, offset=at)
