# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled codec kernels, byte-identical to the pure-Python backend.

Same two entry points as ``_pycodec``; selection happens in ``wire``.
The win is dispatch cost on small-value traffic: typed locals, C loops
and direct little-endian integer assembly instead of interpreted
bytecode. Large array payloads are a memcpy in both backends.
"""

from . import values as V
from .errors import PrematureEndError, WireError
from .stream import BufferReader as _BufferReader

BACKEND = "compiled"

cdef long long _MAX_STRING = 2147483648
cdef long long _MAX_PRODUCT = 2147483648

MAX_STRING = _MAX_STRING
MAX_DIMS_PRODUCT = _MAX_PRODUCT

cdef int TAG_NULL = 0x00
cdef int TAG_ARRAY = 0x01
cdef int TAG_LIST = 0x02
cdef int TAG_NAMEDLIST = 0x03
cdef int TAG_STRUCT = 0x04
cdef int TAG_REF = 0x05
cdef int TAG_FNREF = 0x06
cdef int TAG_TABLE = 0x07

cdef int ELEM_STRING = 0x09

cdef object _TypedArray = V.TypedArray
cdef object _Null = V.Null
cdef object _List = V.List
cdef object _NamedList = V.NamedList
cdef object _Struct = V.Struct
cdef object _Ref = V.Ref
cdef object _FnRef = V.FnRef
cdef object _Table = V.Table
cdef object _NULL = V.NULL
cdef object _ValueError = V.ValueError_
cdef object _ElementType = V.ElementType
cdef dict _WIDTH = {int(e): int(w) for e, w in V.ELEMENT_WIDTH.items()}
cdef frozenset _ELEMENT_CODES = frozenset(int(e) for e in V.ElementType)
cdef int _MAX_NESTING = V.MAX_NESTING
cdef int _KIND_CALLBACK = int(V.FnKind.CALLBACK)
cdef int _KIND_NAMED = int(V.FnKind.NAMED)
cdef int _KIND_CONSTRUCTOR = int(V.FnKind.CONSTRUCTOR)


cdef inline void _append_u32(bytearray out, unsigned long long n):
    out.append(<unsigned char> (n & 0xFF))
    out.append(<unsigned char> ((n >> 8) & 0xFF))
    out.append(<unsigned char> ((n >> 16) & 0xFF))
    out.append(<unsigned char> ((n >> 24) & 0xFF))


cdef inline void _append_u64(bytearray out, unsigned long long n):
    cdef int i
    for i in range(8):
        out.append(<unsigned char> ((n >> (8 * i)) & 0xFF))


cdef inline void _encode_str(str s, bytearray out) except *:
    cdef bytes raw = s.encode("utf-8")
    if len(raw) >= _MAX_STRING:
        raise WireError("string too long to encode: %d bytes" % len(raw))
    _append_u32(out, len(raw))
    out += raw


def encode_value_into(v, out, depth=0):
    _encode(v, <bytearray> out, depth)


cdef void _encode(object v, bytearray out, int depth) except *:
    if depth > _MAX_NESTING:
        raise WireError("value nesting exceeds %d levels" % _MAX_NESTING)

    cdef int elem_code, fkind
    cdef tuple dims
    cdef object item, name, col, s
    cdef long long d

    if isinstance(v, _TypedArray):
        out.append(TAG_ARRAY)
        elem_code = <int> v.elem
        out.append(<unsigned char> elem_code)
        out.append(0x01 if v.missing is not None else 0x00)
        dims = <tuple> v.dims
        out.append(<unsigned char> len(dims))
        for item in dims:
            d = <long long> item
            _append_u64(out, <unsigned long long> d)
        if v.missing is not None:
            out += <bytes> v.missing
        if elem_code == ELEM_STRING:
            for s in <tuple> v.data:
                _encode_str(<str> s, out)
        else:
            out += <bytes> v.data
        return

    if isinstance(v, _Null):
        out.append(TAG_NULL)
        return

    if isinstance(v, _List):
        out.append(TAG_LIST)
        _append_u32(out, len(<tuple> v.items))
        for item in <tuple> v.items:
            _encode(item, out, depth + 1)
        return

    if isinstance(v, _NamedList):
        out.append(TAG_NAMEDLIST)
        _append_u32(out, len(<tuple> v.items))
        for name, item in <tuple> v.items:
            _encode_str(<str> name, out)
            _encode(item, out, depth + 1)
        return

    if isinstance(v, _Struct):
        out.append(TAG_STRUCT)
        _encode_str(<str> v.type_name, out)
        _append_u32(out, len(<tuple> v.fields))
        for name, item in <tuple> v.fields:
            _encode_str(<str> name, out)
            _encode(item, out, depth + 1)
        return

    if isinstance(v, _Ref):
        out.append(TAG_REF)
        _append_u64(out, <unsigned long long> v.id)
        _encode_str(<str> v.type_name, out)
        return

    if isinstance(v, _FnRef):
        out.append(TAG_FNREF)
        fkind = <int> v.kind
        out.append(<unsigned char> fkind)
        if fkind == _KIND_CALLBACK:
            if v.callback_id == 0:
                raise WireError("callback id 0 is reserved")
            _append_u64(out, <unsigned long long> v.callback_id)
        else:
            _encode_str(<str> v.name, out)
        return

    if isinstance(v, _Table):
        out.append(TAG_TABLE)
        _append_u32(out, len(<tuple> v.columns))
        for name, col in <tuple> v.columns:
            _encode_str(<str> name, out)
            _encode(col, out, depth + 1)
        return

    raise WireError("cannot encode %r as a wire value" % type(v).__name__)


cdef inline unsigned int _u32_from(bytes raw):
    cdef const unsigned char* p = raw
    return (<unsigned int> p[0]
            | (<unsigned int> p[1] << 8)
            | (<unsigned int> p[2] << 16)
            | (<unsigned int> p[3] << 24))


cdef inline unsigned long long _u64_from(bytes raw):
    cdef const unsigned char* p = raw
    cdef unsigned long long n = 0
    cdef int i
    for i in range(8):
        n |= (<unsigned long long> p[i]) << (8 * i)
    return n


cdef inline unsigned int _read_u32(object r) except? 0xFFFFFFFF:
    return _u32_from(<bytes> r.read_exact(4))


cdef inline unsigned long long _read_u64(object r) except? 0xFFFFFFFFFFFFFFFF:
    return _u64_from(<bytes> r.read_exact(8))


cdef str _read_str(object r):
    cdef object at = r.offset
    cdef unsigned int n = _read_u32(r)
    if n >= _MAX_STRING:
        raise WireError("string length %d exceeds cap" % n, offset=at)
    cdef bytes raw = <bytes> r.read_exact(n)
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise WireError("invalid UTF-8 in string: %s" % exc, offset=at) from None


cdef object _decode_array(object r):
    cdef object at = r.offset
    cdef int elem_code = r.read_byte()
    if elem_code not in _ELEMENT_CODES:
        raise WireError("unknown element type 0x%02X" % elem_code, offset=at)
    elem = _ElementType(elem_code)
    cdef int flags = r.read_byte()
    if flags & ~0x01:
        raise WireError("reserved array flag bits set: 0x%02X" % flags, offset=at)
    cdef int ndims = r.read_byte()
    cdef list dims = []
    cdef long long count = 1, d
    cdef unsigned long long ud
    cdef int i
    for i in range(ndims):
        ud = _u64_from(<bytes> r.read_exact(8))
        d = <long long> ud
        if d < 0:
            raise WireError("negative array dimension %d" % d, offset=at)
        dims.append(d)
        # overflow-safe equivalent of (count * d > cap)
        if d != 0 and count > _MAX_PRODUCT // d:
            raise WireError("array element count exceeds cap", offset=at)
        count *= d
    cdef object missing = None
    if flags & 0x01:
        missing = r.read_exact(V.bitmap_size(count))
    cdef object data
    if elem_code == ELEM_STRING:
        data = tuple([_read_str(r) for i in range(count)])
    else:
        data = r.read_exact(count * <long long> _WIDTH[elem_code])
    try:
        return _TypedArray(elem, tuple(dims), data, missing)
    except _ValueError as exc:
        raise WireError("invalid array: %s" % exc, offset=at) from None


def decode_value(r, depth=0):
    if type(r) is _BufferReader and r.tap is None:
        return _decode_buffer(r, <int> depth)
    return _decode(r, <int> depth)


# -- in-memory fast path: C cursor instead of Reader method calls ------------


cdef class _Cursor:
    cdef const unsigned char[::1] view
    cdef Py_ssize_t pos
    cdef Py_ssize_t size


cdef inline int _c_need(_Cursor c, Py_ssize_t n) except -1:
    if c.pos + n > c.size:
        raise PrematureEndError(
            "stream ended %d bytes short" % (n - (c.size - c.pos)), offset=c.pos
        )
    return 0


cdef inline int _c_byte(_Cursor c) except -1:
    _c_need(c, 1)
    cdef int b = c.view[c.pos]
    c.pos += 1
    return b


cdef inline unsigned int _c_u32(_Cursor c) except? 0xFFFFFFFF:
    _c_need(c, 4)
    cdef Py_ssize_t p = c.pos
    cdef unsigned int n = (<unsigned int> c.view[p]
                           | (<unsigned int> c.view[p + 1] << 8)
                           | (<unsigned int> c.view[p + 2] << 16)
                           | (<unsigned int> c.view[p + 3] << 24))
    c.pos = p + 4
    return n


cdef inline unsigned long long _c_u64(_Cursor c) except? 0xFFFFFFFFFFFFFFFF:
    _c_need(c, 8)
    cdef Py_ssize_t p = c.pos
    cdef unsigned long long n = 0
    cdef int i
    for i in range(8):
        n |= (<unsigned long long> c.view[p + i]) << (8 * i)
    c.pos = p + 8
    return n


cdef bytes _c_bytes(_Cursor c, Py_ssize_t n):
    if n == 0:
        return b""
    _c_need(c, n)
    cdef bytes out = bytes(c.view[c.pos : c.pos + n])
    c.pos += n
    return out


cdef str _c_str(_Cursor c):
    cdef Py_ssize_t at = c.pos
    cdef unsigned int n = _c_u32(c)
    if n >= _MAX_STRING:
        raise WireError("string length %d exceeds cap" % n, offset=at)
    cdef bytes raw = _c_bytes(c, n)
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise WireError("invalid UTF-8 in string: %s" % exc, offset=at) from None


cdef object _c_decode_array(_Cursor c):
    cdef Py_ssize_t at = c.pos
    cdef int elem_code = _c_byte(c)
    if elem_code not in _ELEMENT_CODES:
        raise WireError("unknown element type 0x%02X" % elem_code, offset=at)
    elem = _ElementType(elem_code)
    cdef int flags = _c_byte(c)
    if flags & ~0x01:
        raise WireError("reserved array flag bits set: 0x%02X" % flags, offset=at)
    cdef int ndims = _c_byte(c)
    cdef list dims = []
    cdef long long count = 1, d
    cdef int i
    for i in range(ndims):
        d = <long long> _c_u64(c)
        if d < 0:
            raise WireError("negative array dimension %d" % d, offset=at)
        dims.append(d)
        if d != 0 and count > _MAX_PRODUCT // d:
            raise WireError("array element count exceeds cap", offset=at)
        count *= d
    cdef object missing = None
    if flags & 0x01:
        missing = _c_bytes(c, V.bitmap_size(count))
    cdef object data
    if elem_code == ELEM_STRING:
        data = tuple([_c_str(c) for i in range(count)])
    else:
        data = _c_bytes(c, count * <long long> _WIDTH[elem_code])
    try:
        return _TypedArray(elem, tuple(dims), data, missing)
    except _ValueError as exc:
        raise WireError("invalid array: %s" % exc, offset=at) from None


cdef object _c_decode(_Cursor c, int depth):
    if depth > _MAX_NESTING:
        raise WireError(
            "value nesting exceeds %d levels" % _MAX_NESTING, offset=c.pos
        )
    cdef Py_ssize_t at = c.pos
    cdef int tag = _c_byte(c)
    cdef unsigned int n, j
    cdef list items, fields, cols
    cdef str name, type_name
    cdef int kind_code
    cdef unsigned long long cb, ref_id
    cdef object col
    cdef Py_ssize_t col_at

    if tag == TAG_ARRAY:
        return _c_decode_array(c)

    if tag == TAG_NULL:
        return _NULL

    if tag == TAG_LIST:
        n = _c_u32(c)
        items = []
        for j in range(n):
            items.append(_c_decode(c, depth + 1))
        return _List(tuple(items))

    if tag == TAG_NAMEDLIST:
        n = _c_u32(c)
        items = []
        for j in range(n):
            name = _c_str(c)
            items.append((name, _c_decode(c, depth + 1)))
        try:
            return _NamedList(tuple(items))
        except _ValueError as exc:
            raise WireError("invalid named list: %s" % exc, offset=at) from None

    if tag == TAG_STRUCT:
        type_name = _c_str(c)
        n = _c_u32(c)
        fields = []
        for j in range(n):
            name = _c_str(c)
            fields.append((name, _c_decode(c, depth + 1)))
        try:
            return _Struct(type_name, tuple(fields))
        except _ValueError as exc:
            raise WireError("invalid struct: %s" % exc, offset=at) from None

    if tag == TAG_REF:
        ref_id = _c_u64(c)
        type_name = _c_str(c)
        return _Ref(ref_id, type_name)

    if tag == TAG_FNREF:
        kind_code = _c_byte(c)
        if kind_code == _KIND_CALLBACK:
            cb = _c_u64(c)
            if cb == 0:
                raise WireError("callback id 0 is reserved", offset=at)
            return _FnRef.callback(cb)
        if kind_code == _KIND_NAMED:
            return _FnRef.named(_c_str(c))
        if kind_code == _KIND_CONSTRUCTOR:
            return _FnRef.constructor(_c_str(c))
        raise WireError("unknown function-reference kind 0x%02X" % kind_code, offset=at)

    if tag == TAG_TABLE:
        n = _c_u32(c)
        cols = []
        for j in range(n):
            name = _c_str(c)
            col_at = c.pos
            col = _c_decode(c, depth + 1)
            if not isinstance(col, _TypedArray):
                raise WireError("table column is not an array", offset=col_at)
            cols.append((name, col))
        try:
            return _Table(tuple(cols))
        except _ValueError as exc:
            raise WireError("invalid table: %s" % exc, offset=at) from None

    raise WireError("unknown value tag 0x%02X" % tag, offset=at)


cdef object _decode_buffer(object r, int depth):
    cdef _Cursor c = _Cursor()
    c.view = r._buf
    c.pos = r._pos
    c.size = len(r._buf)
    try:
        result = _c_decode(c, depth)
    finally:
        r._pos = c.pos
        r._offset = c.pos
    return result


cdef object _decode(object r, int depth):
    if depth > _MAX_NESTING:
        raise WireError(
            "value nesting exceeds %d levels" % _MAX_NESTING, offset=r.offset
        )
    cdef object at = r.offset
    cdef int tag = r.read_byte()
    cdef unsigned int n, j
    cdef list items, fields, cols
    cdef str name, type_name
    cdef int kind_code
    cdef unsigned long long cb, ref_id
    cdef object col, col_at

    if tag == TAG_ARRAY:
        return _decode_array(r)

    if tag == TAG_NULL:
        return _NULL

    if tag == TAG_LIST:
        n = _read_u32(r)
        items = []
        for j in range(n):
            items.append(_decode(r, depth + 1))
        return _List(tuple(items))

    if tag == TAG_NAMEDLIST:
        n = _read_u32(r)
        items = []
        for j in range(n):
            name = _read_str(r)
            items.append((name, _decode(r, depth + 1)))
        try:
            return _NamedList(tuple(items))
        except _ValueError as exc:
            raise WireError("invalid named list: %s" % exc, offset=at) from None

    if tag == TAG_STRUCT:
        type_name = _read_str(r)
        n = _read_u32(r)
        fields = []
        for j in range(n):
            name = _read_str(r)
            fields.append((name, _decode(r, depth + 1)))
        try:
            return _Struct(type_name, tuple(fields))
        except _ValueError as exc:
            raise WireError("invalid struct: %s" % exc, offset=at) from None

    if tag == TAG_REF:
        ref_id = _read_u64(r)
        type_name = _read_str(r)
        return _Ref(ref_id, type_name)

    if tag == TAG_FNREF:
        kind_code = r.read_byte()
        if kind_code == _KIND_CALLBACK:
            cb = _read_u64(r)
            if cb == 0:
                raise WireError("callback id 0 is reserved", offset=at)
            return _FnRef.callback(cb)
        if kind_code == _KIND_NAMED:
            return _FnRef.named(_read_str(r))
        if kind_code == _KIND_CONSTRUCTOR:
            return _FnRef.constructor(_read_str(r))
        raise WireError("unknown function-reference kind 0x%02X" % kind_code, offset=at)

    if tag == TAG_TABLE:
        n = _read_u32(r)
        cols = []
        for j in range(n):
            name = _read_str(r)
            col_at = r.offset
            col = _decode(r, depth + 1)
            if not isinstance(col, _TypedArray):
                raise WireError("table column is not an array", offset=col_at)
            cols.append((name, col))
        try:
            return _Table(tuple(cols))
        except _ValueError as exc:
            raise WireError("invalid table: %s" % exc, offset=at) from None

    raise WireError("unknown value tag 0x%02X" % tag, offset=at)
