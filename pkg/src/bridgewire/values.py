"""The universal in-memory value model.

Every datum that crosses the wire is one of the shapes defined here:
Null, TypedArray, List, NamedList, Struct, Ref, FnRef or Table. The
model is deliberately dumb: immutable containers with validated
invariants and structural equality. Translation to and from host
(Python) values lives in :mod:`bridgewire.translate`; the byte grammar
lives in the codec modules.

TypedArray stores fixed-stride element data as the raw little-endian
payload bytes in column-major order (first index varies fastest). That
makes codec work a memcpy, makes equality bit-exact (NaN payloads
compare equal to themselves), and numpy views are one frombuffer away.
String arrays store a tuple of str instead, since they have no fixed
stride.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from .errors import BridgewireError

# Nesting deeper than this is refused by both encoder and decoder so a
# hostile stream cannot drive the decoder into unbounded recursion.
MAX_NESTING = 200

# Largest permitted element count for a single array (decoder allocation cap).
MAX_ELEMENTS = 2**31


class ElementType(enum.IntEnum):
    F64 = 0x01
    F32 = 0x02
    I64 = 0x03
    I32 = 0x04
    I16 = 0x05
    I8 = 0x06
    U8 = 0x07
    BOOL = 0x08
    STRING = 0x09
    C128 = 0x0A
    C64 = 0x0B


#: bytes per element for the fixed-stride element types
ELEMENT_WIDTH = {
    ElementType.F64: 8,
    ElementType.F32: 4,
    ElementType.I64: 8,
    ElementType.I32: 4,
    ElementType.I16: 2,
    ElementType.I8: 1,
    ElementType.U8: 1,
    ElementType.BOOL: 1,
    ElementType.C128: 16,
    ElementType.C64: 8,
}

#: explicit little-endian numpy dtypes matching the wire layout
ELEMENT_DTYPE = {
    ElementType.F64: "<f8",
    ElementType.F32: "<f4",
    ElementType.I64: "<i8",
    ElementType.I32: "<i4",
    ElementType.I16: "<i2",
    ElementType.I8: "i1",
    ElementType.U8: "u1",
    ElementType.BOOL: "u1",
    ElementType.C128: "<c16",
    ElementType.C64: "<c8",
}

INT_TYPES = (ElementType.I64, ElementType.I32, ElementType.I16, ElementType.I8)
FLOAT_TYPES = (ElementType.F64, ElementType.F32)
COMPLEX_TYPES = (ElementType.C128, ElementType.C64)

_STRUCT_PACK = {
    ElementType.F64: struct.Struct("<d"),
    ElementType.F32: struct.Struct("<f"),
    ElementType.I64: struct.Struct("<q"),
    ElementType.I32: struct.Struct("<i"),
    ElementType.I16: struct.Struct("<h"),
    ElementType.I8: struct.Struct("<b"),
    ElementType.U8: struct.Struct("<B"),
    ElementType.BOOL: struct.Struct("<B"),
}


class _MissingType:
    """Singleton marking an absent element (the three-valued-logic hole).

    Distinct from None (which maps to the NULL value) and from NaN
    (which is an ordinary float payload).
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "MISSING"

    def __reduce__(self):
        return (_MissingType, ())


MISSING = _MissingType()


def is_missing(x) -> bool:
    return x is MISSING


class ValueError_(BridgewireError, ValueError):
    """Invariant violation while constructing a Value."""


def bitmap_size(count: int) -> int:
    return (count + 7) // 8


def pack_bitmap(flags) -> bytes:
    """Pack an iterable of booleans, element i -> byte i//8 bit i%8."""
    flags = list(flags)
    out = bytearray(bitmap_size(len(flags)))
    for i, f in enumerate(flags):
        if f:
            out[i >> 3] |= 1 << (i & 7)
    return bytes(out)


def unpack_bitmap(bitmap: bytes, count: int) -> Tuple[bool, ...]:
    return tuple(bool(bitmap[i >> 3] & (1 << (i & 7))) for i in range(count))


def _check_bitmap(bitmap: bytes, count: int) -> None:
    if len(bitmap) != bitmap_size(count):
        raise ValueError_(
            "bitmap has %d bytes, expected %d for %d elements"
            % (len(bitmap), bitmap_size(count), count)
        )
    # padding bits beyond count must be clear (canonical form)
    if count % 8 and bitmap:
        pad = bitmap[-1] >> (count % 8)
        if pad:
            raise ValueError_("bitmap padding bits set")


def _qualified_name_ok(name: str) -> bool:
    """Dot-separated identifiers, optionally with a {...} parameter suffix."""
    if not name:
        return False
    base = name
    if "{" in name:
        base, _, params = name.partition("{")
        depth = 1
        for i, ch in enumerate(params):
            depth += {"{": 1, "}": -1}.get(ch, 0)
            if depth == 0 and i != len(params) - 1:
                return False
        if depth != 0:
            return False
    return all(seg.isidentifier() for seg in base.split("."))


@dataclass(frozen=True)
class Null:
    def __repr__(self):
        return "NULL"


NULL = Null()


@dataclass(frozen=True)
class TypedArray:
    """An n-dimensional homogeneous array, possibly with missing slots.

    ``dims == ()`` means scalar (count 1). ``data`` is the raw
    column-major little-endian payload for fixed-stride element types,
    or a tuple of str for STRING. ``missing`` is the packed bitmap or
    None; missing slots must hold a zeroed placeholder (empty string
    for STRING) so the payload keeps its stride.
    """

    elem: ElementType
    dims: Tuple[int, ...]
    data: Union[bytes, Tuple[str, ...]]
    missing: Optional[bytes] = None

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if any(d < 0 for d in self.dims):
            raise ValueError_("negative array dimension")
        count = self.count
        if count > MAX_ELEMENTS:
            raise ValueError_("array too large: %d elements" % count)
        if self.elem == ElementType.STRING:
            if not isinstance(self.data, tuple):
                object.__setattr__(self, "data", tuple(self.data))
            if len(self.data) != count:
                raise ValueError_(
                    "string array data has %d elements, dims say %d"
                    % (len(self.data), count)
                )
            if not all(isinstance(s, str) for s in self.data):
                raise ValueError_("string array elements must be str")
        else:
            if not isinstance(self.data, bytes):
                object.__setattr__(self, "data", bytes(self.data))
            width = ELEMENT_WIDTH[self.elem]
            if len(self.data) != count * width:
                raise ValueError_(
                    "array payload has %d bytes, expected %d"
                    % (len(self.data), count * width)
                )
            if self.elem == ElementType.BOOL and any(b > 1 for b in self.data):
                raise ValueError_("boolean element byte not 0 or 1")
        if self.missing is not None:
            if not isinstance(self.missing, bytes):
                object.__setattr__(self, "missing", bytes(self.missing))
            _check_bitmap(self.missing, count)
            self._check_placeholders()

    def _check_placeholders(self):
        width = None if self.elem == ElementType.STRING else ELEMENT_WIDTH[self.elem]
        for i, miss in enumerate(self.missing_flags()):
            if not miss:
                continue
            if self.elem == ElementType.STRING:
                if self.data[i] != "":
                    raise ValueError_("missing string slot %d not empty" % i)
            elif self.data[i * width : (i + 1) * width] != b"\x00" * width:
                raise ValueError_("missing slot %d placeholder not zeroed" % i)

    @property
    def count(self) -> int:
        return math.prod(self.dims)

    @property
    def is_scalar(self) -> bool:
        return self.dims == ()

    @property
    def has_missing(self) -> bool:
        return self.missing is not None and any(self.missing)

    def missing_flags(self) -> Tuple[bool, ...]:
        if self.missing is None:
            return (False,) * self.count
        return unpack_bitmap(self.missing, self.count)

    def elements(self) -> tuple:
        """Payload values as Python scalars; missing slots yield MISSING."""
        if self.elem == ElementType.STRING:
            raw = list(self.data)
        else:
            arr = np.frombuffer(self.data, dtype=ELEMENT_DTYPE[self.elem])
            if self.elem == ElementType.BOOL:
                raw = [bool(x) for x in arr]
            elif self.elem in COMPLEX_TYPES:
                raw = [complex(x) for x in arr]
            elif self.elem in FLOAT_TYPES:
                raw = [float(x) for x in arr]
            else:
                raw = [int(x) for x in arr]
        if self.missing is not None:
            flags = self.missing_flags()
            raw = [MISSING if flags[i] else raw[i] for i in range(self.count)]
        return tuple(raw)

    def to_numpy(self) -> np.ndarray:
        """Payload as an ndarray shaped like dims (missing flags ignored)."""
        if self.elem == ElementType.STRING:
            arr = np.empty(self.count, dtype=object)
            for i, s in enumerate(self.data):
                arr[i] = s
        else:
            arr = np.frombuffer(self.data, dtype=ELEMENT_DTYPE[self.elem])
            if self.elem == ElementType.BOOL:
                arr = arr.astype(bool)
        if self.dims:
            arr = arr.reshape(self.dims, order="F")
        return arr

    @classmethod
    def scalar(cls, elem: ElementType, value) -> "TypedArray":
        return cls.from_elements(elem, [value], dims=())

    @classmethod
    def missing_scalar(cls, elem: ElementType = ElementType.BOOL) -> "TypedArray":
        return cls.from_elements(elem, [MISSING], dims=())

    @classmethod
    def from_elements(cls, elem, values, dims=None, missing=None) -> "TypedArray":
        """Build from Python scalars; MISSING entries set the bitmap.

        ``missing`` may give explicit flags; otherwise they are inferred
        from MISSING entries in ``values``. ``dims`` defaults to a
        1-d vector of the given length.
        """
        values = list(values)
        if dims is None:
            dims = (len(values),)
        flags = [is_missing(v) for v in values]
        if missing is not None:
            flags = [bool(f) or is_missing(v) for f, v in zip(missing, values)]
        elem = ElementType(elem)
        if elem == ElementType.STRING:
            data = tuple("" if f else str(v) for f, v in zip(flags, values))
        elif elem in COMPLEX_TYPES:
            dtype = ELEMENT_DTYPE[elem]
            arr = np.array(
                [0j if f else complex(v) for f, v in zip(flags, values)], dtype=dtype
            )
            data = arr.tobytes()
        else:
            packer = _STRUCT_PACK[elem]
            parts = []
            for f, v in zip(flags, values):
                if f:
                    parts.append(b"\x00" * packer.size)
                elif elem == ElementType.BOOL:
                    parts.append(packer.pack(1 if v else 0))
                elif elem in FLOAT_TYPES:
                    parts.append(packer.pack(float(v)))
                else:
                    parts.append(packer.pack(int(v)))
            data = b"".join(parts)
        bitmap = pack_bitmap(flags) if any(flags) else None
        return cls(elem, tuple(dims), data, bitmap)

    @classmethod
    def from_numpy(cls, arr: np.ndarray, elem=None, mask=None) -> "TypedArray":
        """Build from an ndarray; mask marks missing slots (zeroed out)."""
        if elem is None:
            elem = dtype_to_element(arr.dtype)
        elem = ElementType(elem)
        if elem == ElementType.STRING:
            flat = [str(x) for x in arr.reshape(-1, order="F")]
            return cls.from_elements(elem, flat, dims=arr.shape)
        np_dtype = ELEMENT_DTYPE[elem]
        data_arr = arr
        bitmap = None
        if mask is not None:
            mask = np.broadcast_to(np.asarray(mask, dtype=bool), arr.shape)
            if mask.any():
                data_arr = np.where(mask, np.zeros(1, dtype=arr.dtype), arr)
                bitmap = pack_bitmap(mask.reshape(-1, order="F").tolist())
        if elem == ElementType.BOOL:
            data = data_arr.astype(bool).astype("u1").tobytes(order="F")
        else:
            data = np.ascontiguousarray(data_arr).astype(np_dtype).tobytes(order="F")
        return cls(elem, tuple(arr.shape), data, bitmap)

    def __repr__(self):
        head = "TypedArray(%s, dims=%r" % (self.elem.name, self.dims)
        if self.count <= 8:
            head += ", %r" % (self.elements(),)
        else:
            head += ", <%d elements>" % self.count
        if self.missing is not None:
            head += ", missing=%r" % (self.missing_flags()[:8],)
        return head + ")"


def dtype_to_element(dtype) -> ElementType:
    dtype = np.dtype(dtype)
    table = {
        "f8": ElementType.F64,
        "f4": ElementType.F32,
        "i8": ElementType.I64,
        "i4": ElementType.I32,
        "i2": ElementType.I16,
        "i1": ElementType.I8,
        "u1": ElementType.U8,
        "b1": ElementType.BOOL,
        "c16": ElementType.C128,
        "c8": ElementType.C64,
    }
    key = dtype.str.lstrip("<>|=")
    if key not in table:
        raise ValueError_("no wire element type for dtype %s" % dtype)
    return table[key]


@dataclass(frozen=True)
class List:
    items: Tuple["Value", ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))


@dataclass(frozen=True)
class NamedList:
    """Order-preserving name -> value pairs; names unique and non-empty.

    The empty name is reserved (never valid wire data), so offering it
    here is rejected up front.
    """

    items: Tuple[Tuple[str, "Value"], ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple((str(n), v) for n, v in self.items))
        names = [n for n, _ in self.items]
        if any(n == "" for n in names):
            raise ValueError_("empty NamedList name is reserved")
        if len(set(names)) != len(names):
            raise ValueError_("duplicate NamedList name")

    def names(self):
        return tuple(n for n, _ in self.items)

    def get(self, name):
        for n, v in self.items:
            if n == name:
                return v
        raise KeyError(name)


@dataclass(frozen=True)
class Struct:
    type_name: str
    fields: Tuple[Tuple[str, "Value"], ...]

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple((str(n), v) for n, v in self.fields))
        if not _qualified_name_ok(self.type_name):
            raise ValueError_("bad struct type name %r" % (self.type_name,))
        names = [n for n, _ in self.fields]
        if any(n == "" for n in names):
            raise ValueError_("empty struct field name")
        if len(set(names)) != len(names):
            raise ValueError_("duplicate struct field name")

    def field_names(self):
        return tuple(n for n, _ in self.fields)

    def get(self, name):
        for n, v in self.fields:
            if n == name:
                return v
        raise KeyError(name)


@dataclass(frozen=True)
class Ref:
    id: int
    type_name: str

    def __post_init__(self):
        if not 0 <= self.id < 2**64:
            raise ValueError_("ref id out of u64 range")


class FnKind(enum.IntEnum):
    NAMED = 0x00
    CALLBACK = 0x01
    CONSTRUCTOR = 0x02


@dataclass(frozen=True)
class FnRef:
    kind: FnKind
    name: Optional[str] = None
    callback_id: Optional[int] = None

    def __post_init__(self):
        if self.kind == FnKind.CALLBACK:
            if self.callback_id is None or not 0 <= self.callback_id < 2**64:
                raise ValueError_("callback id out of u64 range")
        elif not self.name:
            raise ValueError_("named function reference needs a name")

    @classmethod
    def named(cls, name):
        return cls(FnKind.NAMED, name=name)

    @classmethod
    def callback(cls, cb_id):
        return cls(FnKind.CALLBACK, callback_id=cb_id)

    @classmethod
    def constructor(cls, name):
        return cls(FnKind.CONSTRUCTOR, name=name)


@dataclass(frozen=True)
class Table:
    """Ordered, uniquely named columns; every column is a 1-d (or scalar)
    TypedArray of equal element count."""

    columns: Tuple[Tuple[str, TypedArray], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "columns", tuple((str(n), v) for n, v in self.columns)
        )
        names = [n for n, _ in self.columns]
        if any(n == "" for n in names):
            raise ValueError_("empty table column name")
        if len(set(names)) != len(names):
            raise ValueError_("duplicate table column name")
        counts = set()
        for name, col in self.columns:
            if not isinstance(col, TypedArray):
                raise ValueError_("table column %r is not an array" % name)
            if len(col.dims) > 1:
                raise ValueError_("table column %r has %d dims" % (name, len(col.dims)))
            counts.add(col.count)
        if len(counts) > 1:
            raise ValueError_("table columns differ in length")

    def column_names(self):
        return tuple(n for n, _ in self.columns)

    @property
    def nrows(self) -> int:
        return self.columns[0][1].count if self.columns else 0


Value = Union[Null, TypedArray, List, NamedList, Struct, Ref, FnRef, Table]

_VALUE_TYPES = (Null, TypedArray, List, NamedList, Struct, Ref, FnRef, Table)


def is_value(x) -> bool:
    return isinstance(x, _VALUE_TYPES)
