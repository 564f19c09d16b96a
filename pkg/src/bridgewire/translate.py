"""Translation between host (Python) values and wire Values.

The outbound direction turns Python data into wire Values: scalars map
per the fixed table (bool -> BOOL, int -> I32/I64 by magnitude, float
-> F64, str -> STRING, complex -> C128, bytes -> U8), numpy arrays map
by dtype, lists of homogeneous scalars become typed arrays with
promotion, everything else nests as LIST/NAMEDLIST. MISSING marks
bitmap slots; it is never conflated with None (NULL) or NaN (a float).

The inbound direction reconstructs host values and, where the host
representation alone could not reproduce the original element type,
wraps the result in :class:`Annotated` carrying the type name. The
guiding rule: anything that arrives annotated goes back out bit-exact.

Element types with no wire representation of their own (Float16,
UInt32, UInt64, Int128, ...) travel boxed as a single-field struct
``Struct(type_name, value=<payload array>)``; both directions treat
those structs as annotated primitives, not as records.
"""

from __future__ import annotations

import math
import re
from typing import Optional

import numpy as np

from . import values as V
from .errors import TranslationError
from .values import MISSING, ElementType, is_missing

INT32_MIN, INT32_MAX = -(2**31), 2**31 - 1
INT64_MIN, INT64_MAX = -(2**63), 2**63 - 1


class Annotated:
    """A host value plus the remote type name needed to rebuild it.

    Mirrors a type attribute on the value: ``Annotated(2.5, "Float32")``
    round-trips as a Float32, while a bare 2.5 would travel as Float64.
    Equality compares both the annotation and the payload.
    """

    __slots__ = ("value", "type_name")

    def __init__(self, value, type_name: str):
        self.value = value
        self.type_name = type_name

    def __repr__(self):
        return "Annotated(%r, %r)" % (self.value, self.type_name)

    def __eq__(self, other):
        if not isinstance(other, Annotated):
            return NotImplemented
        return self.type_name == other.type_name and host_equal(
            self.value, other.value
        )

    def __hash__(self):
        return hash((Annotated, self.type_name, id(self.value)))


def annotation_of(x) -> Optional[str]:
    return x.type_name if isinstance(x, Annotated) else None


def strip_annotation(x):
    return x.value if isinstance(x, Annotated) else x


def host_equal(a, b) -> bool:
    """Structural equality across the host shapes translation produces."""
    if isinstance(a, Annotated) or isinstance(b, Annotated):
        return (
            isinstance(a, Annotated)
            and isinstance(b, Annotated)
            and a.type_name == b.type_name
            and host_equal(a.value, b.value)
        )
    if isinstance(a, np.ma.MaskedArray) or isinstance(b, np.ma.MaskedArray):
        if not (isinstance(a, np.ma.MaskedArray) and isinstance(b, np.ma.MaskedArray)):
            return False
        if a.shape != b.shape or a.dtype != b.dtype:
            return False
        amask = np.ma.getmaskarray(a)
        if not np.array_equal(amask, np.ma.getmaskarray(b)):
            return False
        return np.array_equal(
            np.asarray(a.filled(0)), np.asarray(b.filled(0)), equal_nan=_nan_ok(a)
        )
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        if not (isinstance(a, np.ndarray) and isinstance(b, np.ndarray)):
            return False
        if a.shape != b.shape or a.dtype != b.dtype:
            return False
        return np.array_equal(a, b, equal_nan=_nan_ok(a))
    if isinstance(a, ColumnTable) or isinstance(b, ColumnTable):
        if not (isinstance(a, ColumnTable) and isinstance(b, ColumnTable)):
            return False
        return a.names == b.names and all(
            host_equal(a[n], b[n]) for n in a.names
        )
    if isinstance(a, dict) and isinstance(b, dict):
        return list(a) == list(b) and all(host_equal(a[k], b[k]) for k in a)
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(host_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, float) and isinstance(b, float):
        return (a == b) or (math.isnan(a) and math.isnan(b))
    if isinstance(a, complex) and isinstance(b, complex):
        return host_equal(a.real, b.real) and host_equal(a.imag, b.imag)
    return type(a) is type(b) and a == b


def _nan_ok(arr) -> bool:
    return arr.dtype.kind in "fc"


class ColumnTable:
    """A minimal columnar table: ordered named 1-d columns, equal length.

    The host-side face of the wire TABLE. Columns hold whatever the
    inbound translation produced (ndarray, masked array, list of str,
    bytes). Use ``to_pandas()`` if pandas is installed.
    """

    def __init__(self, columns):
        if hasattr(columns, "items"):
            columns = list(columns.items())
        self._columns = [(str(n), c) for n, c in columns]
        names = [n for n, _ in self._columns]
        if len(set(names)) != len(names):
            raise TranslationError("duplicate table column name")
        if any(n == "" for n in names):
            raise TranslationError("empty table column name")
        lengths = {_column_length(c) for _, c in self._columns}
        if len(lengths) > 1:
            raise TranslationError("table columns differ in length")

    @property
    def names(self):
        return [n for n, _ in self._columns]

    @property
    def nrows(self) -> int:
        return _column_length(self._columns[0][1]) if self._columns else 0

    def __len__(self):
        return len(self._columns)

    def __iter__(self):
        return iter(self.names)

    def items(self):
        return list(self._columns)

    def __getitem__(self, name):
        for n, c in self._columns:
            if n == name:
                return c
        raise KeyError(name)

    def __eq__(self, other):
        if not isinstance(other, ColumnTable):
            return NotImplemented
        return host_equal(self, other)

    def __repr__(self):
        return "ColumnTable(%s, nrows=%d)" % (", ".join(self.names), self.nrows)

    def to_pandas(self):
        import pandas as pd

        return pd.DataFrame(dict(self._columns))


def _column_length(col) -> int:
    if isinstance(col, (bytes, bytearray)):
        return len(col)
    if isinstance(col, np.ndarray):
        if col.ndim != 1:
            raise TranslationError("table column must be 1-d")
        return col.shape[0]
    if isinstance(col, (list, tuple)):
        return len(col)
    raise TranslationError("unsupported table column type %r" % type(col).__name__)


# --- boxed exotic element types -------------------------------------------
#
# type name -> payload element type. Fixed-size raw boxes additionally
# pin the payload byte length (scalars only).

_BOX_PAYLOAD = {
    "Float16": ElementType.F64,
    "UInt32": ElementType.F64,
    "UInt16": ElementType.I32,
    "Char": ElementType.I32,
}

_RAW_BOX_BYTES = {"UInt64": 8, "Ptr": 8, "Int128": 16, "UInt128": 16}

_COMPLEX_BOX = re.compile(r"Complex\{(U?Int(8|16|32|64)|Float16)\}$")


def _is_box_name(type_name: str) -> bool:
    return (
        type_name in _BOX_PAYLOAD
        or type_name in _RAW_BOX_BYTES
        or type_name.startswith("Ptr{")
        or bool(_COMPLEX_BOX.match(type_name))
    )


def is_box_struct(v) -> bool:
    """True for the single-field structs that box exotic primitives."""
    return (
        isinstance(v, V.Struct)
        and len(v.fields) == 1
        and v.fields[0][0] == "value"
        and isinstance(v.fields[0][1], V.TypedArray)
        and _is_box_name(v.type_name)
    )


# --- outbound: host -> Value ------------------------------------------------


class OutboundHooks:
    """Context the session layer injects into outbound translation."""

    def function_ref(self, fn) -> "V.FnRef":
        raise TranslationError(
            "cannot send a callable without an active session"
        )

    def proxy_ref(self, obj) -> Optional["V.Ref"]:
        return None


_SCALAR_ELEMS = {
    bool: ElementType.BOOL,
    float: ElementType.F64,
    complex: ElementType.C128,
    str: ElementType.STRING,
}


def _int_elem(values) -> ElementType:
    lo, hi = min(values), max(values)
    if INT32_MIN <= lo and hi <= INT32_MAX:
        return ElementType.I32
    if INT64_MIN <= lo and hi <= INT64_MAX:
        return ElementType.I64
    raise TranslationError("integer %d does not fit in 64 bits" % (hi if hi > 0 else lo))


def translate_outbound(x, hooks: Optional[OutboundHooks] = None) -> "V.Value":
    """One host value to its wire Value."""
    if x is None:
        return V.NULL
    if is_missing(x):
        return V.TypedArray.missing_scalar()
    if isinstance(x, bool):
        return V.TypedArray.scalar(ElementType.BOOL, x)
    if isinstance(x, int):
        return V.TypedArray.scalar(_int_elem([x]), x)
    if isinstance(x, float):
        return V.TypedArray.scalar(ElementType.F64, x)
    if isinstance(x, complex):
        return V.TypedArray.scalar(ElementType.C128, x)
    if isinstance(x, str):
        return V.TypedArray.scalar(ElementType.STRING, x)
    if isinstance(x, (bytes, bytearray)):
        data = bytes(x)
        dims = () if len(data) == 1 else (len(data),)
        return V.TypedArray(ElementType.U8, dims, data)
    if isinstance(x, Annotated):
        return _outbound_annotated(x, hooks)
    if hooks is not None:
        ref = hooks.proxy_ref(x)
        if ref is not None:
            return ref
    if V.is_value(x):
        return x
    if isinstance(x, np.ma.MaskedArray):
        return V.TypedArray.from_numpy(np.ma.getdata(x), mask=np.ma.getmaskarray(x))
    if isinstance(x, np.ndarray):
        return V.TypedArray.from_numpy(x)
    if isinstance(x, np.generic):
        arr = np.asarray(x)
        return V.TypedArray.from_numpy(arr.reshape(()) if arr.ndim == 0 else arr)
    if isinstance(x, ColumnTable):
        return _outbound_table(x.items(), hooks)
    if _looks_like_dataframe(x):
        return _outbound_table(
            [(str(c), x[c].to_numpy()) for c in x.columns], hooks
        )
    if isinstance(x, dict):
        return V.NamedList(
            tuple((_check_key(k), translate_outbound(v, hooks)) for k, v in x.items())
        )
    if isinstance(x, (list, tuple)):
        return _outbound_sequence(list(x), hooks)
    if callable(x):
        if hooks is None:
            raise TranslationError("cannot send a callable without an active session")
        return hooks.function_ref(x)
    raise TranslationError("unsupported host type %r" % type(x).__name__)


def _check_key(k) -> str:
    if not isinstance(k, str):
        raise TranslationError("mapping keys must be str, got %r" % type(k).__name__)
    if k == "":
        raise TranslationError("the empty mapping key is reserved")
    return k


def _looks_like_dataframe(x) -> bool:
    return type(x).__name__ == "DataFrame" and type(x).__module__.split(".")[0] == "pandas"


def _outbound_table(named_columns, hooks) -> "V.Table":
    cols = []
    for name, col in named_columns:
        wire_col = translate_outbound(col, hooks)
        if not isinstance(wire_col, V.TypedArray) or len(wire_col.dims) > 1:
            raise TranslationError("table column %r is not a 1-d array" % name)
        cols.append((_check_key(name), wire_col))
    try:
        return V.Table(tuple(cols))
    except V.ValueError_ as exc:
        raise TranslationError(str(exc)) from None


def _outbound_sequence(items, hooks) -> "V.Value":
    """Homogeneous scalar sequences become typed arrays; the rest is LIST.

    MISSING always marks a missing slot. None acts as a missing slot
    only alongside at least one typed scalar; a list of just Nones is a
    LIST of NULLs.
    """
    if not items:
        return V.List(())
    kinds = set()
    for it in items:
        if is_missing(it):
            kinds.add("missing")
        elif it is None:
            kinds.add("none")
        elif isinstance(it, bool):
            kinds.add("bool")
        elif isinstance(it, int):
            kinds.add("int")
        elif isinstance(it, float):
            kinds.add("float")
        elif isinstance(it, complex):
            kinds.add("complex")
        elif isinstance(it, str):
            kinds.add("str")
        else:
            kinds.add("other")
    typed = kinds - {"missing", "none"}
    if "other" in kinds or ("str" in typed and len(typed) > 1):
        return V.List(tuple(translate_outbound(it, hooks) for it in items))
    if not typed:
        if "missing" in kinds:
            return V.TypedArray.from_elements(ElementType.BOOL, [MISSING] * len(items))
        return V.List(tuple(V.NULL for _ in items))
    cleaned = [MISSING if (it is None or is_missing(it)) else it for it in items]
    present = [it for it in cleaned if not is_missing(it)]
    if typed == {"str"}:
        elem = ElementType.STRING
    elif "complex" in typed:
        elem = ElementType.C128
        cleaned = [it if is_missing(it) else complex(it) for it in cleaned]
    elif "float" in typed:
        elem = ElementType.F64
        cleaned = [it if is_missing(it) else float(it) for it in cleaned]
    elif "int" in typed:
        elem = _int_elem([int(it) for it in present])
        cleaned = [it if is_missing(it) else int(it) for it in cleaned]
    else:
        elem = ElementType.BOOL
    try:
        return V.TypedArray.from_elements(elem, cleaned)
    except V.ValueError_ as exc:
        raise TranslationError(str(exc)) from None


_ANNOTATED_ELEM = {
    "Float64": ElementType.F64,
    "Float32": ElementType.F32,
    "Int64": ElementType.I64,
    "Int32": ElementType.I32,
    "Int16": ElementType.I16,
    "Int8": ElementType.I8,
    "UInt8": ElementType.U8,
    "Bool": ElementType.BOOL,
    "String": ElementType.STRING,
    "Complex{Float64}": ElementType.C128,
    "Complex{Float32}": ElementType.C64,
}


def _outbound_annotated(x: Annotated, hooks) -> "V.Value":
    name, payload = x.type_name, x.value
    if name in _ANNOTATED_ELEM:
        return _retype(payload, _ANNOTATED_ELEM[name], hooks)
    if name in _BOX_PAYLOAD:
        inner = _retype(payload, _BOX_PAYLOAD[name], hooks)
        return V.Struct(name, (("value", inner),))
    if name in _RAW_BOX_BYTES or name.startswith("Ptr{"):
        nbytes = _RAW_BOX_BYTES.get(name, 8)
        if not isinstance(payload, (bytes, bytearray)) or len(payload) != nbytes:
            raise TranslationError(
                "%s payload must be exactly %d raw bytes" % (name, nbytes)
            )
        inner = V.TypedArray(ElementType.U8, (nbytes,), bytes(payload))
        return V.Struct(name, (("value", inner),))
    if _COMPLEX_BOX.match(name):
        inner = _retype(payload, ElementType.C128, hooks)
        return V.Struct(name, (("value", inner),))
    if isinstance(payload, dict):
        try:
            return V.Struct(
                name,
                tuple(
                    (_check_key(k), translate_outbound(v, hooks))
                    for k, v in payload.items()
                ),
            )
        except V.ValueError_ as exc:
            raise TranslationError(str(exc)) from None
    raise TranslationError("unsupported annotation %r on %r" % (name, type(payload).__name__))


def _retype(payload, elem: ElementType, hooks) -> "V.TypedArray":
    """Force a host payload into a typed array of the given element type."""
    if isinstance(payload, np.ma.MaskedArray):
        return V.TypedArray.from_numpy(
            np.ma.getdata(payload).astype(V.ELEMENT_DTYPE[elem])
            if elem != ElementType.STRING
            else np.ma.getdata(payload),
            elem=elem,
            mask=np.ma.getmaskarray(payload),
        )
    if isinstance(payload, np.ndarray):
        if elem == ElementType.STRING:
            return V.TypedArray.from_numpy(payload, elem=elem)
        return V.TypedArray.from_numpy(payload.astype(V.ELEMENT_DTYPE[elem]), elem=elem)
    if isinstance(payload, (list, tuple)):
        try:
            return V.TypedArray.from_elements(elem, list(payload))
        except (V.ValueError_, TypeError, ValueError) as exc:
            raise TranslationError(str(exc)) from None
    if is_missing(payload):
        return V.TypedArray.missing_scalar(elem)
    try:
        return V.TypedArray.scalar(elem, payload)
    except (V.ValueError_, TypeError, ValueError) as exc:
        raise TranslationError(str(exc)) from None


# --- inbound: Value -> host --------------------------------------------------


class InboundHooks:
    """Context for turning references into live session objects."""

    def make_proxy(self, ref: "V.Ref"):
        return ref

    def make_function(self, fnref: "V.FnRef"):
        return fnref


def translate_inbound(v, hooks: Optional[InboundHooks] = None):
    """One wire Value to its host translation (annotating as needed)."""
    if isinstance(v, V.Null):
        return None
    if isinstance(v, V.TypedArray):
        return _inbound_array(v)
    if isinstance(v, V.Struct):
        if is_box_struct(v):
            return _unbox(v)
        fields = {
            name: translate_inbound(val, hooks) for name, val in v.fields
        }
        return Annotated(fields, v.type_name)
    if isinstance(v, V.List):
        return [translate_inbound(item, hooks) for item in v.items]
    if isinstance(v, V.NamedList):
        return {name: translate_inbound(val, hooks) for name, val in v.items}
    if isinstance(v, V.Table):
        return ColumnTable(
            [(name, _inbound_array(col)) for name, col in v.columns]
        )
    if isinstance(v, V.Ref):
        return hooks.make_proxy(v) if hooks is not None else v
    if isinstance(v, V.FnRef):
        return hooks.make_function(v) if hooks is not None else v
    raise TranslationError("cannot translate %r" % type(v).__name__)


_SCALAR_ANNOTATION = {
    ElementType.F32: "Float32",
    ElementType.I32: "Int32",
    ElementType.I16: "Int16",
    ElementType.I8: "Int8",
    ElementType.C64: "Complex{Float32}",
}


def _inbound_array(v: "V.TypedArray"):
    if v.is_scalar:
        return _inbound_scalar(v)
    elem = v.elem
    if elem == ElementType.STRING:
        items = list(v.elements())
        if len(v.dims) == 1:
            return items
        arr = np.empty(v.count, dtype=object)
        arr[:] = items
        return arr.reshape(v.dims, order="F")
    if elem == ElementType.U8 and not v.has_missing:
        if len(v.dims) == 1:
            return v.data
        return v.to_numpy()
    arr = v.to_numpy()
    if v.has_missing:
        mask = np.array(v.missing_flags(), dtype=bool).reshape(v.dims, order="F")
        arr = np.ma.MaskedArray(arr, mask=mask)
    ann = _SCALAR_ANNOTATION.get(elem)
    if elem == ElementType.I64 and _needs_wide_int(v):
        ann = "Int64"
    return Annotated(arr, ann) if ann else arr


def _needs_wide_int(v: "V.TypedArray") -> bool:
    arr = np.frombuffer(v.data, dtype="<i8")
    return bool((arr > INT32_MAX).any() or (arr < INT32_MIN).any())


def _inbound_scalar(v: "V.TypedArray"):
    if v.has_missing:
        return MISSING
    x = v.elements()[0]
    elem = v.elem
    if elem == ElementType.F64:
        return float(x)
    if elem == ElementType.F32:
        return Annotated(float(x), "Float32")
    if elem == ElementType.I64:
        return x if INT32_MIN <= x <= INT32_MAX else Annotated(x, "Int64")
    if elem in (ElementType.I32, ElementType.I16, ElementType.I8):
        return Annotated(int(x), _SCALAR_ANNOTATION[elem])
    if elem == ElementType.U8:
        return bytes([x])
    if elem == ElementType.BOOL:
        return bool(x)
    if elem == ElementType.C128:
        return complex(x)
    if elem == ElementType.C64:
        return Annotated(complex(x), "Complex{Float32}")
    if elem == ElementType.STRING:
        return str(x)
    raise TranslationError("unhandled element type %r" % elem)


def _unbox(v: "V.Struct"):
    name = v.type_name
    payload = v.fields[0][1]
    if name in _RAW_BOX_BYTES or name.startswith("Ptr{"):
        nbytes = _RAW_BOX_BYTES.get(name, 8)
        if payload.elem != ElementType.U8 or payload.dims != (nbytes,):
            raise TranslationError("%s box payload must be U8[%d]" % (name, nbytes))
        return Annotated(payload.data, name)
    expected = _BOX_PAYLOAD.get(name, ElementType.C128)
    if payload.elem != expected:
        raise TranslationError(
            "%s box payload has element type %s" % (name, payload.elem.name)
        )
    host = _inbound_array(payload)
    host = strip_annotation(host)
    if name in ("UInt32", "UInt16", "Char") and payload.is_scalar:
        host = MISSING if is_missing(host) else int(host)
    return Annotated(host, name)


# --- result classification ---------------------------------------------------

FULL = "full"
PROXY = "proxy"


def classify_result(v) -> str:
    """Decide whether a runtime object crosses by value or by reference.

    Scalars, typed arrays, strings, Null, boxed primitives and lists of
    only such scalars translate fully. Structs, tables, functions,
    named lists and lists holding anything non-primitive stay remote as
    proxies.
    """
    if isinstance(v, (V.Null, V.TypedArray)):
        return FULL
    if isinstance(v, V.Struct):
        return FULL if is_box_struct(v) else PROXY
    if isinstance(v, V.List):
        for item in v.items:
            if isinstance(item, V.Null):
                continue
            if isinstance(item, V.TypedArray) and item.is_scalar:
                continue
            return PROXY
        return FULL
    return PROXY


# --- deep translation --------------------------------------------------------


def deep_translate(v, _path="$") -> "V.Value":
    """Validate that a stored object graph is fully value-translatable.

    Values are immutable so cycles cannot occur; the only obstacles are
    embedded references and functions, which have no by-value form.
    Raises with the path to the offending node.
    """
    if isinstance(v, (V.Null, V.TypedArray)):
        return v
    if isinstance(v, V.Ref):
        raise TranslationError("reference at %s cannot be deep-translated" % _path)
    if isinstance(v, V.FnRef):
        raise TranslationError("function at %s cannot be deep-translated" % _path)
    if isinstance(v, V.List):
        for i, item in enumerate(v.items):
            deep_translate(item, "%s[%d]" % (_path, i))
        return v
    if isinstance(v, V.NamedList):
        for name, item in v.items:
            deep_translate(item, "%s.%s" % (_path, name))
        return v
    if isinstance(v, V.Struct):
        for name, item in v.fields:
            deep_translate(item, "%s.%s" % (_path, name))
        return v
    if isinstance(v, V.Table):
        return v
    raise TranslationError("cannot deep-translate %r at %s" % (type(v).__name__, _path))


# --- identifier aliasing -----------------------------------------------------

_CHAR_NAMES = {
    "α": "alpha",
    "β": "beta",
    "γ": "gamma",
    "δ": "delta",
    "ε": "epsilon",
    "ζ": "zeta",
    "η": "eta",
    "θ": "theta",
    "ι": "iota",
    "κ": "kappa",
    "λ": "lambda",
    "μ": "mu",
    "ν": "nu",
    "ξ": "xi",
    "ο": "omicron",
    "π": "pi",
    "ρ": "rho",
    "σ": "sigma",
    "τ": "tau",
    "υ": "upsilon",
    "φ": "phi",
    "χ": "chi",
    "ψ": "psi",
    "ω": "omega",
    "∇": "nabla",
}


def ascii_alias(name: str) -> str:
    """Replace non-ASCII characters with bracketed lowercase names.

    Greek letters and nabla use their spelled names; anything else
    falls back to the lowercase hex codepoint. ASCII input is returned
    unchanged, so aliasing is idempotent on its own output.
    """
    if name.isascii():
        return name
    out = []
    for ch in name:
        if ch.isascii():
            out.append(ch)
        elif ch in _CHAR_NAMES:
            out.append("<%s>" % _CHAR_NAMES[ch])
        else:
            out.append("<u%04x>" % ord(ch))
    return "".join(out)
