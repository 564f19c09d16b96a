"""Built-in modules the evaluation server exposes.

Base carries the workhorse functions (map, sqrt, vcat, arithmetic,
printing, a deliberate infinite loop for interrupt drills). Library is
a demo module with a struct type and a function over it. Greek exists
to exercise non-ASCII export names.

Builtins operate on wire Values and the callable shapes from
:mod:`bridgewire.interp`; they never see host Python data.
"""

from __future__ import annotations

import time
from typing import Dict

import numpy as np

from . import values as V
from .errors import EvalError
from .interp import (
    Builtin,
    CallbackHandle,
    Constructor,
    FnObject,
    Module,
    apply_function,
    array_from_items,
    binop,
    julia_type_name,
)
from .values import ElementType, MISSING


def display(v, quote_strings: bool = False) -> str:
    """Render a runtime value the way the server prints it."""
    if isinstance(v, V.Null):
        return "nothing"
    if isinstance(v, V.TypedArray):
        if v.is_scalar:
            if v.has_missing:
                return "missing"
            return _show_scalar(v.elem, v.elements()[0], quote_strings)
        body = ", ".join(
            "missing" if x is MISSING else _show_scalar(v.elem, x, True)
            for x in v.elements()
        )
        if len(v.dims) > 1:
            shape = "×".join(str(d) for d in v.dims)
            return "%s %s[%s]" % (shape, _elem_prefix(v), body)
        return "[%s]" % body
    if isinstance(v, V.List):
        return "Any[%s]" % ", ".join(display(item, True) for item in v.items)
    if isinstance(v, V.NamedList):
        return "(%s)" % ", ".join(
            "%s = %s" % (n, display(item, True)) for n, item in v.items
        )
    if isinstance(v, V.Struct):
        return "%s(%s)" % (
            v.type_name,
            ", ".join(display(item, True) for _, item in v.fields),
        )
    if isinstance(v, V.Table):
        return "Table(%s)" % ", ".join(
            "%s = %s" % (n, display(col, True)) for n, col in v.columns
        )
    if isinstance(v, (Builtin, FnObject, CallbackHandle)):
        return "#<function>"
    if isinstance(v, Constructor):
        return v.type_name
    if isinstance(v, V.FnRef):
        return "#<function>"
    if isinstance(v, V.Ref):
        return "#<ref %d>" % v.id
    return repr(v)


def _elem_prefix(v: "V.TypedArray") -> str:
    return julia_type_name(v).partition("{")[2].rpartition(",")[0] or ""


def _show_scalar(elem: ElementType, x, quote: bool) -> str:
    if elem == ElementType.STRING:
        return '"%s"' % x.replace("\\", "\\\\").replace('"', '\\"') if quote else x
    if elem == ElementType.BOOL:
        return "true" if x else "false"
    if elem in V.COMPLEX_TYPES:
        sign = "-" if x.imag < 0 or (x.imag == 0 and str(x.imag)[0] == "-") else "+"
        return "%s %s %sim" % (_show_float(x.real), sign, _show_float(abs(x.imag)))
    if elem in V.FLOAT_TYPES:
        return _show_float(x)
    return str(x)


def _show_float(x: float) -> str:
    if x != x:
        return "NaN"
    if x == float("inf"):
        return "Inf"
    if x == float("-inf"):
        return "-Inf"
    s = repr(float(x))
    return s


def _one(args, name):
    if len(args) != 1:
        raise EvalError("%s takes exactly 1 argument, got %d" % (name, len(args)))
    return args[0]


def _no_named(named, name):
    if named:
        raise EvalError("%s takes no named arguments" % name)


def _bi_sqrt(args, named, ctx):
    _no_named(named, "sqrt")
    x = _one(args, "sqrt")
    if not isinstance(x, V.TypedArray):
        raise EvalError("sqrt requires a numeric argument, got %s" % julia_type_name(x))
    if x.is_scalar and x.has_missing:
        return V.TypedArray.missing_scalar()
    if x.elem == ElementType.STRING:
        raise EvalError("sqrt requires a numeric argument, got String")
    if x.elem in V.COMPLEX_TYPES:
        arr = np.frombuffer(x.data, dtype=V.ELEMENT_DTYPE[x.elem]).astype("<c16")
        data = np.sqrt(arr)
        return _rebuild(x, data, ElementType.C128)
    arr = np.frombuffer(x.data, dtype=V.ELEMENT_DTYPE[x.elem]).astype("<f8")
    flags = np.array(x.missing_flags(), dtype=bool)
    live = arr[~flags]
    if (live < 0).any():
        raise EvalError("DomainError: sqrt of a negative number; use a complex value")
    with np.errstate(invalid="ignore"):
        data = np.sqrt(arr)
    return _rebuild(x, data, ElementType.F64)


def _rebuild(src: "V.TypedArray", flat: np.ndarray, elem: ElementType):
    data = np.where(np.array(src.missing_flags(), dtype=bool),
                    np.zeros(1, dtype=flat.dtype), flat)
    return V.TypedArray(elem, src.dims, data.astype(V.ELEMENT_DTYPE[elem]).tobytes(),
                        src.missing)


def _bi_add(args, named, ctx):
    _no_named(named, "add")
    if len(args) != 2:
        raise EvalError("add takes exactly 2 arguments, got %d" % len(args))
    return binop("+", args[0], args[1])


def _bi_sum(args, named, ctx):
    _no_named(named, "sum")
    x = _one(args, "sum")
    if not isinstance(x, V.TypedArray) or x.elem == ElementType.STRING:
        raise EvalError("sum requires a numeric array, got %s" % julia_type_name(x))
    if x.has_missing:
        return V.TypedArray.missing_scalar()
    if x.is_scalar:
        return x
    arr = np.frombuffer(x.data, dtype=V.ELEMENT_DTYPE[x.elem])
    if x.elem in V.COMPLEX_TYPES:
        return V.TypedArray.scalar(ElementType.C128, complex(arr.astype("<c16").sum()))
    if x.elem in V.FLOAT_TYPES:
        return V.TypedArray.scalar(ElementType.F64, float(arr.astype("<f8").sum()))
    with np.errstate(over="ignore"):
        total = int(arr.astype("<i8").sum())
    total = (total + 2**63) % 2**64 - 2**63
    return V.TypedArray.scalar(ElementType.I64, total)


def _bi_vcat(args, named, ctx):
    _no_named(named, "vcat")
    items = []
    for part in args:
        if isinstance(part, V.TypedArray):
            if len(part.dims) > 1:
                raise EvalError("vcat supports scalars and vectors only")
            if part.is_scalar:
                items.append(part)
            else:
                items.extend(_scalarize(part))
        elif isinstance(part, V.List):
            items.extend(part.items)
        else:
            items.append(part)
    return array_from_items(items)


def _scalarize(arr: "V.TypedArray"):
    elem = arr.elem
    for x in arr.elements():
        if x is MISSING:
            yield V.TypedArray.missing_scalar(elem)
        else:
            yield V.TypedArray.scalar(elem, x)


def _bi_map(args, named, ctx):
    _no_named(named, "map")
    if len(args) != 2:
        raise EvalError("map takes exactly 2 arguments, got %d" % len(args))
    fn, xs = args
    if isinstance(xs, V.TypedArray) and not xs.is_scalar:
        results = [apply_function(fn, [item], [], ctx) for item in _scalarize(xs)]
        out = array_from_items(results)
        if (
            isinstance(out, V.TypedArray)
            and len(xs.dims) > 1
            and out.count == xs.count
        ):
            out = V.TypedArray(out.elem, xs.dims, out.data, out.missing)
        return out
    if isinstance(xs, V.List):
        results = [apply_function(fn, [item], [], ctx) for item in xs.items]
        return array_from_items(results)
    raise EvalError("map requires an array, got %s" % julia_type_name(xs))


def _bi_identity(args, named, ctx):
    _no_named(named, "identity")
    return _one(args, "identity")


def _bi_typeof(args, named, ctx):
    _no_named(named, "typeof")
    return V.TypedArray.scalar(ElementType.STRING, julia_type_name(_one(args, "typeof")))


def _bi_print(args, named, ctx):
    _no_named(named, "print")
    for arg in args:
        ctx.out(display(arg))
    return V.NULL


def _bi_println(args, named, ctx):
    _no_named(named, "println")
    for arg in args:
        ctx.out(display(arg))
    ctx.out("\n")
    return V.NULL


def _bi_warn(args, named, ctx):
    _no_named(named, "warn")
    msg = _one(args, "warn")
    if not (isinstance(msg, V.TypedArray) and msg.elem == ElementType.STRING
            and msg.is_scalar and not msg.has_missing):
        raise EvalError("warn takes one string")
    ctx.err("Warning: %s\n" % msg.elements()[0])
    return V.NULL


def _bi_spin(args, named, ctx):
    _no_named(named, "spin")
    if args:
        raise EvalError("spin takes no arguments")
    while True:
        time.sleep(0.01)


def _bi_maketable(args, named, ctx):
    if args:
        raise EvalError("maketable takes named column arguments only")
    cols = []
    for name, col in named:
        if not isinstance(col, V.TypedArray) or len(col.dims) > 1:
            raise EvalError("column %r must be a vector" % name)
        if col.is_scalar:
            col = V.TypedArray(col.elem, (1,), col.data, col.missing)
        cols.append((name, col))
    try:
        return V.Table(tuple(cols))
    except V.ValueError_ as exc:
        raise EvalError(str(exc)) from None


def _bi_cite(args, named, ctx):
    _no_named(named, "cite")
    book = _one(args, "cite")
    if not (isinstance(book, V.Struct) and book.type_name == "Library.Book"):
        raise EvalError(
            "cite expects a Library.Book, got %s" % julia_type_name(book)
        )
    author = book.get("author").elements()[0]
    title = book.get("title").elements()[0]
    year = book.get("year").elements()[0]
    return V.TypedArray.scalar(
        ElementType.STRING, "%s: %s (%d)" % (author, title, year)
    )


def _bi_shelfcount(args, named, ctx):
    _no_named(named, "shelfcount")
    if args:
        raise EvalError("shelfcount takes no arguments")
    return V.TypedArray.scalar(ElementType.I64, 3)


def _bi_logsigma(args, named, ctx):
    _no_named(named, "logσ")
    x = _one(args, "logσ")
    if not isinstance(x, V.TypedArray) or x.elem == ElementType.STRING:
        raise EvalError("logσ requires a numeric argument")
    if x.is_scalar and x.has_missing:
        return V.TypedArray.missing_scalar()
    arr = np.frombuffer(x.data, dtype=V.ELEMENT_DTYPE[x.elem]).astype("<f8")
    with np.errstate(all="ignore"):
        data = -np.logaddexp(0.0, -arr)
    return _rebuild(x, data, ElementType.F64)


BOOK = Constructor(
    "Library.Book",
    (("author", "string"), ("title", "string"), ("year", "int")),
)


def build_modules() -> Dict[str, Module]:
    """A fresh module table (modules are stateless; the dict is not shared)."""
    base = Module(
        "Base",
        exports={
            "map": Builtin("map", _bi_map),
            "sqrt": Builtin("sqrt", _bi_sqrt),
            "sum": Builtin("sum", _bi_sum),
            "vcat": Builtin("vcat", _bi_vcat),
            "identity": Builtin("identity", _bi_identity),
            "typeof": Builtin("typeof", _bi_typeof),
            "add": Builtin("add", _bi_add),
            "print": Builtin("print", _bi_print),
            "println": Builtin("println", _bi_println),
            "warn": Builtin("warn", _bi_warn),
            "spin": Builtin("spin", _bi_spin),
            "maketable": Builtin("maketable", _bi_maketable),
        },
        unexported={},
    )
    library = Module(
        "Library",
        exports={"Book": BOOK, "cite": Builtin("cite", _bi_cite)},
        unexported={"shelfcount": Builtin("shelfcount", _bi_shelfcount)},
    )
    greek = Module(
        "Greek",
        exports={"logσ": Builtin("logσ", _bi_logsigma)},
        unexported={},
    )
    return {"Base": base, "Library": library, "Greek": greek}
