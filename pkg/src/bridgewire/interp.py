"""The server-side expression language.

A deliberately small language: literals, module-qualified names, calls,
anonymous functions, vector literals and +,-,*,/ arithmetic. It exists
so the evaluation side of the bridge has real behavior to talk to;
it is not a general-purpose language (no control flow, no mutation).

Runtime data is wire Values plus four callable shapes: builtins,
user lambdas, type constructors, and handles to client callbacks.
Arithmetic is elementwise with scalar broadcast only; integers are
64-bit and wrap on overflow; missing propagates through every
elementwise operation via bitmap OR.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List as TList, Optional, Tuple

import numpy as np

from . import values as V
from .errors import EvalError, ParseError
from .values import ElementType, MISSING

# --- tokens -----------------------------------------------------------------

_KEYWORDS = {"fn", "true", "false", "null", "missing"}
_PUNCT = ("->", "(", ")", "[", "]", ",", ";", "=", "+", "-", "*", "/")


@dataclass(frozen=True)
class Token:
    kind: str  # ident, int, float, str, punct, keyword, end
    text: str
    pos: int
    value: object = None


def tokenize(src: str) -> TList[Token]:
    tokens = []
    i, n = 0, len(src)
    while i < n:
        ch = src[i]
        if ch in " \t\r\n":
            i += 1
            continue
        if ch == '"':
            tokens.append(_lex_string(src, i))
            i = tokens[-1].pos + len(tokens[-1].text)
            continue
        if ch.isdigit():
            tokens.append(_lex_number(src, i))
            i = tokens[-1].pos + len(tokens[-1].text)
            continue
        if ch.isidentifier():
            j = i + 1
            while j < n and ("a" + src[j]).isidentifier():
                j += 1
            word = src[i:j]
            kind = "keyword" if word in _KEYWORDS else "ident"
            tokens.append(Token(kind, word, i))
            i = j
            continue
        if src.startswith("->", i):
            tokens.append(Token("punct", "->", i))
            i += 2
            continue
        if ch in "()[],;=+-*/":
            tokens.append(Token("punct", ch, i))
            i += 1
            continue
        if ch == ".":
            tokens.append(Token("punct", ".", i))
            i += 1
            continue
        raise ParseError("unexpected character %r" % ch, i)
    tokens.append(Token("end", "", n))
    return tokens


def _lex_string(src: str, start: int) -> Token:
    i = start + 1
    out = []
    while i < len(src):
        ch = src[i]
        if ch == '"':
            return Token("str", src[start : i + 1], start, "".join(out))
        if ch == "\\":
            if i + 1 >= len(src):
                break
            esc = src[i + 1]
            if esc == '"':
                out.append('"')
            elif esc == "\\":
                out.append("\\")
            else:
                raise ParseError("unknown escape \\%s" % esc, i)
            i += 2
            continue
        if ch == "\n":
            raise ParseError("newline inside string literal", i)
        out.append(ch)
        i += 1
    raise ParseError("unterminated string literal", start)


def _lex_number(src: str, start: int) -> Token:
    i = start
    n = len(src)
    while i < n and src[i].isdigit():
        i += 1
    is_float = False
    if i < n and src[i] == "." and i + 1 < n and src[i + 1].isdigit():
        is_float = True
        i += 1
        while i < n and src[i].isdigit():
            i += 1
    if i < n and src[i] in "eE":
        j = i + 1
        if j < n and src[j] in "+-":
            j += 1
        if j < n and src[j].isdigit():
            is_float = True
            i = j
            while i < n and src[i].isdigit():
                i += 1
    text = src[start:i]
    if is_float:
        return Token("float", text, start, float(text))
    value = int(text)
    if value > 2**63 - 1:
        raise ParseError("integer literal does not fit in 64 bits", start)
    return Token("int", text, start, value)


# --- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class Literal:
    value: "V.Value"
    pos: int


@dataclass(frozen=True)
class Path:
    segments: Tuple[str, ...]
    pos: int


@dataclass(frozen=True)
class CallNode:
    target: object
    positional: Tuple[object, ...]
    named: Tuple[Tuple[str, object], ...]
    pos: int


@dataclass(frozen=True)
class Lambda:
    params: Tuple[str, ...]
    body: object
    pos: int


@dataclass(frozen=True)
class BinOp:
    op: str
    lhs: object
    rhs: object
    pos: int


@dataclass(frozen=True)
class Neg:
    operand: object
    pos: int


@dataclass(frozen=True)
class ArrayLit:
    items: Tuple[object, ...]
    pos: int


class Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = tokenize(src)
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.next()
        if tok.text != text:
            raise ParseError(
                "expected %r, found %r" % (text, tok.text or "end of input"), tok.pos
            )
        return tok

    def parse(self):
        node = self.expr()
        tail = self.peek()
        if tail.kind != "end":
            raise ParseError("unexpected %r after expression" % tail.text, tail.pos)
        return node

    def expr(self):
        tok = self.peek()
        if tok.kind == "keyword" and tok.text == "fn":
            return self.lambda_()
        return self.sum_()

    def lambda_(self):
        fn_tok = self.next()
        self.expect("(")
        params = []
        if self.peek().text != ")":
            while True:
                tok = self.next()
                if tok.kind != "ident":
                    raise ParseError("expected parameter name", tok.pos)
                params.append(tok.text)
                if self.peek().text == ",":
                    self.next()
                    continue
                break
        self.expect(")")
        if len(set(params)) != len(params):
            raise ParseError("duplicate parameter name", fn_tok.pos)
        self.expect("->")
        body = self.expr()
        return Lambda(tuple(params), body, fn_tok.pos)

    def sum_(self):
        node = self.prod()
        while self.peek().text in ("+", "-"):
            op = self.next()
            node = BinOp(op.text, node, self.prod(), op.pos)
        return node

    def prod(self):
        node = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.next()
            node = BinOp(op.text, node, self.unary(), op.pos)
        return node

    def unary(self):
        tok = self.peek()
        if tok.text == "-":
            self.next()
            return Neg(self.unary(), tok.pos)
        return self.postfix()

    def postfix(self):
        node = self.atom()
        while self.peek().text == "(":
            open_tok = self.next()
            positional, named = self.args()
            self.expect(")")
            node = CallNode(node, tuple(positional), tuple(named), open_tok.pos)
        return node

    def args(self):
        positional, named = [], []
        if self.peek().text == ")":
            return positional, named
        positional.append(self.expr())
        while self.peek().text == ",":
            self.next()
            positional.append(self.expr())
        if self.peek().text == ";":
            self.next()
            while True:
                name_tok = self.next()
                if name_tok.kind != "ident":
                    raise ParseError("expected argument name", name_tok.pos)
                self.expect("=")
                named.append((name_tok.text, self.expr()))
                if self.peek().text == ",":
                    self.next()
                    continue
                break
        return positional, named

    def atom(self):
        tok = self.next()
        if tok.kind == "int":
            return Literal(V.TypedArray.scalar(ElementType.I64, tok.value), tok.pos)
        if tok.kind == "float":
            return Literal(V.TypedArray.scalar(ElementType.F64, tok.value), tok.pos)
        if tok.kind == "str":
            return Literal(V.TypedArray.scalar(ElementType.STRING, tok.value), tok.pos)
        if tok.kind == "keyword":
            if tok.text == "true":
                return Literal(V.TypedArray.scalar(ElementType.BOOL, True), tok.pos)
            if tok.text == "false":
                return Literal(V.TypedArray.scalar(ElementType.BOOL, False), tok.pos)
            if tok.text == "null":
                return Literal(V.NULL, tok.pos)
            if tok.text == "missing":
                return Literal(V.TypedArray.missing_scalar(), tok.pos)
            raise ParseError("unexpected keyword %r" % tok.text, tok.pos)
        if tok.kind == "ident":
            segments = [tok.text]
            while self.peek().text == ".":
                self.next()
                seg = self.next()
                if seg.kind not in ("ident", "keyword"):
                    raise ParseError("expected name after '.'", seg.pos)
                segments.append(seg.text)
            return Path(tuple(segments), tok.pos)
        if tok.text == "[":
            items = []
            if self.peek().text != "]":
                items.append(self.expr())
                while self.peek().text == ",":
                    self.next()
                    items.append(self.expr())
            self.expect("]")
            return ArrayLit(tuple(items), tok.pos)
        if tok.text == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        raise ParseError(
            "unexpected %r" % (tok.text or "end of input"), tok.pos
        )


def parse(src: str):
    return Parser(src).parse()


# --- callable shapes ----------------------------------------------------------


@dataclass(frozen=True)
class Builtin:
    name: str
    fn: Callable

    def __repr__(self):
        return "Builtin(%s)" % self.name


@dataclass(frozen=True)
class Constructor:
    """A struct type: callable to construct, passable as a type argument."""

    type_name: str
    fields: Tuple[Tuple[str, str], ...]  # (name, "string" | "int" | "float" | "any")

    def __repr__(self):
        return "Constructor(%s)" % self.type_name


@dataclass(frozen=True)
class FnObject:
    params: Tuple[str, ...]
    body: object
    env: "Env"

    def __repr__(self):
        return "FnObject(%s)" % ", ".join(self.params)


@dataclass(frozen=True)
class CallbackHandle:
    cb_id: int

    def __repr__(self):
        return "CallbackHandle(%d)" % self.cb_id


CALLABLE_SHAPES = (Builtin, Constructor, FnObject, CallbackHandle)


@dataclass(frozen=True)
class Module:
    name: str
    exports: Dict[str, object]
    unexported: Dict[str, object]

    def member(self, name: str):
        if name in self.exports:
            return self.exports[name]
        if name in self.unexported:
            return self.unexported[name]
        raise EvalError("module %s has no member %r" % (self.name, name))


class Env:
    """Lexical scope chain over the module table."""

    def __init__(self, bindings: Dict[str, object], parent: Optional["Env"] = None,
                 modules: Optional[Dict[str, Module]] = None):
        self.bindings = bindings
        self.parent = parent
        self.modules = modules if modules is not None else (
            parent.modules if parent is not None else {}
        )

    def lookup(self, name: str):
        env: Optional[Env] = self
        while env is not None:
            if name in env.bindings:
                return env.bindings[name]
            env = env.parent
        base = self.modules.get("Base")
        if base is not None and name in base.exports:
            return base.exports[name]
        raise EvalError("unknown identifier %r" % name)

    def resolve_path(self, segments: Tuple[str, ...]):
        if len(segments) == 1:
            return self.lookup(segments[0])
        module = self.modules.get(segments[0])
        if module is None:
            raise EvalError("unknown module %r" % segments[0])
        node = module
        for seg in segments[1:]:
            if not isinstance(node, Module):
                raise EvalError("%r is not a module" % ".".join(segments[:-1]))
            node = node.member(seg)
        return node


class EvalContext:
    """Everything an evaluation may reach beyond its own scope."""

    def __init__(self, modules: Dict[str, Module],
                 out: Optional[Callable[[str], None]] = None,
                 err: Optional[Callable[[str], None]] = None,
                 call_callback: Optional[Callable] = None):
        self.modules = modules
        self._out = out
        self._err = err
        self._call_callback = call_callback

    def out(self, chunk: str) -> None:
        if self._out is not None:
            self._out(chunk)

    def err(self, chunk: str) -> None:
        if self._err is not None:
            self._err(chunk)

    def call_callback(self, cb_id: int, positional, named):
        if self._call_callback is None:
            raise EvalError("no callback channel available")
        return self._call_callback(cb_id, positional, named)


# --- evaluation ----------------------------------------------------------------


def eval_expression(src: str, bindings: Dict[str, object], ctx: EvalContext):
    """Parse and evaluate in a fresh scope; bindings die with the call."""
    ast = parse(src)
    env = Env(dict(bindings), modules=ctx.modules)
    return eval_node(ast, env, ctx)


def eval_node(node, env: Env, ctx: EvalContext):
    if isinstance(node, Literal):
        return node.value
    if isinstance(node, Path):
        return env.resolve_path(node.segments)
    if isinstance(node, Lambda):
        return FnObject(node.params, node.body, env)
    if isinstance(node, Neg):
        return negate(eval_node(node.operand, env, ctx))
    if isinstance(node, BinOp):
        lhs = eval_node(node.lhs, env, ctx)
        rhs = eval_node(node.rhs, env, ctx)
        return binop(node.op, lhs, rhs)
    if isinstance(node, ArrayLit):
        items = [eval_node(item, env, ctx) for item in node.items]
        return array_from_items(items)
    if isinstance(node, CallNode):
        target = eval_node(node.target, env, ctx)
        positional = [eval_node(arg, env, ctx) for arg in node.positional]
        named = [(name, eval_node(arg, env, ctx)) for name, arg in node.named]
        return apply_function(target, positional, named, ctx)
    raise EvalError("unhandled expression node %r" % type(node).__name__)


def apply_function(fn, positional, named, ctx: EvalContext):
    if isinstance(fn, Builtin):
        return fn.fn(positional, named, ctx)
    if isinstance(fn, FnObject):
        if named:
            raise EvalError("anonymous functions take no named arguments")
        if len(positional) != len(fn.params):
            raise EvalError(
                "arity mismatch: function takes %d arguments, got %d"
                % (len(fn.params), len(positional))
            )
        frame = Env(dict(zip(fn.params, positional)), parent=fn.env)
        return eval_node(fn.body, frame, ctx)
    if isinstance(fn, Constructor):
        return construct(fn, positional, named)
    if isinstance(fn, CallbackHandle):
        return ctx.call_callback(fn.cb_id, positional, named)
    raise EvalError("value of type %r is not callable" % _shape_name(fn))


def construct(ctor: Constructor, positional, named) -> "V.Struct":
    if named:
        raise EvalError("constructors take positional arguments only")
    if len(positional) != len(ctor.fields):
        raise EvalError(
            "%s takes %d fields, got %d"
            % (ctor.type_name, len(ctor.fields), len(positional))
        )
    out = []
    for (fname, ftype), arg in zip(ctor.fields, positional):
        out.append((fname, _coerce_field(ctor.type_name, fname, ftype, arg)))
    return V.Struct(ctor.type_name, tuple(out))


def _coerce_field(type_name, fname, ftype, arg) -> "V.Value":
    if ftype == "any":
        if not V.is_value(arg):
            raise EvalError("field %s of %s must be a value" % (fname, type_name))
        return arg
    if not isinstance(arg, V.TypedArray) or not arg.is_scalar or arg.has_missing:
        raise EvalError(
            "field %s of %s expects a %s scalar" % (fname, type_name, ftype)
        )
    if ftype == "string":
        if arg.elem != ElementType.STRING:
            raise EvalError("field %s of %s must be a string" % (fname, type_name))
        return arg
    if ftype == "int":
        if arg.elem not in V.INT_TYPES and arg.elem != ElementType.U8:
            raise EvalError("field %s of %s must be an integer" % (fname, type_name))
        return V.TypedArray.scalar(ElementType.I64, arg.elements()[0])
    if ftype == "float":
        if arg.elem not in V.FLOAT_TYPES + V.INT_TYPES:
            raise EvalError("field %s of %s must be a number" % (fname, type_name))
        return V.TypedArray.scalar(ElementType.F64, float(arg.elements()[0]))
    raise EvalError("unknown field type %r" % ftype)


def _shape_name(x) -> str:
    if isinstance(x, V.TypedArray):
        return julia_type_name(x)
    return type(x).__name__


# --- arithmetic -----------------------------------------------------------------

_NUMERIC_ELEMS = frozenset(
    e for e in ElementType if e != ElementType.STRING
)


def _require_numeric(v, what: str) -> "V.TypedArray":
    if not isinstance(v, V.TypedArray) or v.elem not in _NUMERIC_ELEMS:
        raise EvalError("%s requires a numeric operand, got %s" % (what, _shape_name(v)))
    return v


def _promoted_elem(a: ElementType, b: ElementType, division: bool) -> ElementType:
    elems = {a, b}
    if elems & set(V.COMPLEX_TYPES):
        return ElementType.C128
    if division or (elems & set(V.FLOAT_TYPES)):
        return ElementType.F64
    return ElementType.I64


def _flat(v: "V.TypedArray", dtype) -> np.ndarray:
    arr = np.frombuffer(v.data, dtype=V.ELEMENT_DTYPE[v.elem])
    return arr.astype(dtype, copy=False)


def _mask_flat(v: "V.TypedArray") -> Optional[np.ndarray]:
    if v.missing is None:
        return None
    return np.array(v.missing_flags(), dtype=bool)


def binop(op: str, a, b) -> "V.TypedArray":
    a = _require_numeric(a, "operator %r" % op)
    b = _require_numeric(b, "operator %r" % op)
    if a.dims and b.dims and a.dims != b.dims:
        raise EvalError(
            "shape mismatch: %r vs %r (only scalars broadcast)" % (a.dims, b.dims)
        )
    dims = a.dims or b.dims
    count = max(a.count, b.count)
    target = _promoted_elem(a.elem, b.elem, division=(op == "/"))
    dtype = V.ELEMENT_DTYPE[target]
    fa, fb = _flat(a, dtype), _flat(b, dtype)
    if a.is_scalar and not b.is_scalar:
        fa = np.broadcast_to(fa, (count,))
    if b.is_scalar and not a.is_scalar:
        fb = np.broadcast_to(fb, (count,))
    with np.errstate(all="ignore"):
        if op == "+":
            data = fa + fb
        elif op == "-":
            data = fa - fb
        elif op == "*":
            data = fa * fb
        elif op == "/":
            data = fa / fb
        else:
            raise EvalError("unknown operator %r" % op)
    mask = _combine_masks(a, b, count)
    return _build_array(data.astype(dtype, copy=False), target, dims, mask)


def _combine_masks(a, b, count) -> Optional[np.ndarray]:
    out = None
    for v in (a, b):
        m = _mask_flat(v)
        if m is None:
            continue
        if v.is_scalar and count > 1:
            m = np.broadcast_to(m, (count,))
        out = m.copy() if out is None else (out | m)
    return out


def _build_array(data: np.ndarray, elem: ElementType, dims, mask) -> "V.TypedArray":
    if mask is not None and mask.any():
        data = np.where(mask, np.zeros(1, dtype=data.dtype), data)
        bitmap = V.pack_bitmap([bool(x) for x in mask])
    else:
        bitmap = None
    return V.TypedArray(elem, tuple(dims), data.tobytes(), bitmap)


def negate(v) -> "V.TypedArray":
    v = _require_numeric(v, "unary minus")
    target = (
        ElementType.C128
        if v.elem in V.COMPLEX_TYPES
        else ElementType.F64
        if v.elem in V.FLOAT_TYPES
        else ElementType.I64
    )
    dtype = V.ELEMENT_DTYPE[target]
    with np.errstate(all="ignore"):
        data = -_flat(v, dtype)
    return _build_array(data.astype(dtype, copy=False), target, v.dims, _mask_flat(v))


# --- array construction -----------------------------------------------------------

_PROMOTE_ORDER = {
    ElementType.BOOL: 0,
    ElementType.U8: 1,
    ElementType.I8: 1,
    ElementType.I16: 1,
    ElementType.I32: 1,
    ElementType.I64: 1,
    ElementType.F32: 2,
    ElementType.F64: 2,
    ElementType.C64: 3,
    ElementType.C128: 3,
}

_PROMOTED = {0: ElementType.BOOL, 1: ElementType.I64, 2: ElementType.F64,
             3: ElementType.C128}


def array_from_items(items) -> "V.Value":
    """1-d array with element promotion; heterogeneous input stays a List.

    Missing scalars set bitmap bits. Anything that is not a scalar
    primitive (nested arrays, structs, functions) makes the result a
    plain List, mirroring a container of type Any.
    """
    if not items:
        return V.TypedArray(ElementType.F64, (0,), b"")
    ranks = []
    saw_string = False
    for it in items:
        if not isinstance(it, V.TypedArray) or not it.is_scalar:
            return V.List(tuple(_as_value(i) for i in items))
        if it.has_missing:
            continue
        if it.elem == ElementType.STRING:
            saw_string = True
        else:
            ranks.append(_PROMOTE_ORDER[it.elem])
    if saw_string and ranks:
        return V.List(tuple(items))
    elements = [MISSING if it.has_missing else it.elements()[0] for it in items]
    if saw_string:
        elem = ElementType.STRING
    elif not ranks:
        elem = ElementType.BOOL
    else:
        elem = _PROMOTED[max(ranks)]
    return V.TypedArray.from_elements(elem, elements)


def _as_value(x) -> "V.Value":
    if V.is_value(x):
        return x
    raise EvalError("%r cannot be placed in an array" % _shape_name(x))


# --- type names --------------------------------------------------------------------

_ELEM_TYPE_NAMES = {
    ElementType.F64: "Float64",
    ElementType.F32: "Float32",
    ElementType.I64: "Int64",
    ElementType.I32: "Int32",
    ElementType.I16: "Int16",
    ElementType.I8: "Int8",
    ElementType.U8: "UInt8",
    ElementType.BOOL: "Bool",
    ElementType.STRING: "String",
    ElementType.C128: "Complex{Float64}",
    ElementType.C64: "Complex{Float32}",
}


def julia_type_name(v) -> str:
    """The type name the modeled language would report for a value."""
    if isinstance(v, V.Null):
        return "Nothing"
    if isinstance(v, V.TypedArray):
        base = _ELEM_TYPE_NAMES[v.elem]
        if v.is_scalar:
            if v.has_missing:
                return "Missing"
            return base
        if v.missing is not None:
            base = "Union{Missing, %s}" % base
        return "Array{%s,%d}" % (base, len(v.dims))
    if isinstance(v, V.List):
        return "Array{Any,1}"
    if isinstance(v, V.NamedList):
        return "NamedList"
    if isinstance(v, V.Struct):
        return v.type_name
    if isinstance(v, V.Table):
        return "Table"
    if isinstance(v, (Builtin, FnObject, CallbackHandle, V.FnRef)):
        return "Function"
    if isinstance(v, Constructor):
        return "Type{%s}" % v.type_name
    if isinstance(v, V.Ref):
        return v.type_name or "Any"
    return type(v).__name__
