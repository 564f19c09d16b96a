"""Conformance tooling: random value generation, a text-format baseline
codec, and a mutation fuzzer for the binary decoder.

The text baseline exists to quantify what the binary format buys: it is
a straightforward JSON mapping (stdlib ``json``, C-accelerated), written
honestly rather than pessimized, with numbers in decimal, missing slots
as ``null``, NaN/Infinity as their JSON extension tokens, and complex
numbers as two-element arrays.
"""

from __future__ import annotations

import json
import math
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List as ListT, Optional, Sequence

import numpy as np

from . import values as V
from . import wire
from .errors import BridgewireError
from .stream import BufferReader
from .values import ElementType, ValueError_

# ---------------------------------------------------------------------------
# random value generation


_IDENT_HEADS = "abcdefghijklmnopqrstuvwxyz"
_IDENT_TAILS = _IDENT_HEADS + "0123456789_"

_STRING_POOL = (
    "",
    "a",
    "hello",
    "äöü",
    "σ",
    "x\ny",
    "tab\tsep",
    "𝒜𝓑",
    "🜚",
    'quote"inside',
    "back\\slash",
)


@dataclass
class ValueGenerator:
    """Deterministic random Values: same seed, same sequence.

    Every tag and element type has nonzero probability; generated
    values always satisfy the model invariants.
    """

    seed: int = 0
    max_depth: int = 4
    max_len: int = 8
    missing_prob: float = 0.15
    elem_weights: Optional[Dict[ElementType, float]] = None
    rng: random.Random = field(init=False, repr=False)

    def __post_init__(self):
        self.rng = random.Random(self.seed)
        weights = dict.fromkeys(ElementType, 1.0)
        if self.elem_weights:
            weights.update(self.elem_weights)
        self._elems = list(weights)
        self._elem_w = [weights[e] for e in self._elems]

    def value(self, depth: Optional[int] = None) -> "V.Value":
        if depth is None:
            depth = self.max_depth
        return _gen(self, self.rng, depth)

    def frame(self) -> "wire.Frame":
        return _gen_frame(self, self.rng)


def gen_value(g: ValueGenerator) -> "V.Value":
    return g.value()


def _ident(rng: random.Random) -> str:
    n = rng.randint(1, 8)
    s = rng.choice(_IDENT_HEADS) + "".join(
        rng.choice(_IDENT_TAILS) for _ in range(n - 1)
    )
    if rng.random() < 0.05:
        s += "σ"
    return s

def _idents(rng: random.Random, n: int) -> ListT[str]:
    names: ListT[str] = []
    while len(names) < n:
        s = _ident(rng)
        if s not in names:
            names.append(s)
    return names


def _gen_element(rng: random.Random, elem: ElementType):
    r = rng.random()
    if elem == ElementType.F64:
        if r < 0.1:
            return rng.choice([0.0, -0.0, math.nan, math.inf, -math.inf])
        return rng.uniform(-1e6, 1e6)
    if elem == ElementType.F32:
        if r < 0.1:
            return float(np.float32(rng.choice([0.0, math.nan, math.inf])))
        return float(np.float32(rng.uniform(-1e4, 1e4)))
    if elem == ElementType.I64:
        return rng.randrange(-(2**63), 2**63)
    if elem == ElementType.I32:
        return rng.randrange(-(2**31), 2**31)
    if elem == ElementType.I16:
        return rng.randrange(-(2**15), 2**15)
    if elem == ElementType.I8:
        return rng.randrange(-128, 128)
    if elem == ElementType.U8:
        return rng.randrange(0, 256)
    if elem == ElementType.BOOL:
        return rng.random() < 0.5
    if elem == ElementType.STRING:
        return rng.choice(_STRING_POOL)
    if elem == ElementType.C128:
        return complex(rng.uniform(-10, 10), rng.uniform(-10, 10))
    if elem == ElementType.C64:
        return complex(
            float(np.float32(rng.uniform(-10, 10))),
            float(np.float32(rng.uniform(-10, 10))),
        )
    raise AssertionError(elem)


def _gen_array(g: ValueGenerator, rng: random.Random) -> "V.TypedArray":
    elem = rng.choices(g._elems, weights=g._elem_w)[0]
    shape_kind = rng.random()
    if shape_kind < 0.35:
        dims: tuple = ()
    elif shape_kind < 0.85:
        dims = (rng.randint(0, g.max_len),)
    elif shape_kind < 0.97:
        dims = (rng.randint(0, 3), rng.randint(0, 3))
    else:
        dims = (rng.randint(1, 2), rng.randint(1, 2), rng.randint(1, 2))
    count = math.prod(dims)
    use_missing = rng.random() < 0.4
    vals = []
    for _ in range(count):
        if use_missing and rng.random() < g.missing_prob:
            vals.append(V.MISSING)
        else:
            vals.append(_gen_element(rng, elem))
    return V.TypedArray.from_elements(elem, vals, dims=dims)


def _gen(g: ValueGenerator, rng: random.Random, depth: int) -> "V.Value":
    leaf_only = depth <= 0
    r = rng.random()
    if leaf_only:
        r *= 0.65  # only the non-recursive bands remain reachable
    if r < 0.04:
        return V.NULL
    if r < 0.55:
        return _gen_array(g, rng)
    if r < 0.59:
        return V.Ref(rng.randrange(1, 2**32), rng.choice(["Any", "Function", "Vector"]))
    if r < 0.62:
        kind = rng.randrange(3)
        if kind == 1:
            return V.FnRef.callback(rng.randrange(1, 2**31) * 2 - 1)
        name = "%s.%s" % (_ident(rng).capitalize(), _ident(rng))
        return V.FnRef.named(name) if kind == 0 else V.FnRef.constructor(name)
    if r < 0.65:
        cols = _idents(rng, rng.randint(1, 4))
        nrows = rng.randint(0, g.max_len)
        columns = []
        for name in cols:
            elem = rng.choices(g._elems, weights=g._elem_w)[0]
            vals = [
                V.MISSING if rng.random() < g.missing_prob else _gen_element(rng, elem)
                for _ in range(nrows)
            ]
            columns.append((name, V.TypedArray.from_elements(elem, vals, dims=(nrows,))))
        return V.Table(tuple(columns))
    if r < 0.80:
        n = rng.randint(0, 4)
        return V.List(tuple(_gen(g, rng, depth - 1) for _ in range(n)))
    if r < 0.90:
        names = _idents(rng, rng.randint(0, 4))
        return V.NamedList(tuple((nm, _gen(g, rng, depth - 1)) for nm in names))
    type_name = _ident(rng).capitalize()
    if rng.random() < 0.3:
        type_name += ".%s" % _ident(rng).capitalize()
    names = _idents(rng, rng.randint(0, 4))
    return V.Struct(type_name, tuple((nm, _gen(g, rng, depth - 1)) for nm in names))


def _gen_frame(g: ValueGenerator, rng: random.Random) -> "wire.Frame":
    kind = rng.randrange(9)
    if kind == 0:
        callee = rng.randrange(3)
        npos = rng.randint(0, 3)
        pos = tuple(g.value(2) for _ in range(npos))
        named = tuple((nm, g.value(1)) for nm in _idents(rng, rng.randint(0, 2)))
        if callee == 0:
            return wire.Call.to_named("Base.%s" % _ident(rng), pos, named)
        if callee == 1:
            return wire.Call.to_reference(rng.randrange(1, 2**32) * 2, pos, named)
        return wire.Call.to_callback(rng.randrange(1, 2**31) * 2 - 1, pos, named)
    if kind == 1:
        return wire.Result(g.value(3))
    if kind == 2:
        return wire.Fail(rng.choice(_STRING_POOL) or "err", rng.choice(_STRING_POOL))
    if kind == 3:
        return wire.Release(rng.randrange(1, 2**32))
    if kind == 4:
        return wire.Eval("1 + %d" % rng.randrange(100))
    if kind == 5:
        named = tuple((nm, g.value(1)) for nm in _idents(rng, rng.randint(0, 2)))
        return wire.Let("x * 2", named)
    if kind == 6:
        return wire.Put(g.value(2))
    if kind == 7:
        return wire.Scan(rng.choice(["Base", "Library", "Greek"]), rng.random() < 0.5)
    return rng.choice([wire.Fetch(rng.randrange(1, 2**32)), wire.Byebye(),
                       wire.Out("chunk"), wire.Err("chunk")])


# ---------------------------------------------------------------------------
# text baseline codec

_ELEM_NAMES = {e: e.name.lower() for e in ElementType}
_NAMES_ELEM = {n: e for e, n in _ELEM_NAMES.items()}

_COMPLEX = (ElementType.C128, ElementType.C64)
_FLOATS = (ElementType.F64, ElementType.F32)


def _array_to_jsonable(v: "V.TypedArray"):
    if v.elem == ElementType.STRING:
        vals: list = list(v.data)
    elif v.elem in _COMPLEX:
        arr = np.frombuffer(v.data, dtype=V.ELEMENT_DTYPE[v.elem])
        vals = np.column_stack([arr.real, arr.imag]).astype(float).tolist()
    elif v.elem == ElementType.BOOL:
        vals = [b == 1 for b in v.data]
    else:
        vals = np.frombuffer(v.data, dtype=V.ELEMENT_DTYPE[v.elem]).tolist()
    if v.missing is not None:
        flags = v.missing_flags()
        vals = [None if flags[i] else vals[i] for i in range(v.count)]
    return {"t": "arr", "e": _ELEM_NAMES[v.elem], "d": list(v.dims), "v": vals}


def _to_jsonable(v: "V.Value"):
    if isinstance(v, V.Null):
        return {"t": "null"}
    if isinstance(v, V.TypedArray):
        return _array_to_jsonable(v)
    if isinstance(v, V.List):
        return {"t": "list", "v": [_to_jsonable(x) for x in v.items]}
    if isinstance(v, V.NamedList):
        return {
            "t": "nlist",
            "n": [n for n, _ in v.items],
            "v": [_to_jsonable(x) for _, x in v.items],
        }
    if isinstance(v, V.Struct):
        return {
            "t": "struct",
            "y": v.type_name,
            "n": [n for n, _ in v.fields],
            "v": [_to_jsonable(x) for _, x in v.fields],
        }
    if isinstance(v, V.Table):
        return {
            "t": "table",
            "n": [n for n, _ in v.columns],
            "v": [_array_to_jsonable(c) for _, c in v.columns],
        }
    raise ValueError_("text baseline does not cover %s" % type(v).__name__)


def text_encode(v: "V.Value") -> str:
    """Serialize a data Value to the JSON-style text form."""
    return json.dumps(_to_jsonable(v), ensure_ascii=False, allow_nan=True)


def _array_from_jsonable(obj) -> "V.TypedArray":
    elem = _NAMES_ELEM[obj["e"]]
    dims = tuple(obj["d"])
    raw = obj["v"]
    vals = []
    for x in raw:
        if x is None:
            vals.append(V.MISSING)
        elif elem in _COMPLEX:
            vals.append(complex(x[0], x[1]))
        else:
            vals.append(x)
    return V.TypedArray.from_elements(elem, vals, dims=dims)


def _from_jsonable(obj) -> "V.Value":
    tag = obj["t"]
    if tag == "null":
        return V.NULL
    if tag == "arr":
        return _array_from_jsonable(obj)
    if tag == "list":
        return V.List(tuple(_from_jsonable(x) for x in obj["v"]))
    if tag == "nlist":
        return V.NamedList(
            tuple((n, _from_jsonable(x)) for n, x in zip(obj["n"], obj["v"]))
        )
    if tag == "struct":
        return V.Struct(
            obj["y"], tuple((n, _from_jsonable(x)) for n, x in zip(obj["n"], obj["v"]))
        )
    if tag == "table":
        return V.Table(
            tuple((n, _array_from_jsonable(x)) for n, x in zip(obj["n"], obj["v"]))
        )
    raise ValueError_("unknown text tag %r" % tag)


def text_decode(s: str) -> "V.Value":
    return _from_jsonable(json.loads(s))


def text_baseline_roundtrip(v: "V.Value") -> "V.Value":
    """Encode to text and back; REF/FNREF are out of scope."""
    return text_decode(text_encode(v))


# ---------------------------------------------------------------------------
# fuzzing

HANG_BUDGET = 1.0


@dataclass
class Finding:
    kind: str  # "crash" | "hang"
    seed_note: str
    data: bytes
    error: str

    def __repr__(self):
        return "Finding(%s, %s, %d bytes)" % (self.kind, self.error, len(self.data))


def mutate_bitflip(rng: random.Random, data: bytes) -> bytes:
    if not data:
        return data
    buf = bytearray(data)
    i = rng.randrange(len(buf))
    buf[i] ^= 1 << rng.randrange(8)
    return bytes(buf)


def mutate_byteset(rng: random.Random, data: bytes) -> bytes:
    if not data:
        return data
    buf = bytearray(data)
    buf[rng.randrange(len(buf))] = rng.randrange(256)
    return bytes(buf)


def mutate_truncate(rng: random.Random, data: bytes) -> bytes:
    if len(data) <= 1:
        return b""
    return data[: rng.randrange(1, len(data))]


def mutate_splice(rng: random.Random, data: bytes, other: bytes) -> bytes:
    if not data or not other:
        return data + other
    return data[: rng.randrange(len(data))] + other[rng.randrange(len(other)):]


def mutate_u32_tweak(rng: random.Random, data: bytes) -> bytes:
    """Nudge a random 4-byte window, the classic length-field attack."""
    if len(data) < 4:
        return data
    buf = bytearray(data)
    i = rng.randrange(len(buf) - 3)
    n = int.from_bytes(buf[i : i + 4], "little")
    n = (n + rng.choice([1, -1, 0x7FFFFFFF, 0x80000000, 2**32 - 1])) % 2**32
    buf[i : i + 4] = n.to_bytes(4, "little")
    return bytes(buf)


def mutate(rng: random.Random, data: bytes, pool: Sequence[bytes] = ()) -> bytes:
    """One random corruption of ``data``; splices pull from ``pool``."""
    if not pool:
        pool = (data,)
    r = rng.random()
    if r < 0.25:
        return mutate_bitflip(rng, data)
    if r < 0.5:
        return mutate_byteset(rng, data)
    if r < 0.7:
        return mutate_truncate(rng, data)
    if r < 0.85:
        return mutate_u32_tweak(rng, data)
    return mutate_splice(rng, data, rng.choice(pool))


def _try_decode(data: bytes) -> Optional[str]:
    """Feed bytes to the frame decoder; None when handled cleanly,
    else a description of the finding."""
    reader = BufferReader(data)
    try:
        while True:
            frame = wire.try_read_frame(reader)
            if frame is None:
                return None
    except BridgewireError:
        return None
    except RecursionError:
        return "RecursionError (depth cap failed)"
    except MemoryError:
        return "MemoryError (allocation cap failed)"
    except Exception as exc:  # any other escape is a decoder bug
        return "%s: %s" % (type(exc).__name__, exc)


def default_corpus(extra_seed: int = 7, extra: int = 64) -> ListT[bytes]:
    """Golden vectors plus a batch of generated frame encodings."""
    from . import golden

    corpus = [bytes.fromhex(vec.hex) for vec in golden.VECTORS]
    g = ValueGenerator(seed=extra_seed, max_depth=3, max_len=6)
    for _ in range(extra):
        corpus.append(wire.encode_frame(g.frame()))
    return corpus


def _load_corpus(corpus) -> ListT[bytes]:
    if isinstance(corpus, (str, Path)):
        items = []
        for p in sorted(Path(corpus).iterdir()):
            if p.suffix == ".hex":
                body = [ln for ln in p.read_text().splitlines()
                        if ln and not ln.startswith("#")]
                items.append(bytes.fromhex("".join(body)))
            elif p.suffix == ".bin":
                items.append(p.read_bytes())
        if not items:
            raise ValueError_("no corpus inputs under %s" % corpus)
        return items
    return list(corpus)


def fuzz_decoder(corpus, time_budget: float, seed: int = 0) -> ListT[Finding]:
    """Mutate corpus inputs and hammer the decoder for `time_budget`
    seconds. Every outcome other than success or a wire error is a
    finding; so is any single input taking longer than 1 s."""
    pool = _load_corpus(corpus)
    rng = random.Random(seed)
    findings: ListT[Finding] = []
    deadline = time.monotonic() + time_budget
    iterations = 0
    while time.monotonic() < deadline:
        data = mutate(rng, rng.choice(pool), pool)
        t0 = time.perf_counter()
        problem = _try_decode(data)
        elapsed = time.perf_counter() - t0
        if problem is not None:
            findings.append(Finding("crash", "iter %d" % iterations, data, problem))
        elif elapsed > HANG_BUDGET:
            findings.append(
                Finding("hang", "iter %d" % iterations, data, "%.2fs" % elapsed)
            )
        iterations += 1
    return findings
