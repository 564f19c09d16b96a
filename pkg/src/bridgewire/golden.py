"""Golden byte vectors pinning the wire format.

Each vector pairs a Value or Frame built in code with its exact
encoding, stored under ``golden/*.hex`` as ``# description`` plus hex
text. Any codec change that alters bytes fails the check; that is the
point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from typing import List as ListT, Tuple, Union

from . import values as V
from . import wire
from .stream import BufferReader
from .values import ElementType as E


@dataclass(frozen=True)
class GoldenVector:
    name: str
    description: str
    subject: Union["V.Value", "wire.Frame"]
    hex: str  # expected encoding, lowercase hex, no spaces

    @property
    def is_frame(self) -> bool:
        return not V.is_value(self.subject)


def encode_subject(vec: GoldenVector) -> bytes:
    """Encode a vector's subject with the production codec."""
    if V.is_value(vec.subject):
        return wire.encode_value(vec.subject)
    return wire.encode_frame(vec.subject)


def _encode(subject) -> bytes:
    if V.is_value(subject):
        return wire.encode_value(subject)
    return wire.encode_frame(subject)


def _build_vectors() -> ListT[GoldenVector]:
    ta = V.TypedArray.from_elements
    vecs: ListT[Tuple[str, str, object]] = [
        ("null", "null value", V.NULL),
        ("scalar-f64", "float scalar 1.0", V.TypedArray.scalar(E.F64, 1.0)),
        ("scalar-i64", "integer scalar 7", V.TypedArray.scalar(E.I64, 7)),
        ("scalar-missing", "missing boolean scalar", V.TypedArray.missing_scalar()),
        (
            "vec-f64-missing",
            "float vector [1.0, missing, 3.0] with bitmap",
            ta(E.F64, [1.0, V.MISSING, 3.0], dims=(3,)),
        ),
        ("vec-bool", "boolean vector [true, false]", ta(E.BOOL, [True, False], dims=(2,))),
        ("vec-empty-f64", "empty float vector", ta(E.F64, [], dims=(0,))),
        (
            "vec-string",
            "string vector with non-ASCII entry",
            ta(E.STRING, ["ab", "ü"], dims=(2,)),
        ),
        (
            "scalar-c128",
            "complex scalar 1+2im",
            V.TypedArray.scalar(E.C128, complex(1.0, 2.0)),
        ),
        ("vec-u8", "byte vector 0x00 0xff", ta(E.U8, [0, 255], dims=(2,))),
        (
            "mat-i32",
            "2x2 int32 matrix in column-major order",
            ta(E.I32, [1, 2, 3, 4], dims=(2, 2)),
        ),
        (
            "scalar-f64-nan",
            "NaN scalar (payload, not missing)",
            V.TypedArray.scalar(E.F64, math.nan),
        ),
        (
            "list-mixed",
            "heterogeneous list: integer, string, null",
            V.List(
                (
                    V.TypedArray.scalar(E.I64, 1),
                    V.TypedArray.scalar(E.STRING, "two"),
                    V.NULL,
                )
            ),
        ),
        (
            "nested-namedlist",
            "depth-4 named list of mixed arrays",
            V.NamedList(
                (
                    ("xs", ta(E.F64, [1.5, V.MISSING], dims=(2,))),
                    (
                        "inner",
                        V.List(
                            (
                                V.NamedList(
                                    (
                                        ("flag", V.TypedArray.scalar(E.BOOL, True)),
                                        (
                                            "deep",
                                            V.List(
                                                (
                                                    V.NULL,
                                                    ta(E.I16, [-1, 2], dims=(2,)),
                                                )
                                            ),
                                        ),
                                    )
                                ),
                                ta(E.STRING, ["σ"], dims=(1,)),
                            )
                        ),
                    ),
                )
            ),
        ),
        (
            "struct-book",
            "Book struct with three fields",
            V.Struct(
                "Library.Book",
                (
                    ("author", V.TypedArray.scalar(E.STRING, "Shakespeare")),
                    ("title", V.TypedArray.scalar(E.STRING, "Romeo and Julia")),
                    ("year", V.TypedArray.scalar(E.I64, 1597)),
                ),
            ),
        ),
        ("ref", "object reference id 8, type Function", V.Ref(8, "Function")),
        ("fnref-named", "named function reference", V.FnRef.named("Base.sqrt")),
        ("fnref-callback", "callback reference id 1", V.FnRef.callback(1)),
        (
            "table",
            "two-column table",
            V.Table(
                (
                    ("n", ta(E.I64, [1, 2, 3], dims=(3,))),
                    ("s", ta(E.STRING, ["x", "y", "z"], dims=(3,))),
                )
            ),
        ),
        (
            "frame-call-named",
            "CALL Base.sqrt with one positional 4.0",
            wire.Call.to_named(
                "Base.sqrt", (V.TypedArray.scalar(E.F64, 4.0),), ()
            ),
        ),
        (
            "frame-call-callback",
            "CALL callback 1 with positional 2.0 and named y=3",
            wire.Call.to_callback(
                1,
                (V.TypedArray.scalar(E.F64, 2.0),),
                (("y", V.TypedArray.scalar(E.I64, 3)),),
            ),
        ),
        ("frame-result", "RESULT carrying null", wire.Result(V.NULL)),
        (
            "frame-fail",
            "FAIL with message and empty detail",
            wire.Fail("DomainError", ""),
        ),
        ("frame-release", "RELEASE id 7", wire.Release(7)),
        ("frame-eval", "EVAL of a small expression", wire.Eval("1 + 1")),
        (
            "frame-let",
            "LET with one binding",
            wire.Let("x * x", (("x", V.TypedArray.scalar(E.F64, 3.0)),)),
        ),
        ("frame-fetch", "FETCH id 2", wire.Fetch(2)),
        (
            "frame-put",
            "PUT of a two-element vector",
            wire.Put(ta(E.F64, [1.0, 2.0], dims=(2,))),
        ),
        (
            "frame-scan",
            "SCAN Library including unexported",
            wire.Scan("Library", True),
        ),
        ("frame-out", "OUT chunk 'hi\\n'", wire.Out("hi\n")),
        ("frame-err", "ERR chunk", wire.Err("Warning: x\n")),
        ("frame-byebye", "BYEBYE", wire.Byebye()),
    ]
    out = []
    for name, desc, subject in vecs:
        out.append(GoldenVector(name, desc, subject, _encode(subject).hex()))
    return out


VECTORS: ListT[GoldenVector] = _build_vectors()

HANDSHAKE_HEX = wire.encode_handshake().hex()


def check_all() -> ListT[str]:
    """Compare code-built vectors against the checked-in hex files and
    re-decode each one; returns a list of failure descriptions."""
    failures: ListT[str] = []
    if HANDSHAKE_HEX != "4257523101000000":
        failures.append("handshake: bytes drifted to %s" % HANDSHAKE_HEX)
    for vec in VECTORS:
        try:
            stored = load_hex(vec.name)
        except Exception as exc:
            failures.append("%s: cannot load stored vector (%s)" % (vec.name, exc))
            continue
        if stored != vec.hex:
            failures.append(
                "%s: stored %s... != computed %s..."
                % (vec.name, stored[:24], vec.hex[:24])
            )
            continue
        data = bytes.fromhex(vec.hex)
        reader = BufferReader(data)
        try:
            if V.is_value(vec.subject):
                back = wire.decode_value(data)
            else:
                back = wire.read_frame(reader)
                if not reader.at_end:
                    raise ValueError("trailing bytes after frame")
        except Exception as exc:
            failures.append("%s: decode failed (%s)" % (vec.name, exc))
            continue
        if back != vec.subject:
            failures.append("%s: decode returned a different object" % vec.name)
    return failures


def load_hex(name: str) -> str:
    text = (
        resources.files("bridgewire").joinpath("golden/%s.hex" % name).read_text()
    )
    lines = [ln.strip() for ln in text.splitlines()]
    body = "".join(ln for ln in lines if ln and not ln.startswith("#"))
    return body.lower()


def write_vector_files(directory) -> int:
    """Regenerate the .hex files from code (maintenance helper)."""
    from pathlib import Path

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for vec in VECTORS:
        (d / ("%s.hex" % vec.name)).write_text(
            "# %s\n%s\n" % (vec.description, vec.hex)
        )
    return len(VECTORS)
