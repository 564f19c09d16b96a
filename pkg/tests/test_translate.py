"""Host<->wire translation: the fixed type tables, row by row.

Outbound: what each native Python value becomes on the wire.
Inbound: what each wire element type becomes in Python, and exactly
which arrivals carry a type annotation. Annotated arrivals must encode
back bit-identically (reconstructability).
"""

import numpy as np
import pytest

from bridgewire import values as V
from bridgewire.errors import TranslationError
from bridgewire.translate import (
    Annotated,
    ColumnTable,
    ascii_alias,
    classify_result,
    deep_translate,
    host_equal,
    translate_inbound,
    translate_outbound,
)
from bridgewire.values import MISSING, ElementType as E

ta = V.TypedArray.from_elements


def out(x):
    return translate_outbound(x)


def back(v):
    return translate_inbound(v)


# --- outbound: native scalar -> element type (one row each) -------------------


@pytest.mark.parametrize(
    "host,elem",
    [
        (3, E.I32),
        (1.5, E.F64),
        (True, E.BOOL),
        ("hi", E.STRING),
        (1 + 2j, E.C128),
        (b"\x07", E.U8),
    ],
    ids=["integer", "float", "boolean", "string", "complex", "byte"],
)
def test_outbound_scalar_rows(host, elem):
    v = out(host)
    assert isinstance(v, V.TypedArray)
    assert v.elem == elem and v.is_scalar


def test_outbound_int_vector_is_i32():
    v = out([1, 2])
    assert v.elem == E.I32 and v.dims == (2,)


def test_outbound_int_beyond_32_bits_widens_to_i64():
    assert out(2**40).elem == E.I64
    assert out([1, 2**40]).elem == E.I64


def test_outbound_int_beyond_64_bits_rejected():
    with pytest.raises(TranslationError, match="64 bits"):
        out(2**64)


def test_outbound_matrix_keeps_dims():
    v = out(np.array([[1.0, 3.0], [2.0, 4.0]], order="F"))
    assert v.elem == E.F64 and v.dims == (2, 2)


def test_outbound_missing_vs_nan():
    v = out([1.0, MISSING, float("nan")])
    assert v.missing_flags() == (False, True, False)
    got = v.elements()
    assert got[1] is MISSING
    assert got[2] != got[2]  # NaN payload, bitmap clear


def test_outbound_none_is_null():
    assert out(None) == V.NULL


def test_outbound_missing_scalar():
    v = out(MISSING)
    assert v.is_scalar and v.has_missing


def test_outbound_bytes_len1_is_scalar_u8():
    assert out(b"\x41").dims == ()
    assert out(b"AB").dims == (2,)


def test_outbound_numpy_dtypes():
    for dtype, elem in [
        ("<f8", E.F64), ("<f4", E.F32), ("<i8", E.I64), ("<i4", E.I32),
        ("<i2", E.I16), ("i1", E.I8), ("u1", E.U8), ("?", E.BOOL),
        ("<c16", E.C128), ("<c8", E.C64),
    ]:
        v = out(np.array([0, 1], dtype=dtype))
        assert v.elem == elem, dtype


def test_outbound_masked_array_sets_bitmap():
    arr = np.ma.MaskedArray([1.0, 2.0, 3.0], mask=[False, True, False])
    v = out(arr)
    assert v.missing_flags() == (False, True, False)


def test_outbound_heterogeneous_list_nests():
    v = out([1, "a"])
    assert isinstance(v, V.List)


def test_outbound_none_in_typed_list_is_missing():
    v = out([1.0, None, 3.0])
    assert isinstance(v, V.TypedArray)
    assert v.missing_flags() == (False, True, False)


def test_outbound_all_none_list_stays_nulls():
    v = out([None, None])
    assert v == V.List((V.NULL, V.NULL))


def test_outbound_dict_is_namedlist():
    v = out({"a": 1, "b": "x"})
    assert isinstance(v, V.NamedList)
    assert [n for n, _ in v.items] == ["a", "b"]


def test_outbound_dict_rejects_non_string_keys():
    with pytest.raises(TranslationError, match="keys"):
        out({1: 2})


def test_outbound_table():
    t = out(ColumnTable({"x": np.array([1.0, 2.0]), "y": ["a", "b"]}))
    assert isinstance(t, V.Table)
    assert [n for n, _ in t.columns] == ["x", "y"]


def test_outbound_unsupported_type_rejected():
    with pytest.raises(TranslationError, match="unsupported"):
        out(object())


def test_outbound_callable_needs_session():
    with pytest.raises(TranslationError, match="session"):
        out(lambda: None)


# --- inbound rows: element type -> host (+ annotation exactly where stated) ---


def test_inbound_f64_plain():
    assert back(V.TypedArray.scalar(E.F64, 1.5)) == 1.5
    got = back(ta(E.F64, [1.0, 2.0], dims=(2,)))
    assert isinstance(got, np.ndarray) and got.dtype == np.dtype("<f8")


def test_inbound_f32_annotated():
    got = back(V.TypedArray.scalar(E.F32, 1.5))
    assert got == Annotated(1.5, "Float32")
    arr = back(ta(E.F32, [1.5, 2.5], dims=(2,)))
    assert arr.type_name == "Float32"
    assert list(arr.value) == [1.5, 2.5]


def test_inbound_small_i64_is_plain_int():
    got = back(V.TypedArray.scalar(E.I64, 5))
    assert got == 5 and not isinstance(got, Annotated)


def test_inbound_wide_i64_annotated():
    got = back(V.TypedArray.scalar(E.I64, 2**40))
    assert got == Annotated(2**40, "Int64")
    arr = back(ta(E.I64, [1, 2**40], dims=(2,)))
    assert arr.type_name == "Int64"


def test_inbound_narrow_ints_annotated():
    assert back(V.TypedArray.scalar(E.I32, 3)) == Annotated(3, "Int32")
    assert back(V.TypedArray.scalar(E.I16, 3)) == Annotated(3, "Int16")
    assert back(V.TypedArray.scalar(E.I8, 3)) == Annotated(3, "Int8")


def test_inbound_u8_is_raw_bytes():
    assert back(V.TypedArray.scalar(E.U8, 0x41)) == b"A"
    assert back(ta(E.U8, [1, 2, 3], dims=(3,))) == b"\x01\x02\x03"


def test_inbound_c128_plain():
    assert back(V.TypedArray.scalar(E.C128, 1 + 2j)) == 1 + 2j


def test_inbound_c64_annotated():
    got = back(V.TypedArray.scalar(E.C64, 1 + 2j))
    assert got == Annotated(1 + 2j, "Complex{Float32}")


def test_inbound_string_plain():
    assert back(V.TypedArray.scalar(E.STRING, "héllo")) == "héllo"
    assert back(ta(E.STRING, ["a", "b"], dims=(2,))) == ["a", "b"]


def test_inbound_bool_plain():
    assert back(V.TypedArray.scalar(E.BOOL, True)) is True


def test_inbound_missing_scalar_is_sentinel():
    assert back(V.TypedArray.missing_scalar()) is MISSING


def test_inbound_missing_in_array_becomes_mask():
    got = back(ta(E.F64, [1.0, MISSING], dims=(2,)))
    assert isinstance(got, np.ma.MaskedArray)
    assert bool(got.mask[1]) and not bool(got.mask[0])


# boxed rows: element types with no wire code of their own


@pytest.mark.parametrize(
    "name,payload,host",
    [
        ("Float16", V.TypedArray.scalar(E.F64, 0.5), 0.5),
        ("UInt32", V.TypedArray.scalar(E.F64, 4000000000.0), 4000000000),
        ("UInt16", V.TypedArray.scalar(E.I32, 65000), 65000),
        ("Char", V.TypedArray.scalar(E.I32, 97), 97),
    ],
)
def test_inbound_boxed_numeric_rows(name, payload, host):
    v = V.Struct(name, (("value", payload),))
    got = back(v)
    assert got == Annotated(host, name)


@pytest.mark.parametrize(
    "name,nbytes",
    [("UInt64", 8), ("Ptr", 8), ("Int128", 16), ("UInt128", 16)],
)
def test_inbound_raw_boxed_rows(name, nbytes):
    raw = bytes(range(nbytes))
    v = V.Struct(name, (("value", V.TypedArray(E.U8, (nbytes,), raw)),))
    got = back(v)
    assert got == Annotated(raw, name)
    assert isinstance(got.value, bytes) and len(got.value) == nbytes


def test_inbound_complex_int_box():
    v = V.Struct(
        "Complex{Int64}",
        (("value", V.TypedArray.scalar(E.C128, 3 + 4j)),),
    )
    assert back(v) == Annotated(3 + 4j, "Complex{Int64}")


def test_inbound_struct_is_annotated_record():
    v = V.Struct(
        "Library.Book",
        (
            ("author", V.TypedArray.scalar(E.STRING, "Shakespeare")),
            ("title", V.TypedArray.scalar(E.STRING, "Romeo and Julia")),
            ("year", V.TypedArray.scalar(E.I64, 1597)),
        ),
    )
    got = back(v)
    assert got.type_name == "Library.Book"
    assert got.value == {
        "author": "Shakespeare",
        "title": "Romeo and Julia",
        "year": 1597,
    }


def test_inbound_table_preserves_order():
    t = V.Table(
        (
            ("z", ta(E.I64, [1, 2], dims=(2,))),
            ("a", ta(E.STRING, ["x", "y"], dims=(2,))),
        )
    )
    got = back(t)
    assert isinstance(got, ColumnTable)
    assert got.names == ["z", "a"]


# --- reconstructability: annotated arrivals encode back bit-identically -------

RECON_CASES = [
    V.TypedArray.scalar(E.F32, 1.5),
    ta(E.F32, [1.5, MISSING], dims=(2,)),
    V.TypedArray.scalar(E.I64, 2**40),
    V.TypedArray.scalar(E.I32, -7),
    V.TypedArray.scalar(E.I16, 300),
    V.TypedArray.scalar(E.I8, -5),
    ta(E.I16, [1, MISSING, 3], dims=(3,)),
    V.TypedArray.scalar(E.C64, 1 - 1j),
    V.Struct("Float16", (("value", V.TypedArray.scalar(E.F64, 0.25)),)),
    V.Struct("UInt32", (("value", V.TypedArray.scalar(E.F64, 123.0)),)),
    V.Struct("UInt16", (("value", V.TypedArray.scalar(E.I32, 9)),)),
    V.Struct("Char", (("value", V.TypedArray.scalar(E.I32, 955)),)),
    V.Struct("UInt64", (("value", V.TypedArray(E.U8, (8,), b"\x01" * 8)),)),
    V.Struct("Int128", (("value", V.TypedArray(E.U8, (16,), b"\x02" * 16)),)),
    V.Struct("Complex{Int8}", (("value", V.TypedArray.scalar(E.C128, 1 + 1j)),)),
]


@pytest.mark.parametrize("v", RECON_CASES, ids=lambda v: str(v)[:48])
def test_annotated_rows_reconstruct_exactly(v):
    assert translate_outbound(translate_inbound(v)) == v


def test_plain_rows_reconstruct_too():
    for v in [
        V.TypedArray.scalar(E.F64, 2.5),
        ta(E.F64, [1.0, MISSING, float("nan")], dims=(3,)),
        V.TypedArray.scalar(E.STRING, "s"),
        V.TypedArray.scalar(E.BOOL, False),
        V.TypedArray.scalar(E.C128, 2j),
        ta(E.U8, [9, 8], dims=(2,)),
        V.NULL,
    ]:
        assert translate_outbound(translate_inbound(v)) == v


def test_i64_in_32bit_range_comes_back_as_i32():
    # the one intentional narrowing: small remote integers surface as
    # plain ints, which re-enter the wire at host integer width
    v = V.TypedArray.scalar(E.I64, 5)
    assert translate_outbound(translate_inbound(v)).elem == E.I32


# --- result classification -----------------------------------------------------


def test_classify_primitives_full():
    assert classify_result(V.NULL) == "full"
    assert classify_result(V.TypedArray.scalar(E.F64, 1.0)) == "full"
    assert classify_result(ta(E.STRING, ["a"], dims=(1,))) == "full"


def test_classify_scalar_list_full():
    v = V.List((V.TypedArray.scalar(E.I64, 1), V.NULL))
    assert classify_result(v) == "full"


def test_classify_complex_shapes_proxy():
    arr = ta(E.I64, [1, 2], dims=(2,))
    assert classify_result(V.List((arr,))) == "proxy"  # array of arrays
    assert classify_result(V.Table((("x", arr),))) == "proxy"
    assert classify_result(V.NamedList((("a", V.NULL),))) == "proxy"
    assert classify_result(V.FnRef.named("Base.sqrt")) == "proxy"
    book = V.Struct("Library.Book", (("year", V.TypedArray.scalar(E.I64, 1)),))
    assert classify_result(book) == "proxy"


def test_classify_box_struct_full():
    box = V.Struct("Float16", (("value", V.TypedArray.scalar(E.F64, 1.0)),))
    assert classify_result(box) == "full"


def test_classify_is_shape_deterministic():
    a = V.List((V.TypedArray.scalar(E.I64, 1),))
    b = V.List((V.TypedArray.scalar(E.I64, 999),))
    assert classify_result(a) == classify_result(b)


# --- deep translation ----------------------------------------------------------


def test_deep_translate_passes_plain_graphs():
    v = V.Struct(
        "T",
        (("a", V.List((V.NULL, V.TypedArray.scalar(E.F64, 1.0)))),),
    )
    assert deep_translate(v) == v


def test_deep_translate_reports_path_to_reference():
    v = V.NamedList((("inner", V.List((V.NULL, V.Ref(4, "Any")))),))
    with pytest.raises(TranslationError, match=r"\$\.inner\[1\]"):
        deep_translate(v)


def test_deep_translate_reports_path_to_function():
    v = V.Struct("T", (("f", V.FnRef.named("Base.sqrt")),))
    with pytest.raises(TranslationError, match=r"\$\.f"):
        deep_translate(v)


# --- ascii aliasing -------------------------------------------------------------


def test_ascii_alias_rows():
    assert ascii_alias("logσ") == "log<sigma>"
    assert ascii_alias("mean") == "mean"
    assert ascii_alias("∇f") == "<nabla>f"
    assert ascii_alias("f♯") == "f<u266f>"


def test_ascii_alias_idempotent_on_output():
    assert ascii_alias(ascii_alias("αβγ")) == ascii_alias("αβγ")


# --- host equality helper --------------------------------------------------------


def test_host_equal_handles_nan_and_masks():
    a = np.ma.MaskedArray([1.0, float("nan")], mask=[False, False])
    b = np.ma.MaskedArray([1.0, float("nan")], mask=[False, False])
    assert host_equal(a, b)
    assert host_equal(float("nan"), float("nan"))
    assert not host_equal(
        np.ma.MaskedArray([1.0], mask=[True]),
        np.ma.MaskedArray([1.0], mask=[False]),
    )
    assert not host_equal(1, 1.0)  # int vs float are distinct host shapes


def test_column_table_validation():
    with pytest.raises(TranslationError, match="length"):
        ColumnTable({"a": [1, 2], "b": [1]})
    with pytest.raises(TranslationError, match="duplicate"):
        ColumnTable([("a", [1]), ("a", [2])])
    t = ColumnTable({"a": [1, 2], "b": ["x", "y"]})
    assert t.names == ["a", "b"] and t.nrows == 2 and len(t) == 2
