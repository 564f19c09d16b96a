"""Value model: construction invariants, accessors, numpy bridging."""

import numpy as np
import pytest

from bridgewire import values as V
from bridgewire.values import MISSING, ElementType as E, is_missing


def ta(elem, xs, **kw):
    return V.TypedArray.from_elements(elem, xs, **kw)


# --- construction strictness -------------------------------------------------


def test_scalar_has_no_dims():
    v = V.TypedArray.scalar(E.F64, 2.5)
    assert v.dims == () and v.is_scalar and v.count == 1


def test_payload_length_must_match_dims():
    with pytest.raises(V.ValueError_, match="payload"):
        V.TypedArray(E.F64, (2,), b"\x00" * 8)


def test_negative_dimension_rejected():
    with pytest.raises(V.ValueError_, match="negative"):
        V.TypedArray(E.I8, (-1,), b"")


def test_bool_bytes_must_be_zero_or_one():
    with pytest.raises(V.ValueError_, match="boolean"):
        V.TypedArray(E.BOOL, (1,), b"\x02")
    assert V.TypedArray(E.BOOL, (2,), b"\x01\x00").elements() == (True, False)


def test_bitmap_length_checked():
    with pytest.raises(V.ValueError_, match="bitmap"):
        V.TypedArray(E.I8, (3,), b"\x00\x00\x00", missing=b"\x00\x00")


def test_bitmap_padding_bits_must_be_clear():
    # 3 elements -> one bitmap byte; bits 3..7 are padding
    with pytest.raises(V.ValueError_, match="padding"):
        V.TypedArray(E.I8, (3,), b"\x00\x00\x00", missing=b"\x08")


def test_missing_placeholders_must_be_zeroed():
    with pytest.raises(V.ValueError_, match="placeholder"):
        V.TypedArray(E.I8, (2,), b"\x01\x07", missing=b"\x02")
    ok = V.TypedArray(E.I8, (2,), b"\x01\x00", missing=b"\x02")
    assert ok.elements() == (1, MISSING)


def test_missing_string_slot_must_be_empty():
    with pytest.raises(V.ValueError_, match="not empty"):
        V.TypedArray(E.STRING, (2,), ("a", "b"), missing=b"\x02")
    ok = V.TypedArray(E.STRING, (2,), ("a", ""), missing=b"\x02")
    assert ok.elements() == ("a", MISSING)


def test_bitmap_is_lsb_first():
    v = ta(E.I8, [MISSING, 1, 2, 3, 4, 5, 6, 7, MISSING], dims=(9,))
    assert v.missing == bytes([0b00000001, 0b00000001])


def test_string_array_elements_must_be_str():
    with pytest.raises(V.ValueError_, match="must be str"):
        V.TypedArray(E.STRING, (1,), (7,))


# --- from_elements / elements symmetry ---------------------------------------


@pytest.mark.parametrize(
    "elem,xs",
    [
        (E.F64, [1.5, -0.0, float("inf")]),
        (E.F32, [0.5, -2.0]),
        (E.I64, [-(2**63), 2**63 - 1]),
        (E.I32, [-(2**31), 2**31 - 1]),
        (E.I16, [-32768, 32767]),
        (E.I8, [-128, 127]),
        (E.U8, [0, 255]),
        (E.BOOL, [True, False]),
        (E.STRING, ["", "héllo", "a\x00b"]),
        (E.C128, [1 + 2j, -3.5j]),
        (E.C64, [0.5 - 1j]),
    ],
)
def test_elements_roundtrip(elem, xs):
    v = ta(elem, xs, dims=(len(xs),))
    assert list(v.elements()) == xs
    assert v.elem == elem


def test_elements_with_missing():
    v = ta(E.F64, [1.0, MISSING, 3.0], dims=(3,))
    got = v.elements()
    assert got[0] == 1.0 and got[1] is MISSING and got[2] == 3.0
    assert v.has_missing
    assert v.missing_flags() == (False, True, False)


def test_nan_is_not_missing():
    v = ta(E.F64, [float("nan")], dims=(1,))
    assert not v.has_missing
    assert np.isnan(v.elements()[0])


def test_missing_scalar_default_is_bool():
    m = V.TypedArray.missing_scalar()
    assert m.is_scalar and m.has_missing and m.elem == E.BOOL
    assert m.elements() == (MISSING,)


# --- numpy bridge -------------------------------------------------------------


def test_to_numpy_column_major():
    v = ta(E.I32, [1, 2, 3, 4], dims=(2, 2))
    arr = v.to_numpy()
    assert arr.shape == (2, 2)
    # first index varies fastest in the flat payload
    assert arr[0, 0] == 1 and arr[1, 0] == 2 and arr[0, 1] == 3 and arr[1, 1] == 4


def test_from_numpy_roundtrip():
    arr = np.arange(6, dtype="<f8").reshape(2, 3, order="F")
    v = V.TypedArray.from_numpy(arr)
    assert v.dims == (2, 3) and v.elem == E.F64
    assert np.array_equal(v.to_numpy(), arr)


def test_from_numpy_with_mask():
    arr = np.array([1.0, 2.0, 3.0])
    v = V.TypedArray.from_numpy(arr, mask=np.array([False, True, False]))
    assert v.missing_flags() == (False, True, False)
    assert v.elements()[1] is MISSING


def test_from_numpy_rejects_unsupported_dtype():
    with pytest.raises(V.ValueError_, match="dtype"):
        V.TypedArray.from_numpy(np.array([1], dtype="<u4"))


# --- composite validation -----------------------------------------------------


def test_namedlist_names_unique_and_nonempty():
    one = V.TypedArray.scalar(E.I64, 1)
    with pytest.raises(V.ValueError_, match="duplicate"):
        V.NamedList((("a", one), ("a", one)))
    with pytest.raises(V.ValueError_, match="reserved"):
        V.NamedList((("", one),))


def test_struct_validation():
    one = V.TypedArray.scalar(E.I64, 1)
    with pytest.raises(V.ValueError_, match="type name"):
        V.Struct("not an identifier!", (("a", one),))
    with pytest.raises(V.ValueError_, match="duplicate"):
        V.Struct("T", (("a", one), ("a", one)))
    with pytest.raises(V.ValueError_, match="empty"):
        V.Struct("T", (("", one),))
    ok = V.Struct("Library.Book", (("year", one),))
    assert ok.get("year") == one


def test_struct_name_allows_brace_suffix():
    one = V.TypedArray.scalar(E.C128, 1 + 0j)
    v = V.Struct("Complex{Int64}", (("value", one),))
    assert v.type_name == "Complex{Int64}"


def test_table_columns_checked():
    a = ta(E.I64, [1, 2], dims=(2,))
    b = ta(E.F64, [1.0], dims=(1,))
    with pytest.raises(V.ValueError_, match="length"):
        V.Table((("x", a), ("y", b)))
    with pytest.raises(V.ValueError_, match="duplicate"):
        V.Table((("x", a), ("x", a)))
    with pytest.raises(V.ValueError_, match="dims"):
        V.Table((("x", ta(E.I64, [1, 2, 3, 4], dims=(2, 2))),))
    with pytest.raises(V.ValueError_, match="empty"):
        V.Table((("", a),))


def test_ref_and_fnref_validation():
    with pytest.raises(V.ValueError_, match="u64"):
        V.Ref(-1, "T")
    with pytest.raises(V.ValueError_, match="u64"):
        V.Ref(2**64, "T")
    with pytest.raises(V.ValueError_, match="name"):
        V.FnRef.named("")
    fn = V.FnRef.named("Base.sqrt")
    assert fn.kind == V.FnKind.NAMED and fn.name == "Base.sqrt"
    cb = V.FnRef.callback(3)
    assert cb.kind == V.FnKind.CALLBACK and cb.callback_id == 3


def test_values_hash_and_compare():
    a = ta(E.F64, [1.0, 2.0], dims=(2,))
    b = ta(E.F64, [1.0, 2.0], dims=(2,))
    c = ta(E.F64, [1.0, 2.0], dims=(2, 1))
    assert a == b and hash(a) == hash(b)
    assert a != c  # same payload, different shape
    assert V.NULL == V.Null()


def test_is_missing_only_for_sentinel():
    assert is_missing(MISSING)
    assert not is_missing(None)
    assert not is_missing(float("nan"))
    assert not is_missing(0)
