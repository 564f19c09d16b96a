"""The server's little expression language: parsing and evaluation.

Everything here runs the real module table in-process; no sockets.
"""

import pytest

from bridgewire import values as V
from bridgewire.builtins import build_modules
from bridgewire.errors import EvalError, ParseError
from bridgewire.interp import EvalContext, eval_expression, parse
from bridgewire.values import MISSING, ElementType as E


@pytest.fixture
def ctx():
    return EvalContext(build_modules())


def ev(src, ctx, **bindings):
    return eval_expression(src, bindings, ctx)


def scalar(v):
    assert isinstance(v, V.TypedArray) and v.is_scalar, v
    return v.elements()[0]


# --- literals ----------------------------------------------------------------


def test_integer_literal(ctx):
    v = ev("42", ctx)
    assert v.elem == E.I64 and scalar(v) == 42


def test_float_literals(ctx):
    assert scalar(ev("2.5", ctx)) == 2.5
    assert scalar(ev("1e3", ctx)) == 1000.0
    assert ev("1e3", ctx).elem == E.F64


def test_string_literal_with_escapes(ctx):
    assert scalar(ev(r'"a\"b\\c"', ctx)) == 'a"b\\c'


def test_keyword_literals(ctx):
    assert scalar(ev("true", ctx)) is True
    assert scalar(ev("false", ctx)) is False
    assert ev("null", ctx) == V.NULL
    assert ev("missing", ctx).has_missing


def test_array_literal(ctx):
    v = ev("[1, 2, 3]", ctx)
    assert v.dims == (3,) and list(v.elements()) == [1, 2, 3]


def test_array_literal_promotes(ctx):
    v = ev("[1, 2.5]", ctx)
    assert v.elem == E.F64 and list(v.elements()) == [1.0, 2.5]


def test_array_literal_with_missing(ctx):
    v = ev("[1, missing]", ctx)
    assert v.missing_flags() == (False, True)


# --- arithmetic --------------------------------------------------------------


def test_precedence(ctx):
    assert scalar(ev("1 + 2 * 3", ctx)) == 7
    assert scalar(ev("(1 + 2) * 3", ctx)) == 9
    assert scalar(ev("10 - 4 - 3", ctx)) == 3  # left assoc
    assert scalar(ev("-2 * 3", ctx)) == -6


def test_division_yields_float(ctx):
    v = ev("7 / 2", ctx)
    assert v.elem == E.F64 and scalar(v) == 3.5


def test_int64_wraps(ctx):
    assert scalar(ev("9223372036854775807 + 1", ctx)) == -(2**63)


def test_elementwise_with_scalar_broadcast(ctx):
    v = ev("[1.0, 2.0] * 2.0", ctx)
    assert list(v.elements()) == [2.0, 4.0]


def test_missing_propagates_through_arithmetic(ctx):
    v = ev("[1, missing] + [1, 1]", ctx)
    assert v.elements()[0] == 2 and v.elements()[1] is MISSING


def test_mismatched_lengths_rejected(ctx):
    with pytest.raises(EvalError):
        ev("[1, 2] + [1, 2, 3]", ctx)


# --- calls and lambdas --------------------------------------------------------


def test_call_qualified_name(ctx):
    assert scalar(ev("Base.sqrt(4.0)", ctx)) == 2.0


def test_lambda_define_and_apply(ctx):
    assert scalar(ev("fn(x) -> x * x", ctx, x=None) if False else ev("(fn(x) -> x * x)(3)", ctx)) == 9


def test_lambda_captures_binding(ctx):
    v = ev("(fn(x) -> x + y)(1)", ctx, y=V.TypedArray.scalar(E.I64, 10))
    assert scalar(v) == 11


def test_named_args_parse_after_positional():
    # named arguments are grammatical only after ";" following at least
    # one positional; purely-named calls travel as CALL frames instead
    node = parse("f(1; a = 2, b = 3)")
    call = node
    assert len(call.positional) == 1
    assert [n for n, _ in call.named] == ["a", "b"]
    with pytest.raises(ParseError):
        parse("f(; a = 1)")


def test_bindings_visible(ctx):
    v = ev("x + 1", ctx, x=V.TypedArray.scalar(E.I64, 41))
    assert scalar(v) == 42


def test_unknown_name_rejected(ctx):
    with pytest.raises(EvalError, match="nosuchthing"):
        ev("nosuchthing", ctx)


def test_unknown_module_function(ctx):
    with pytest.raises(EvalError):
        ev("Base.nosuch(1)", ctx)


def test_unexported_reachable_by_qualified_name(ctx):
    # unexported only means absent from listings; dotted access works
    assert scalar(ev("Library.shelfcount()", ctx)) == 3


def test_calling_a_non_function(ctx):
    with pytest.raises(EvalError, match="not callable"):
        ev("3(4)", ctx)


# --- parse errors ---------------------------------------------------------------


def test_caret_not_an_operator():
    with pytest.raises(ParseError, match="'\\^'"):
        parse("2 ^ 10")


def test_parse_error_carries_position():
    with pytest.raises(ParseError, match="position 4"):
        parse("1 + + 2" if False else "1 + )")


def test_unterminated_string():
    with pytest.raises(ParseError, match="string"):
        parse('"abc')


def test_empty_input_rejected():
    with pytest.raises(ParseError):
        parse("")


def test_trailing_tokens_rejected():
    with pytest.raises(ParseError):
        parse("1 2")


def test_named_arg_requires_semicolon():
    with pytest.raises(ParseError):
        parse("f(a = 1)")


# --- purity of scope -------------------------------------------------------------


def test_let_bindings_do_not_leak(ctx):
    assert scalar(ev("tmp", ctx, tmp=V.TypedArray.scalar(E.I64, 1))) == 1
    with pytest.raises(EvalError, match="tmp"):
        ev("tmp", ctx)


def test_successive_bindings_do_not_interact(ctx):
    a = scalar(ev("q * 2", ctx, q=V.TypedArray.scalar(E.I64, 3)))
    b = scalar(ev("q * 2", ctx, q=V.TypedArray.scalar(E.I64, 5)))
    assert (a, b) == (6, 10)
