import math
import random
from fractions import Fraction as Fr

import pytest
from hypothesis import given, strategies as st

from radheat import expr as ex
from radheat.model import build_model

from conftest import finite_everywhere, random_expr, random_point

exprs = st.integers(0, 10**6).map(lambda s: random_expr(random.Random(s)))


def close(a, b, rtol=1e-9):
    return abs(a - b) <= rtol * max(1.0, abs(a), abs(b))


@given(exprs)
def test_unparse_round_trip(e):
    back = ex.parse(ex.unparse(e))
    rng = random.Random(7)
    f, g = ex.compile_expr(e), ex.compile_expr(back)
    if not finite_everywhere(f, random.Random(1)):
        return
    for _ in range(100):
        p = random_point(rng)
        assert close(f(p), g(p))


@given(exprs)
def test_simplify_idempotent(e):
    s = ex.simplify(e)
    assert ex.simplify(s) == s


@given(exprs)
def test_simplify_preserves_value(e):
    f, g = ex.compile_expr(e), ex.compile_expr(ex.simplify(e))
    if not finite_everywhere(f, random.Random(2)):
        return
    rng = random.Random(3)
    for _ in range(20):
        p = random_point(rng)
        assert close(f(p), g(p), 1e-8)


def _fd(f, p, v, h=1e-4):
    def at(s):
        q = dict(p)
        q[v] += s
        return f(q)

    d = lambda s: (at(s) - at(-s)) / (2 * s)
    return (4 * d(h / 2) - d(h)) / 3


def test_diff_matches_finite_differences():
    rng = random.Random(2024)
    checked = 0
    while checked < 50:
        e = random_expr(rng, 3)
        f = ex.compile_expr(e)
        if not finite_everywhere(f, random.Random(checked)):
            continue
        for v in "ztu":
            df = ex.compile_expr(ex.diff(e, v))
            for _ in range(5):
                p = random_point(rng)
                num, sym = _fd(f, p, v), df(p)
                scale = max(1.0, abs(sym), abs(f(p)))
                assert abs(num - sym) <= 1e-6 * scale, (ex.unparse(e), v, p, num, sym)
        checked += 1


@pytest.mark.parametrize(
    "text, value",
    [
        ("1 + 2*3", 7),
        ("2^3^2", 512),
        ("-2^2", -4),
        ("(1/2)*z", 1.5),
        ("exp(0) + ln(1)", 1),
        ("z^(-1)*t", 2 / 3),
        ("2*(z - t)", 2),
    ],
)
def test_parse_precedence(text, value):
    assert math.isclose(ex.evaluate(ex.parse(text), {"z": 3, "t": 2}), value)


def test_constants_stay_exact():
    e = ex.simplify(ex.parse("1/3 + 1/6"))
    assert e == ex.Const(Fr(1, 2))


def test_parse_errors_carry_location():
    with pytest.raises(ex.ParseError) as err:
        ex.parse("z + * t")
    assert "4" in str(err.value) or "col" in str(err.value)
    with pytest.raises(ex.ExprError):
        ex.parse("q + 1")


def test_unregistered_function_is_an_error():
    e = ex.parse("K(u)")
    with pytest.raises(ex.UnregisteredFunctionError):
        ex.diff(e, "u")
    with pytest.raises(ex.UnregisteredFunctionError):
        ex.evaluate(e, {"u": 1.0})


def test_domain_error_not_nan():
    with pytest.raises(ex.DomainError):
        ex.evaluate(ex.parse("ln(u)"), {"u": -1.0})
    with pytest.raises(ex.DomainError):
        ex.evaluate(ex.parse("u^(1/2)"), {"u": -1.0})


def test_symbol_table_rules():
    m = build_model("power", 2, k0=1, m=1, c0=1, n=2)
    st_ = m.symbol_table()
    # J' = K is registered with J
    assert ex.simplify(ex.diff(ex.parse("J(u)", st_), "u", st_)) == ex.parse("K(u)", st_)
    with pytest.raises(ex.ExprError):
        st_.with_params(z=1)
    with pytest.raises(ex.ExprError):
        ex.SymbolTable([ex.FunctionSymbol("J", lambda x: x, ex.Sym("u"))])


def test_chain_rule_through_function_symbols():
    m = build_model("exp", 1, k0=1, lam=1, c0=1, mu=2)
    st_ = m.symbol_table()
    e = ex.parse("J(u*z)", st_)
    d = ex.compile_expr(ex.diff(e, "z", st_), st_)
    # d/dz J(uz) = u K(uz) = u exp(uz)
    assert math.isclose(d({"u": 0.7, "z": 1.3}), 0.7 * math.exp(0.91), rel_tol=1e-12)


def test_check_zero_paths():
    rng = random.Random(0)
    sampler = lambda: random_point(rng)
    assert ex.check_zero(ex.parse("z*t - t*z"), None, sampler).path == "normal-form"
    r = ex.check_zero(ex.parse("exp(ln(z)) - z"), None, sampler)
    assert r.is_zero
    assert not ex.check_zero(ex.parse("z - t"), None, sampler)
