"""Minimal symbolic kernel: parse, print, differentiate, simplify, evaluate.

Trees are immutable. Constants are exact ``Fraction`` values and powers carry
rational exponents only; anything else is written as ``exp(c*ln(base))``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import product as _cartesian
from types import MappingProxyType
from typing import Callable, Iterable, Mapping

VARIABLES = ("z", "t", "u", "eta", "lam")
BUILTIN_FUNCTIONS = ("exp", "ln")
FUNCTION_SYMBOLS = ("K", "C", "J", "Jinv", "F")
RESERVED = VARIABLES + BUILTIN_FUNCTIONS + FUNCTION_SYMBOLS

# z, t and the similarity variable live on the positive half-line.
POSITIVE_VARIABLES = frozenset({"z", "t", "eta"})


class ExprError(Exception):
    pass


class ParseError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownSymbolError(ExprError):
    def __init__(self, token: str, offset: int):
        super().__init__(f"unknown symbol {token!r} at offset {offset}")
        self.token = token
        self.offset = offset


class UnregisteredFunctionError(ExprError):
    pass


class EvaluationError(ExprError):
    pass


class DomainError(EvaluationError):
    pass


def to_fraction(x) -> Fraction:
    """Exact rational for ints, Fractions, decimal strings and floats (via repr)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("bool is not a number")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"non-finite value {x}")
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    # numpy scalars and the like
    return to_fraction(float(x))


# ---------------------------------------------------------------------------
# nodes


class Expr:
    __slots__ = ()

    def __add__(self, other):
        return Add((self, as_expr(other)))

    def __radd__(self, other):
        return Add((as_expr(other), self))

    def __sub__(self, other):
        return Add((self, Mul((MINUS_ONE, as_expr(other)))))

    def __rsub__(self, other):
        return Add((as_expr(other), Mul((MINUS_ONE, self))))

    def __mul__(self, other):
        return Mul((self, as_expr(other)))

    def __rmul__(self, other):
        return Mul((as_expr(other), self))

    def __truediv__(self, other):
        return Mul((self, Pow(as_expr(other), Fraction(-1))))

    def __rtruediv__(self, other):
        return Mul((as_expr(other), Pow(self, Fraction(-1))))

    def __neg__(self):
        return Mul((MINUS_ONE, self))

    def __pow__(self, q):
        return power(self, q)

    def __str__(self):
        return unparse(self)


def _cached_hash(obj, *parts):
    h = hash((type(obj).__name__,) + parts)
    object.__setattr__(obj, "_hash", h)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: Fraction
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "value", to_fraction(self.value))
        _cached_hash(self, self.value)

    def __hash__(self):
        return self._hash


@dataclass(frozen=True, eq=True)
class Sym(Expr):
    name: str
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _cached_hash(self, self.name)

    def __hash__(self):
        return self._hash


@dataclass(frozen=True, eq=True)
class Add(Expr):
    terms: tuple
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        _cached_hash(self, self.terms)

    def __hash__(self):
        return self._hash


@dataclass(frozen=True, eq=True)
class Mul(Expr):
    factors: tuple
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        _cached_hash(self, self.factors)

    def __hash__(self):
        return self._hash


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exp: Fraction
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "exp", to_fraction(self.exp))
        _cached_hash(self, self.base, self.exp)

    def __hash__(self):
        return self._hash


@dataclass(frozen=True, eq=True)
class Exp(Expr):
    arg: Expr
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _cached_hash(self, self.arg)

    def __hash__(self):
        return self._hash


@dataclass(frozen=True, eq=True)
class Ln(Expr):
    arg: Expr
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _cached_hash(self, self.arg)

    def __hash__(self):
        return self._hash


@dataclass(frozen=True, eq=True)
class Func(Expr):
    """A registered function symbol (K, C, J, Jinv, F, ...) applied to an argument."""

    name: str
    arg: Expr
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _cached_hash(self, self.name, self.arg)

    def __hash__(self):
        return self._hash


ZERO = Const(0)
ONE = Const(1)
MINUS_ONE = Const(-1)
Z, T, U, ETA, LAM = (Sym(v) for v in VARIABLES)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return Const(to_fraction(x))


def power(base, q) -> Expr:
    """``base**q``; non-rational or symbolic exponents become exp(q*ln(base))."""
    base = as_expr(base)
    if isinstance(q, Expr):
        if isinstance(q, Const):
            return Pow(base, q.value)
        return Exp(Mul((q, Ln(base))))
    return Pow(base, to_fraction(q))


def exp(x) -> Exp:
    return Exp(as_expr(x))


def ln(x) -> Ln:
    return Ln(as_expr(x))


def func(name: str, x) -> Func:
    return Func(name, as_expr(x))


def sqrt(x) -> Pow:
    return Pow(as_expr(x), Fraction(1, 2))


# ---------------------------------------------------------------------------
# symbol table


@dataclass(frozen=True)
class FunctionSymbol:
    """Numeric evaluator plus derivative rule for one function symbol.

    ``derivative`` and ``definition`` are expressions in the placeholder ``u``;
    they are instantiated by substituting the actual argument.
    """

    name: str
    evaluate: Callable[[float], float]
    derivative: Expr | None = None
    definition: Expr | None = None


class SymbolTable:
    """Registered function symbols and numeric parameter values (immutable)."""

    def __init__(self, functions: Iterable[FunctionSymbol] = (), params: Mapping | None = None):
        fmap = {f.name: f for f in functions}
        if "J" in fmap:
            if "K" not in fmap:
                raise ExprError("J registered without K")
            if fmap["J"].derivative != Func("K", U):
                raise ExprError("J must be registered with derivative K(u)")
        for name in fmap:
            if name in VARIABLES or name in BUILTIN_FUNCTIONS:
                raise ExprError(f"{name!r} cannot be a function symbol")
        self._functions = MappingProxyType(fmap)
        self._params = MappingProxyType({k: to_fraction(v) for k, v in (params or {}).items()})
        for k in self._params:
            if k in RESERVED:
                raise ExprError(f"parameter name {k!r} is reserved")

    @property
    def functions(self) -> Mapping[str, FunctionSymbol]:
        return self._functions

    @property
    def params(self) -> Mapping[str, Fraction]:
        return self._params

    def function(self, name: str) -> FunctionSymbol:
        try:
            return self._functions[name]
        except KeyError:
            raise UnregisteredFunctionError(f"function symbol {name!r} is not registered") from None

    def with_functions(self, *functions: FunctionSymbol) -> "SymbolTable":
        merged = dict(self._functions)
        merged.update({f.name: f for f in functions})
        return SymbolTable(merged.values(), self._params)

    def with_params(self, **params) -> "SymbolTable":
        merged = dict(self._params)
        merged.update(params)
        return SymbolTable(self._functions.values(), merged)

    def __repr__(self):
        return f"SymbolTable(functions={sorted(self._functions)}, params={dict(self._params)})"


EMPTY_TABLE = SymbolTable()


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*|\.\d+|\d+)|(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text, params, functions):
        self.tokens = _tokenize(text)
        self.i = 0
        self.params = params
        self.functions = functions

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value or kind != "op":
            what = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {value!r}, found {what}", pos)

    def parse(self):
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", pos)
        return e

    def expr(self):
        e = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                rhs = self.term()
                e = Add((e, rhs)) if val == "+" else Add((e, _negate(rhs)))
            else:
                return e

    def term(self):
        e = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.take()
                rhs = self.unary()
                if val == "*":
                    e = Mul((e, rhs))
                elif isinstance(e, Const) and isinstance(rhs, Const) and rhs.value != 0:
                    e = Const(e.value / rhs.value)
                else:
                    e = Mul((e, Pow(rhs, -1)))
            else:
                return e

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return _negate(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.take()
            expo = self.unary()
            if not free_symbols(expo) and not functions_in(expo):
                folded = simplify(expo)
                if isinstance(folded, Const):
                    return Pow(base, folded.value)
            return Exp(Mul((expo, Ln(base))))
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Const(Fraction(val))
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "id":
            if val in BUILTIN_FUNCTIONS or val in self.functions:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                if val == "exp":
                    return Exp(arg)
                if val == "ln":
                    return Ln(arg)
                return Func(val, arg)
            if val in VARIABLES or val in self.params:
                return Sym(val)
            raise UnknownSymbolError(val, pos)
        if kind == "end":
            raise ParseError("unexpected end of input", pos)
        raise ParseError(f"unexpected token {val!r}", pos)


def _negate(e: Expr) -> Expr:
    if isinstance(e, Const):
        return Const(-e.value)
    return Mul((MINUS_ONE, e))


def parse(text: str, st: SymbolTable | None = None, params: Iterable[str] = ()) -> Expr:
    """Parse infix text. Parameters are identifiers declared in ``st`` or ``params``."""
    allowed = set(params)
    funcs = set(FUNCTION_SYMBOLS)
    if st is not None:
        allowed.update(st.params)
        funcs.update(st.functions)
    return _Parser(text, allowed, funcs).parse()


# ---------------------------------------------------------------------------
# printing

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = range(1, 6)


def _frac_text(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _prec(e: Expr) -> int:
    if isinstance(e, Add):
        return _PREC_ADD
    if isinstance(e, Mul):
        return _PREC_MUL
    if isinstance(e, Const):
        if e.value < 0:
            return _PREC_NEG
        return _PREC_ATOM if e.value.denominator == 1 else _PREC_MUL
    if isinstance(e, Pow):
        return _PREC_POW
    return _PREC_ATOM


def _wrap(e: Expr, need: int) -> str:
    s = unparse(e)
    return f"({s})" if _prec(e) < need else s


def unparse(e: Expr) -> str:
    """Render in the parser's grammar; ``parse(unparse(e))`` is value-equal to ``e``."""
    if isinstance(e, Const):
        return _frac_text(e.value)
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Exp):
        return f"exp({unparse(e.arg)})"
    if isinstance(e, Ln):
        return f"ln({unparse(e.arg)})"
    if isinstance(e, Func):
        return f"{e.name}({unparse(e.arg)})"
    if isinstance(e, Pow):
        q = e.exp
        qs = _frac_text(q) if (q.denominator == 1 and q > 0) else f"({_frac_text(q)})"
        return f"{_wrap(e.base, _PREC_ATOM)}^{qs}"
    if isinstance(e, Mul):
        if not e.factors:
            return "1"
        parts = []
        for k, f in enumerate(e.factors):
            if k == 0 and isinstance(f, Const) and f.value == -1 and len(e.factors) > 1:
                parts.append("-")
                continue
            # a leading negative constant reads as unary minus, which binds tighter than *
            need = _PREC_NEG if k == 0 else _PREC_POW
            text = _wrap(f, need)
            parts.append(text if not parts or parts == ["-"] else "*" + text)
        s = "".join(parts)
        return s
    if isinstance(e, Add):
        if not e.terms:
            return "0"
        out = _wrap(e.terms[0], _PREC_ADD)
        for term in e.terms[1:]:
            neg = _split_negative(term)
            if neg is not None:
                out += " - " + _wrap(neg, _PREC_MUL)
            else:
                out += " + " + _wrap(term, _PREC_MUL)
        return out
    raise TypeError(f"not an expression: {e!r}")


def _split_negative(term: Expr) -> Expr | None:
    if isinstance(term, Const) and term.value < 0:
        return Const(-term.value)
    if isinstance(term, Mul) and term.factors and isinstance(term.factors[0], Const) and term.factors[0].value < 0:
        c = -term.factors[0].value
        rest = term.factors[1:]
        if c == 1:
            return rest[0] if len(rest) == 1 else Mul(rest)
        return Mul((Const(c),) + rest)
    return None


# ---------------------------------------------------------------------------
# structural helpers


def free_symbols(e: Expr) -> set[str]:
    if isinstance(e, Sym):
        return {e.name}
    if isinstance(e, Const):
        return set()
    out: set[str] = set()
    for c in children(e):
        out |= free_symbols(c)
    return out


def functions_in(e: Expr) -> set[str]:
    out = {e.name} if isinstance(e, Func) else set()
    for c in children(e):
        out |= functions_in(c)
    return out


def children(e: Expr) -> tuple:
    if isinstance(e, Add):
        return e.terms
    if isinstance(e, Mul):
        return e.factors
    if isinstance(e, Pow):
        return (e.base,)
    if isinstance(e, (Exp, Ln, Func)):
        return (e.arg,)
    return ()


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Simultaneous replacement of named symbols."""
    if not mapping:
        return e
    mapping = {k: as_expr(v) for k, v in mapping.items()}

    def go(x):
        if isinstance(x, Sym):
            return mapping.get(x.name, x)
        if isinstance(x, Const):
            return x
        if isinstance(x, Add):
            return Add(tuple(go(c) for c in x.terms))
        if isinstance(x, Mul):
            return Mul(tuple(go(c) for c in x.factors))
        if isinstance(x, Pow):
            return Pow(go(x.base), x.exp)
        if isinstance(x, Exp):
            return Exp(go(x.arg))
        if isinstance(x, Ln):
            return Ln(go(x.arg))
        if isinstance(x, Func):
            return Func(x.name, go(x.arg))
        raise TypeError(x)

    return go(e)


def expand_definitions(e: Expr, st: SymbolTable) -> Expr:
    """Replace function symbols that carry an explicit definition by that definition."""

    def go(x):
        if isinstance(x, (Sym, Const)):
            return x
        if isinstance(x, Add):
            return Add(tuple(go(c) for c in x.terms))
        if isinstance(x, Mul):
            return Mul(tuple(go(c) for c in x.factors))
        if isinstance(x, Pow):
            return Pow(go(x.base), x.exp)
        if isinstance(x, Exp):
            return Exp(go(x.arg))
        if isinstance(x, Ln):
            return Ln(go(x.arg))
        if isinstance(x, Func):
            arg = go(x.arg)
            sym = st.functions.get(x.name)
            if sym is not None and sym.definition is not None:
                return substitute(sym.definition, {"u": arg})
            return Func(x.name, arg)
        raise TypeError(x)

    return go(e)


# ---------------------------------------------------------------------------
# differentiation


def diff(e: Expr, v: str | Sym, st: SymbolTable | None = None) -> Expr:
    """Exact partial derivative, simplified."""
    name = v.name if isinstance(v, Sym) else v
    return simplify(_diff(e, name, st or EMPTY_TABLE))


def _diff(e: Expr, v: str, st: SymbolTable) -> Expr:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Sym):
        return ONE if e.name == v else ZERO
    if isinstance(e, Add):
        return Add(tuple(_diff(t, v, st) for t in e.terms))
    if isinstance(e, Mul):
        terms = []
        fs = e.factors
        for i, f in enumerate(fs):
            df = _diff(f, v, st)
            if df == ZERO:
                continue
            terms.append(Mul(fs[:i] + (df,) + fs[i + 1:]))
        return Add(tuple(terms)) if terms else ZERO
    if isinstance(e, Pow):
        db = _diff(e.base, v, st)
        if db == ZERO:
            return ZERO
        return Mul((Const(e.exp), Pow(e.base, e.exp - 1), db))
    if isinstance(e, Exp):
        da = _diff(e.arg, v, st)
        return ZERO if da == ZERO else Mul((e, da))
    if isinstance(e, Ln):
        da = _diff(e.arg, v, st)
        return ZERO if da == ZERO else Mul((da, Pow(e.arg, -1)))
    if isinstance(e, Func):
        sym = st.function(e.name)
        da = _diff(e.arg, v, st)
        if da == ZERO:
            return ZERO
        if sym.derivative is None:
            raise UnregisteredFunctionError(f"no derivative rule registered for {e.name!r}")
        return Mul((substitute(sym.derivative, {"u": e.arg}), da))
    raise TypeError(e)


# ---------------------------------------------------------------------------
# simplification

_MAX_EXPANSION = 4000


@lru_cache(maxsize=200_000)
def _sort_key(e: Expr):
    rank = {Const: 0, Sym: 1, Func: 2, Ln: 3, Exp: 4, Pow: 5, Mul: 6, Add: 7}[type(e)]
    return (rank, unparse(e))


def is_positive(e: Expr) -> bool:
    """Conservative sign test: True only when e > 0 wherever it is defined."""
    if isinstance(e, Const):
        return e.value > 0
    if isinstance(e, Sym):
        return e.name in POSITIVE_VARIABLES
    if isinstance(e, Exp):
        return True
    if isinstance(e, Pow):
        return is_positive(e.base) or (e.exp.numerator % 2 == 0)
    if isinstance(e, (Mul, Add)):
        return all(is_positive(c) for c in children(e))
    return False


def _split_coeff(term: Expr) -> tuple[Fraction, Expr]:
    if isinstance(term, Const):
        return term.value, ONE
    if isinstance(term, Mul) and term.factors and isinstance(term.factors[0], Const):
        rest = term.factors[1:]
        if not rest:
            return term.factors[0].value, ONE
        return term.factors[0].value, rest[0] if len(rest) == 1 else Mul(rest)
    return Fraction(1), term


def _with_coeff(c: Fraction, key: Expr) -> Expr:
    if c == 0:
        return ZERO
    if key == ONE:
        return Const(c)
    if c == 1:
        return key
    if isinstance(key, Mul):
        return Mul((Const(c),) + key.factors)
    return Mul((Const(c), key))


def _add(terms) -> Expr:
    flat = []
    for t in terms:
        if isinstance(t, Add):
            flat.extend(t.terms)
        else:
            flat.append(t)
    coeffs: dict[Expr, Fraction] = {}
    for t in flat:
        c, key = _split_coeff(t)
        if c == 0:
            continue
        coeffs[key] = coeffs.get(key, Fraction(0)) + c
    out = [_with_coeff(c, k) for k, c in coeffs.items() if c != 0]
    if not out:
        return ZERO
    if len(out) == 1:
        return out[0]
    out.sort(key=_sort_key)
    return Add(tuple(out))


def _mul(factors) -> Expr:
    flat = []
    for f in factors:
        if isinstance(f, Mul):
            flat.extend(f.factors)
        else:
            flat.append(f)
    if any(isinstance(f, Const) and f.value == 0 for f in flat):
        return ZERO
    sums = [f for f in flat if isinstance(f, Add)]
    if sums:
        size = 1
        for s in sums:
            size *= len(s.terms)
        if size <= _MAX_EXPANSION:
            rest = [f for f in flat if not isinstance(f, Add)]
            return _add([_mul(rest + list(combo)) for combo in _cartesian(*(s.terms for s in sums))])
    coeff = Fraction(1)
    powers: dict[Expr, Fraction] = {}
    order: list[Expr] = []
    exp_args = []
    for f in flat:
        if isinstance(f, Const):
            coeff *= f.value
            continue
        if isinstance(f, Exp):
            exp_args.append(f.arg)
            continue
        if isinstance(f, Pow):
            base, q = f.base, f.exp
        else:
            base, q = f, Fraction(1)
        if isinstance(base, Const):
            # keep irrational constant powers as factors of their own base
            pass
        if base not in powers:
            powers[base] = Fraction(0)
            order.append(base)
        powers[base] += q
    out = []
    for base in order:
        q = powers[base]
        if q == 0:
            continue
        out.append(base if q == 1 else Pow(base, q))
    if exp_args:
        arg = _add(exp_args)
        if arg != ZERO:
            out.append(Exp(arg))
    if coeff == 0:
        return ZERO
    out.sort(key=_sort_key)
    if not out:
        return Const(coeff)
    if coeff == 1:
        return out[0] if len(out) == 1 else Mul(tuple(out))
    return Mul((Const(coeff),) + tuple(out))


def _exact_root(c: Fraction, q: Fraction) -> Fraction | None:
    """c**q when it is rational (c > 0)."""
    d = q.denominator
    num = _int_root(c.numerator, d)
    den = _int_root(c.denominator, d)
    if num is None or den is None:
        return None
    return Fraction(num, den) ** q.numerator


def _int_root(n: int, d: int) -> int | None:
    if n < 0:
        return None
    r = round(n ** (1.0 / d)) if n < 2**1000 else None
    if r is None:
        return None
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand**d == n:
            return cand
    return None


def _pow(b: Expr, q: Fraction) -> Expr:
    if q == 0:
        return ONE
    if q == 1:
        return b
    if isinstance(b, Const):
        c = b.value
        if c == 1:
            return ONE
        if c == 0:
            return ZERO if q > 0 else Pow(b, q)
        if q.denominator == 1:
            return Const(c ** q.numerator)
        if c > 0:
            r = _exact_root(c, q)
            if r is not None:
                return Const(r)
        return Pow(b, q)
    if isinstance(b, Pow):
        if q.denominator == 1 or is_positive(b.base):
            return _pow(b.base, b.exp * q)
        return Pow(b, q)
    if isinstance(b, Exp):
        return Exp(_mul([Const(q), b.arg]))
    if isinstance(b, Mul):
        if q.denominator == 1:
            return _mul([_pow(f, q) for f in b.factors])
        pos = [f for f in b.factors if is_positive(f)]
        if pos:
            rest = [f for f in b.factors if not is_positive(f)]
            out = [_pow(f, q) for f in pos]
            if rest:
                out.append(Pow(rest[0] if len(rest) == 1 else Mul(tuple(rest)), q))
            return _mul(out)
        return Pow(b, q)
    if isinstance(b, Add):
        if q.denominator == 1 and 1 < q <= 4 and len(b.terms) ** int(q) <= _MAX_EXPANSION:
            return _mul([b] * int(q))
        # pull the leading coefficient out so equal sums share one normal form
        c, _ = _split_coeff(b.terms[0])
        if c != 1 and c != 0 and (c > 0 or q.denominator == 1):
            inner = _add([_with_coeff(_split_coeff(t)[0] / c, _split_coeff(t)[1]) for t in b.terms])
            return _mul([_pow(Const(c), q), Pow(inner, q)])
        return Pow(b, q)
    return Pow(b, q)


def _exp(a: Expr) -> Expr:
    if a == ZERO:
        return ONE
    if isinstance(a, Ln):
        return a.arg
    terms = a.terms if isinstance(a, Add) else (a,)
    pulled = []
    keep = []
    for t in terms:
        c, key = _split_coeff(t)
        if isinstance(key, Ln) and (c.denominator == 1 or is_positive(key.arg)):
            pulled.append(_pow(key.arg, c))
        else:
            keep.append(t)
    if not pulled:
        return Exp(a)
    rest = _add(keep)
    return _mul(pulled + ([Exp(rest)] if rest != ZERO else []))


def _ln(a: Expr) -> Expr:
    if a == ONE:
        return ZERO
    if isinstance(a, Exp):
        return a.arg
    if isinstance(a, Pow) and is_positive(a.base):
        return _mul([Const(a.exp), _ln(a.base)])
    if isinstance(a, Mul) and all(is_positive(f) for f in a.factors):
        return _add([_ln(f) for f in a.factors])
    return Ln(a)


def _simp(e: Expr, memo: dict) -> Expr:
    hit = memo.get(e)
    if hit is not None:
        return hit
    if isinstance(e, (Const, Sym)):
        out = e
    elif isinstance(e, Add):
        out = _add([_simp(t, memo) for t in e.terms])
    elif isinstance(e, Mul):
        out = _mul([_simp(f, memo) for f in e.factors])
    elif isinstance(e, Pow):
        out = _pow(_simp(e.base, memo), e.exp)
    elif isinstance(e, Exp):
        out = _exp(_simp(e.arg, memo))
    elif isinstance(e, Ln):
        out = _ln(_simp(e.arg, memo))
    elif isinstance(e, Func):
        out = Func(e.name, _simp(e.arg, memo))
    else:
        raise TypeError(e)
    memo[e] = out
    return out


def simplify(e: Expr, max_rounds: int = 40) -> Expr:
    """Normal form: flattened, expanded, like terms and like powers collected.

    Applied until it reaches a fixed point, so the result is idempotent.
    """
    memo: dict = {}
    for _ in range(max_rounds):
        nxt = _simp(e, memo)
        if nxt == e:
            return e
        e = nxt
    return e


# ---------------------------------------------------------------------------
# numeric evaluation


def compile_expr(e: Expr, st: SymbolTable | None = None) -> Callable[[Mapping[str, float]], float]:
    """Build a closure ``f(bindings) -> float``; parameters fall back to ``st.params``."""
    st = st or EMPTY_TABLE

    def build(x):
        if isinstance(x, Const):
            val = float(x.value)
            return lambda b: val
        if isinstance(x, Sym):
            name = x.name
            if name in st.params:
                default = float(st.params[name])
                return lambda b: b.get(name, default)

            def sym(b):
                try:
                    return b[name]
                except KeyError:
                    raise EvaluationError(f"unbound variable {name!r}") from None

            return sym
        if isinstance(x, Add):
            parts = [build(c) for c in x.terms]
            return lambda b: math.fsum(p(b) for p in parts)
        if isinstance(x, Mul):
            parts = [build(c) for c in x.factors]

            def mul(b):
                acc = 1.0
                for p in parts:
                    acc *= p(b)
                return acc

            return mul
        if isinstance(x, Pow):
            base = build(x.base)
            q = x.exp
            if q.denominator == 1:
                k = q.numerator

                def ipow(b):
                    v = base(b)
                    if v == 0 and k < 0:
                        raise DomainError("division by zero")
                    try:
                        return v**k
                    except OverflowError:
                        raise DomainError("overflow") from None

                return ipow
            qf = float(q)

            def rpow(b):
                v = base(b)
                if v < 0:
                    raise DomainError(f"non-integer power of negative base {v}")
                if v == 0 and qf < 0:
                    raise DomainError("division by zero")
                try:
                    return v**qf
                except OverflowError:
                    raise DomainError("overflow") from None

            return rpow
        if isinstance(x, Exp):
            arg = build(x.arg)

            def fexp(b):
                try:
                    return math.exp(arg(b))
                except OverflowError:
                    raise DomainError("exp overflow") from None

            return fexp
        if isinstance(x, Ln):
            arg = build(x.arg)

            def fln(b):
                v = arg(b)
                if not v > 0:
                    raise DomainError(f"ln of non-positive value {v}")
                return math.log(v)

            return fln
        if isinstance(x, Func):
            fn = st.function(x.name).evaluate
            arg = build(x.arg)
            name = x.name

            def ffunc(b):
                v = fn(arg(b))
                if v != v:
                    raise DomainError(f"{name} returned NaN")
                return v

            return ffunc
        raise TypeError(x)

    f = build(e)

    def run(bindings):
        try:
            v = f(bindings)
        except ZeroDivisionError:
            raise DomainError("division by zero") from None
        if isinstance(v, complex) or v != v:
            raise DomainError("evaluation left the real domain")
        return float(v)

    return run


def evaluate(e: Expr, bindings: Mapping[str, float] | None = None, st: SymbolTable | None = None) -> float:
    return compile_expr(e, st)(bindings or {})


def magnitude(e: Expr, bindings: Mapping[str, float], st: SymbolTable | None = None) -> float:
    """Size of ``e`` before cancellation: sums of absolute values of the summands."""
    st = st or EMPTY_TABLE
    if isinstance(e, Add):
        return math.fsum(magnitude(t, bindings, st) for t in e.terms)
    if isinstance(e, Mul):
        acc = 1.0
        for f in e.factors:
            acc *= magnitude(f, bindings, st)
        return acc
    if isinstance(e, Pow) and e.exp > 0:
        return magnitude(e.base, bindings, st) ** float(e.exp)
    return abs(evaluate(e, bindings, st))


# ---------------------------------------------------------------------------
# zero recognition


@dataclass(frozen=True)
class ZeroCheck:
    is_zero: bool
    path: str  # "normal-form" or "sampled"
    max_abs: float
    max_relative: float
    residual: Expr

    def __bool__(self):
        return self.is_zero


def check_zero(
    e: Expr,
    st: SymbolTable | None,
    sampler: Callable[[], Mapping[str, float]],
    n_samples: int = 20,
    rtol: float = 1e-10,
) -> ZeroCheck:
    """Decide ``e == 0`` by normal form, falling back to sampling.

    ``sampler()`` returns one binding dict per call. A sample passes when the
    value is below ``rtol`` times the pre-cancellation magnitude.
    """
    st = st or EMPTY_TABLE
    s = simplify(e)
    if s == ZERO:
        return ZeroCheck(True, "normal-form", 0.0, 0.0, s)
    expanded = simplify(expand_definitions(s, st))
    if expanded == ZERO:
        return ZeroCheck(True, "normal-form", 0.0, 0.0, expanded)
    f = compile_expr(expanded, st)
    worst_abs = 0.0
    worst_rel = 0.0
    for _ in range(n_samples):
        b = sampler()
        v = abs(f(b))
        scale = magnitude(expanded, b, st)
        rel = v / scale if scale > 0 else (0.0 if v == 0 else math.inf)
        worst_abs = max(worst_abs, v)
        worst_rel = max(worst_rel, rel)
    return ZeroCheck(worst_rel <= rtol, "sampled", worst_abs, worst_rel, expanded)
