"""Constitutive pair (C(u), K(u)), geometry exponent nu, and the derived maps J, J^-1, F."""

from __future__ import annotations

import math
import shlex
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np
from scipy import integrate, optimize

from . import expr as ex
from .expr import U, Const, DomainError, ExprError, FunctionSymbol, SymbolTable, to_fraction


class ModelError(ValueError):
    pass


class SingularityError(ArithmeticError):
    pass


FAMILIES = ("power", "exp", "linear", "custom")

_FAMILY_KEYS = {
    "power": ("k0", "m", "c0", "n"),
    "exp": ("k0", "lam", "c0", "mu"),
    "linear": ("k0", "a", "b", "c0", "c", "d"),
    "custom": (),
}

_ALIASES = {"exponential": "exp", "powerlaw": "power", "power-law": "power"}


@dataclass(frozen=True)
class ConstantRatio:
    beta: Fraction | float

    @property
    def is_constant(self):
        return True


@dataclass(frozen=True)
class NonConstant:
    ratio: ex.Expr

    @property
    def is_constant(self):
        return False


def _interval_from_linear(a: Fraction, b: Fraction):
    """Open set where a + b*u > 0, as (lo, hi); None when empty."""
    if b > 0:
        return (float(-a / b), math.inf)
    if b < 0:
        return (-math.inf, float(-a / b))
    return (-math.inf, math.inf) if a > 0 else None


def sample_points(lo: float, hi: float, n: int = 50) -> np.ndarray:
    """Interior sample of an open interval; log-spaced toward infinite ends."""
    if math.isfinite(lo) and math.isfinite(hi):
        w = hi - lo
        return lo + w * (np.arange(1, n + 1) / (n + 1))
    offsets = np.logspace(-3, 2, n)
    if math.isfinite(lo):
        return lo + offsets
    if math.isfinite(hi):
        return hi - offsets
    half = n // 2
    return np.concatenate([-offsets[: n - half][::-1], offsets[:half]])


@dataclass(frozen=True)
class CoefficientModel:
    family: str
    params: Mapping[str, Fraction]
    nu: Fraction
    u_domain: tuple
    K_expr: ex.Expr
    C_expr: ex.Expr
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    # -- elementary pieces --------------------------------------------------

    def p(self, key) -> Fraction:
        return self.params[key]

    @property
    def K_prime_expr(self) -> ex.Expr:
        return self._memo("Kp", lambda: ex.diff(self.K_expr, "u"))

    @property
    def C_prime_expr(self) -> ex.Expr:
        return self._memo("Cp", lambda: ex.diff(self.C_expr, "u"))

    def _memo(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def _scalar(self, name, e):
        f = self._memo("f_" + name, lambda: ex.compile_expr(e))
        return lambda x: f({"u": float(x)})

    def K(self, u):
        return self._scalar("K", self.K_expr)(u)

    def C(self, u):
        return self._scalar("C", self.C_expr)(u)

    def K_prime(self, u):
        return self._scalar("Kp", self.K_prime_expr)(u)

    def C_prime(self, u):
        return self._scalar("Cp", self.C_prime_expr)(u)

    def K_array(self, u):
        return _family_array(self, "K", np.asarray(u, dtype=float))

    def C_array(self, u):
        return _family_array(self, "C", np.asarray(u, dtype=float))

    def K_prime_array(self, u):
        return _family_array(self, "Kp", np.asarray(u, dtype=float))

    def in_domain(self, u) -> bool:
        lo, hi = self.u_domain
        return lo < u < hi

    # -- classification -----------------------------------------------------

    def ratio_class(self):
        return self._memo("ratio", lambda: _ratio_class(self))

    @property
    def is_constant_ratio(self) -> bool:
        return self.ratio_class().is_constant

    @property
    def beta(self):
        rc = self.ratio_class()
        if not rc.is_constant:
            raise ModelError("ratio C/K is not constant")
        return rc.beta

    # -- J, J^-1, F, E ------------------------------------------------------

    def J_expr(self) -> ex.Expr | None:
        """Closed-form antiderivative of K, or None for custom models."""
        return self._memo("J_expr", lambda: _J_expr(self))

    @property
    def u_ref(self) -> float:
        lo, hi = self.u_domain
        if math.isfinite(lo) and math.isfinite(hi):
            return 0.5 * (lo + hi)
        if math.isfinite(lo):
            return lo + 1.0
        if math.isfinite(hi):
            return hi - 1.0
        return 0.0

    def J(self, u) -> float:
        u = float(u)
        if not self.in_domain(u):
            raise DomainError(f"u={u} outside u_domain {self.u_domain}")
        je = self.J_expr()
        if je is not None:
            return self._scalar("J", je)(u)
        val, _ = integrate.quad(self.K, self.u_ref, u, epsabs=1e-13, epsrel=1e-13, limit=200)
        return val

    def J_range(self) -> tuple:
        """Open interval J(u_domain); J is strictly increasing because K > 0."""
        return self._memo("J_range", lambda: _J_range(self))

    def J_inverse(self, v) -> float:
        v = float(v)
        lo, hi = self.J_range()
        if not (lo < v < hi):
            raise DomainError(f"v={v} outside the range of J ({lo}, {hi})")
        u = _J_inverse_closed(self, v)
        if u is None:
            u = self._J_inverse_root(v)
        if not self.in_domain(u):
            raise DomainError(f"J^-1({v}) = {u} outside u_domain")
        return u

    def _J_inverse_root(self, v):
        a, b = self.u_domain
        ur = self.u_ref
        step = 1.0
        left, right = ur, ur
        # expand a bracket toward the domain ends
        for _ in range(200):
            if self.J(left) <= v:
                break
            nxt = left - step
            left = 0.5 * (left + a) if (math.isfinite(a) and nxt <= a) else nxt
            step *= 2
        for _ in range(200):
            if self.J(right) >= v:
                break
            nxt = right + step
            right = 0.5 * (right + b) if (math.isfinite(b) and nxt >= b) else nxt
            step *= 2
        return optimize.brentq(lambda x: self.J(x) - v, left, right, xtol=1e-15, rtol=1e-15, maxiter=500)

    def F_expr(self) -> ex.Expr:
        if self.is_constant_ratio:
            raise SingularityError("F is undefined for a constant ratio C/K")
        return self._memo("F_expr", lambda: _F_expr(self))

    def F(self, u) -> float:
        if self.is_constant_ratio:
            raise SingularityError("F is undefined for a constant ratio C/K")
        u = float(u)
        den = self.C_prime(u) / self.C(u) - self.K_prime(u) / self.K(u)
        scale = abs(self.C_prime(u) / self.C(u)) + abs(self.K_prime(u) / self.K(u))
        if den == 0 or abs(den) <= 1e-14 * scale:
            raise SingularityError(f"C'/C = K'/K at u={u}")
        return 1.0 / den

    def E_expr(self) -> ex.Expr | None:
        """Closed-form antiderivative of C (conserved density), None for custom."""
        return self._memo("E_expr", lambda: _E_expr(self))

    def E(self, u) -> float:
        ee = self.E_expr()
        if ee is not None:
            return self._scalar("E", ee)(u)
        val, _ = integrate.quad(self.C, self.u_ref, float(u), epsabs=1e-13, epsrel=1e-13, limit=200)
        return val

    def E_array(self, u):
        return _family_array(self, "E", np.asarray(u, dtype=float))

    # -- symbolic environment ----------------------------------------------

    def symbol_table(self) -> SymbolTable:
        """K, C, J, Jinv and (non-constant ratio only) F, with derivative rules."""
        return self._memo("st", lambda: _symbol_table(self))

    def describe(self) -> dict:
        return {
            "family": self.family,
            "params": {k: _num_out(v) for k, v in self.params.items()},
            "nu": _num_out(self.nu),
            "u_domain": list(self.u_domain),
            "K": ex.unparse(self.K_expr),
            "C": ex.unparse(self.C_expr),
        }


def _num_out(q):
    if isinstance(q, Fraction):
        return int(q) if q.denominator == 1 else float(q)
    return q


# ---------------------------------------------------------------------------
# construction


def build_model(family: str, nu, u_domain=None, **params) -> CoefficientModel:
    """Build and validate a model.

    Named families take exact parameters (k0, m, c0, n | k0, lam, c0, mu |
    k0, a, b, c0, c, d). ``custom`` takes ``K`` and ``C`` as expression text or
    Expr in ``u`` plus an explicit ``u_domain``.
    """
    family = _ALIASES.get(family, family)
    if family not in FAMILIES:
        raise ModelError(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")
    try:
        nu = to_fraction(nu)
    except (TypeError, ValueError) as err:
        raise ModelError(f"bad nu: {err}") from None
    if nu <= 0:
        raise ModelError("nu must be > 0")

    if family == "custom":
        K_in, C_in = params.pop("K", None), params.pop("C", None)
        if K_in is None or C_in is None:
            raise ModelError("custom family needs K and C")
        if u_domain is None:
            raise ModelError("custom family needs an explicit u_domain")
        extra = {k: to_fraction(v) for k, v in params.items()}
        K_expr = _custom_expr(K_in, extra)
        C_expr = _custom_expr(C_in, extra)
        lo, hi = (float(x) for x in u_domain)
        if not lo < hi:
            raise ModelError("empty u_domain")
        model = CoefficientModel("custom", extra, nu, (lo, hi), K_expr, C_expr)
        _check_positive(model)
        return model

    keys = _FAMILY_KEYS[family]
    missing = [k for k in keys if k not in params]
    if missing:
        raise ModelError(f"family {family} missing parameters: {', '.join(missing)}")
    unknown = [k for k in params if k not in keys]
    if unknown:
        raise ModelError(f"family {family} does not take: {', '.join(unknown)}")
    p = {k: to_fraction(params[k]) for k in keys}
    if p["k0"] <= 0 or p["c0"] <= 0:
        raise ModelError("k0 and c0 must be > 0")

    k0, c0 = Const(p["k0"]), Const(p["c0"])
    if family == "power":
        K_expr = ex.simplify(k0 * ex.Pow(U, p["m"]))
        C_expr = ex.simplify(c0 * ex.Pow(U, p["n"]))
        dom = (0.0, math.inf)
    elif family == "exp":
        K_expr = ex.simplify(k0 * ex.exp(Const(p["lam"]) * U))
        C_expr = ex.simplify(c0 * ex.exp(Const(p["mu"]) * U))
        dom = (-math.inf, math.inf)
    else:
        K_expr = ex.simplify(k0 * (Const(p["a"]) + Const(p["b"]) * U))
        C_expr = ex.simplify(c0 * (Const(p["c"]) + Const(p["d"]) * U))
        i1 = _interval_from_linear(p["a"], p["b"])
        i2 = _interval_from_linear(p["c"], p["d"])
        if i1 is None or i2 is None:
            raise ModelError("empty u_domain: K or C is never positive")
        dom = (max(i1[0], i2[0]), min(i1[1], i2[1]))
        if not dom[0] < dom[1]:
            raise ModelError("empty u_domain: a+bu>0 and c+du>0 do not overlap")
    if u_domain is not None:
        lo, hi = (float(x) for x in u_domain)
        dom = (max(lo, dom[0]), min(hi, dom[1]))
        if not dom[0] < dom[1]:
            raise ModelError("empty u_domain")
    model = CoefficientModel(family, p, nu, dom, K_expr, C_expr)
    _check_positive(model)
    return model


def _custom_expr(x, params) -> ex.Expr:
    if isinstance(x, ex.Expr):
        e = x
    else:
        e = ex.parse(str(x), params=params.keys())
    bad = ex.free_symbols(e) - {"u"} - set(params)
    if bad:
        raise ModelError(f"custom coefficient may depend on u only, found {sorted(bad)}")
    if ex.functions_in(e):
        raise ModelError("custom coefficients cannot use function symbols")
    e = ex.substitute(e, {k: Const(v) for k, v in params.items()})
    return ex.simplify(e)


def _check_positive(model: CoefficientModel):
    for u in sample_points(*model.u_domain):
        try:
            k, c = model.K(u), model.C(u)
        except DomainError as err:
            raise ModelError(f"coefficients undefined at u={u}: {err}") from None
        if not (k > 0 and c > 0):
            raise ModelError(f"K and C must be positive on u_domain; K({u})={k}, C({u})={c}")


# ---------------------------------------------------------------------------
# family formulas


def _ratio_class(m: CoefficientModel):
    p = m.params
    if m.family == "power" and p["n"] == p["m"]:
        return ConstantRatio(p["c0"] / p["k0"])
    if m.family == "exp" and p["mu"] == p["lam"]:
        return ConstantRatio(p["c0"] / p["k0"])
    if m.family == "linear":
        a, b, c, d = p["a"], p["b"], p["c"], p["d"]
        if a * d == b * c:
            ratio = c / a if a != 0 else d / b
            return ConstantRatio(p["c0"] * ratio / p["k0"])
    ratio = ex.simplify(m.C_expr / m.K_expr)
    if m.family != "custom":
        return NonConstant(ratio)
    if isinstance(ratio, Const):
        return ConstantRatio(ratio.value)
    vals = np.array([m.C(u) / m.K(u) for u in sample_points(*m.u_domain)])
    ref = vals[len(vals) // 2]
    if np.all(np.abs(vals - ref) <= 1e-12 * abs(ref)):
        return ConstantRatio(float(ref))
    return NonConstant(ratio)


def _J_expr(m: CoefficientModel):
    p = m.params
    if m.family == "power":
        if p["m"] == -1:
            return ex.simplify(Const(p["k0"]) * ex.ln(U))
        return ex.simplify(Const(p["k0"] / (p["m"] + 1)) * ex.Pow(U, p["m"] + 1))
    if m.family == "exp":
        if p["lam"] == 0:
            return ex.simplify(Const(p["k0"]) * U)
        return ex.simplify(Const(p["k0"] / p["lam"]) * ex.exp(Const(p["lam"]) * U))
    if m.family == "linear":
        return ex.simplify(Const(p["k0"]) * (Const(p["a"]) * U + Const(p["b"] / 2) * ex.Pow(U, 2)))
    return None


def _E_expr(m: CoefficientModel):
    p = m.params
    if m.family == "power":
        if p["n"] == -1:
            return ex.simplify(Const(p["c0"]) * ex.ln(U))
        return ex.simplify(Const(p["c0"] / (p["n"] + 1)) * ex.Pow(U, p["n"] + 1))
    if m.family == "exp":
        if p["mu"] == 0:
            return ex.simplify(Const(p["c0"]) * U)
        return ex.simplify(Const(p["c0"] / p["mu"]) * ex.exp(Const(p["mu"]) * U))
    if m.family == "linear":
        return ex.simplify(Const(p["c0"]) * (Const(p["c"]) * U + Const(p["d"] / 2) * ex.Pow(U, 2)))
    return None


def _J_range(m: CoefficientModel):
    lo, hi = m.u_domain
    p = m.params

    def limit(u_end, inward):
        if math.isfinite(u_end):
            # J is continuous up to a finite endpoint for every family here
            try:
                return _J_at(m, u_end)
            except (DomainError, ValueError, ZeroDivisionError, OverflowError):
                return -math.inf if inward > 0 else math.inf
        return None

    if m.family == "power":
        if p["m"] == -1:
            return (-math.inf, math.inf)
        if p["m"] + 1 > 0:
            return (0.0, math.inf)
        return (-math.inf, 0.0)
    if m.family == "exp":
        lam = p["lam"]
        if lam == 0:
            return (-math.inf, math.inf)
        return (0.0, math.inf) if lam > 0 else (-math.inf, 0.0)
    if m.family == "linear":
        jl = limit(lo, +1)
        jh = limit(hi, -1)
        if jl is None:
            jl = -math.inf if p["b"] <= 0 else None
        if jh is None:
            jh = math.inf if p["b"] >= 0 else None
        # b != 0 with an infinite end: J ~ b u^2/2 which is unbounded only on the side b permits
        if jl is None or jh is None:
            raise ModelError("inconsistent linear model domain")
        return (jl, jh)
    # custom: numeric limits toward the ends
    jl = _J_limit(m, lo, -1)
    jh = _J_limit(m, hi, +1)
    return (jl, jh)


def _J_at(m, u):
    je = m.J_expr()
    return ex.evaluate(je, {"u": u})


def _J_limit(m, end, direction):
    if math.isfinite(end):
        try:
            val, _ = integrate.quad(m.K, m.u_ref, end, limit=200)
            return val
        except Exception:
            return direction * math.inf
    return direction * math.inf


def _J_inverse_closed(m: CoefficientModel, v: float):
    if m.family == "custom":
        return None
    p = m.params
    k0 = float(p["k0"])
    if m.family == "power":
        mm = p["m"]
        if mm == -1:
            return math.exp(v / k0)
        base = float(mm + 1) * v / k0
        return base ** (1.0 / float(mm + 1))
    if m.family == "exp":
        lam = float(p["lam"])
        if lam == 0:
            return v / k0
        return math.log(lam * v / k0) / lam
    if m.family == "linear":
        a, b = float(p["a"]), float(p["b"])
        if b == 0:
            return v / (k0 * a)
        disc = a * a + 2.0 * b * v / k0
        if disc < 0:
            raise DomainError(f"v={v} outside the range of J")
        root = math.sqrt(disc)
        # (-a + root)/b written to avoid cancellation
        return (2.0 * v / k0) / (a + root) if a > 0 else (root - a) / b
    return None


def _F_expr(m: CoefficientModel):
    p = m.params
    if m.family == "power":
        return ex.simplify(U / Const(p["n"] - p["m"]))
    if m.family == "exp":
        return Const(1 / (p["mu"] - p["lam"]))
    if m.family == "linear":
        a, b, c, d = p["a"], p["b"], p["c"], p["d"]
        return ex.simplify((Const(c) + Const(d) * U) * (Const(a) + Const(b) * U) / Const(a * d - b * c))
    den = ex.simplify(m.C_prime_expr / m.C_expr - m.K_prime_expr / m.K_expr)
    if den == ex.ZERO:
        raise SingularityError("C'/C = K'/K identically")
    return ex.simplify(ex.Pow(den, -1))


def _symbol_table(m: CoefficientModel) -> SymbolTable:
    Kf = ex.Func("K", U)
    syms = [
        FunctionSymbol("K", m.K, m.K_prime_expr, m.K_expr),
        FunctionSymbol("C", m.C, m.C_prime_expr, m.C_expr),
        FunctionSymbol("J", m.J, Kf, m.J_expr()),
        FunctionSymbol("Jinv", m.J_inverse, ex.Pow(ex.Func("K", ex.Func("Jinv", U)), -1), None),
    ]
    if not m.is_constant_ratio:
        fe = m.F_expr()
        syms.append(FunctionSymbol("F", m.F, ex.diff(fe, "u"), fe))
    return SymbolTable(syms)


def _family_array(m: CoefficientModel, what: str, u: np.ndarray) -> np.ndarray:
    p = {k: float(v) for k, v in m.params.items()}
    with np.errstate(all="raise"):
        try:
            if m.family == "power":
                k0, mm, c0, n = p["k0"], p["m"], p["c0"], p["n"]
                if what == "K":
                    return k0 * u**mm
                if what == "Kp":
                    return k0 * mm * u ** (mm - 1)
                if what == "C":
                    return c0 * u**n
                if what == "E":
                    return c0 * np.log(u) if n == -1 else c0 / (n + 1) * u ** (n + 1)
            elif m.family == "exp":
                k0, lam, c0, mu = p["k0"], p["lam"], p["c0"], p["mu"]
                if what == "K":
                    return k0 * np.exp(lam * u)
                if what == "Kp":
                    return k0 * lam * np.exp(lam * u)
                if what == "C":
                    return c0 * np.exp(mu * u)
                if what == "E":
                    return c0 * u if mu == 0 else c0 / mu * np.exp(mu * u)
            elif m.family == "linear":
                k0, a, b, c0, c, d = (p[k] for k in ("k0", "a", "b", "c0", "c", "d"))
                if what == "K":
                    return k0 * (a + b * u)
                if what == "Kp":
                    return np.full_like(u, k0 * b)
                if what == "C":
                    return c0 * (c + d * u)
                if what == "E":
                    return c0 * (c * u + 0.5 * d * u * u)
        except FloatingPointError as err:
            raise DomainError(str(err)) from None
    fn = {"K": m.K, "Kp": m.K_prime, "C": m.C, "E": m.E}[what]
    return np.array([fn(x) for x in u.ravel()]).reshape(u.shape)


# ---------------------------------------------------------------------------
# model files


def parse_model_file(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment; values may be quoted."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ModelError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        try:
            parts = shlex.split(value, comments=True)
        except ValueError as err:
            raise ModelError(f"line {lineno}: {err}") from None
        if len(parts) != 1:
            raise ModelError(f"line {lineno}: expected a single value for {key!r}")
        if key in out:
            raise ModelError(f"line {lineno}: duplicate key {key!r}")
        out[key] = parts[0]
    return out


def model_from_mapping(cfg: Mapping[str, str]) -> CoefficientModel:
    cfg = dict(cfg)
    if "family" not in cfg:
        raise ModelError("model file needs 'family'")
    if "nu" not in cfg:
        raise ModelError("model file needs 'nu'")
    family = cfg.pop("family")
    nu = cfg.pop("nu")
    dom = None
    if "u_min" in cfg or "u_max" in cfg:
        dom = (float(cfg.pop("u_min", "-inf")), float(cfg.pop("u_max", "inf")))
    try:
        if family == "custom":
            return build_model(family, nu, u_domain=dom, **cfg)
        return build_model(family, nu, u_domain=dom, **{k: to_fraction(v) for k, v in cfg.items()})
    except (ValueError, ZeroDivisionError, ExprError) as err:
        if isinstance(err, ModelError):
            raise
        raise ModelError(str(err)) from None


def load_model_file(path) -> CoefficientModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_mapping(parse_model_file(fh.read()))


def with_nu(model: CoefficientModel, nu) -> CoefficientModel:
    """Same coefficients, different geometry exponent."""
    nu = to_fraction(nu)
    if nu <= 0:
        raise ModelError("nu must be > 0")
    return CoefficientModel(model.family, model.params, nu, model.u_domain, model.K_expr, model.C_expr)
