"""Point-symmetry generators of C(u)u_t = z^-nu (K(u) z^nu u_z)_z.

A generator is Y = xi d_z + tau d_t + eta d_u with components held as Exprs in
(z, t, u); the coefficient functions appear as registered symbols K(u), J(u).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import expr as ex
from .expr import Const, Func, U, Z, T, ZERO, ONE
from .model import CoefficientModel, ModelError, SingularityError, sample_points

NONCONSTANT_GENERIC = "NonConstantGeneric"
NONCONSTANT_EXTENDED = "NonConstantExtended"
CONSTANT_GENERIC = "ConstantGeneric"
CONSTANT_SPHERICAL = "ConstantSpherical"

KF = Func("K", U)
JF = Func("J", U)
CF = Func("C", U)
W = JF / KF  # recurring J(u)/K(u)


class CompatibilityError(ValueError):
    pass


class BracketClosureError(ValueError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class Generator:
    label: str
    xi: ex.Expr
    tau: ex.Expr
    eta: ex.Expr
    case_tag: str = ""
    params: dict = field(default_factory=dict, compare=False)

    def components(self):
        return (self.xi, self.tau, self.eta)

    def apply(self, f: ex.Expr, st) -> ex.Expr:
        """Y(f) = xi f_z + tau f_t + eta f_u."""
        return ex.simplify(
            self.xi * ex.diff(f, "z", st) + self.tau * ex.diff(f, "t", st) + self.eta * ex.diff(f, "u", st)
        )

    def scaled(self, c, label=None) -> "Generator":
        c = ex.as_expr(c)
        return Generator(
            label or f"{ex.unparse(c)}*{self.label}",
            ex.simplify(c * self.xi),
            ex.simplify(c * self.tau),
            ex.simplify(c * self.eta),
            self.case_tag,
            dict(self.params),
        )

    def is_zero(self) -> bool:
        return all(ex.simplify(c) == ZERO for c in self.components())

    def render(self) -> dict:
        return {
            "label": self.label,
            "xi": ex.unparse(self.xi),
            "tau": ex.unparse(self.tau),
            "eta_inf": ex.unparse(self.eta),
            "case_tag": self.case_tag,
            "params": {k: _num(v) for k, v in self.params.items()},
        }


def _num(v):
    if isinstance(v, Fraction):
        return int(v) if v.denominator == 1 else str(v)
    return v


def _gen(label, xi, tau, eta, tag, **params):
    return Generator(label, ex.simplify(ex.as_expr(xi)), ex.simplify(ex.as_expr(tau)), ex.simplify(ex.as_expr(eta)), tag, params)


# ---------------------------------------------------------------------------
# compatibility constants


def y4_exponent(nu) -> Fraction:
    """Slope A that F*K = A*J + B must have for the z^(2-nu) generator (nu != 1, 2)."""
    nu = Fraction(nu)
    return (nu - 1) / (2 * (2 - nu))


def y3_constants(model: CoefficientModel):
    """(A, B) with F*K = A*J + B, or None when F*K is not affine in J.

    Exact for the named families; custom models go through the sampled route.
    """
    if model.is_constant_ratio:
        return None
    p = model.params
    if model.family == "power":
        m, n, k0 = p["m"], p["n"], p["k0"]
        if m == -1:
            return (Fraction(0), k0 / (n + 1))
        return ((m + 1) / (n - m), Fraction(0))
    if model.family == "exp":
        lam, mu, k0 = p["lam"], p["mu"], p["k0"]
        if lam == 0:
            return (Fraction(0), k0 / mu)
        return (lam / (mu - lam), Fraction(0))
    if model.family == "linear":
        k0, a, b, c, d = p["k0"], p["a"], p["b"], p["c"], p["d"]
        if d == 0:
            return (Fraction(-2), -k0 * a * a / b)
        if b == 0:
            return (Fraction(1), k0 * a * c / d)
        return None
    return y3_constants_sampled(model)


def y3_constants_sampled(model: CoefficientModel, n: int = 40, rtol: float = 1e-9):
    """Numeric route: A = (F K)'/K must be constant, then B = F K - A J."""
    st = model.symbol_table()
    fk = ex.simplify(ex.expand_definitions(Func("F", U) * KF, st))
    dfk = ex.diff(fk, "u", st)
    fA = ex.compile_expr(ex.simplify(dfk / model.K_expr), st)
    fFK = ex.compile_expr(fk, st)
    us = sample_points(*model.u_domain, n=n)
    try:
        As = np.array([fA({"u": x}) for x in us])
    except (ex.DomainError, SingularityError):
        return None
    A = float(np.median(As))
    if np.max(np.abs(As - A)) > rtol * max(1.0, abs(A)):
        return None
    Bs = np.array([fFK({"u": x}) - A * model.J(x) for x in us])
    B = float(np.median(Bs))
    if np.max(np.abs(Bs - B)) > rtol * max(1.0, np.max(np.abs(Bs)), abs(B)):
        return None
    return (_rationalize(A), _rationalize(B))


def _rationalize(x: float, max_den: int = 10_000, tol: float = 1e-11):
    q = Fraction(x).limit_denominator(max_den)
    return q if abs(float(q) - x) <= tol * max(1.0, abs(x)) else x


def compatibility_C_from_K(model: CoefficientModel, A=None, B=None, D="D", *, M=None, N="N", nu=None, form="y3"):
    """C(u) making the extra generator admissible for the given K.

    form="y3": C = D K (A J + B)^(1/A) for A != 0 and C = D K exp(J/B) for A = 0.
    form="y4": the z^(2-nu) generator needs F K = A4 J + M with A4 = y4_exponent(nu),
    giving C = N K (A4 J + M)^(1/A4).
    form="y4-printed": C = N K / (2(2-nu)M - J)^(2/(2-nu)) as commonly quoted.
    D and N may be numbers or symbol names; the result contains J(u), K(u).
    """
    Dx = ex.Sym(D) if isinstance(D, str) else ex.as_expr(D)
    Nx = ex.Sym(N) if isinstance(N, str) else ex.as_expr(N)
    if form == "y3":
        A, B = Fraction(A), Fraction(B)
        if A != 0:
            return ex.simplify(Dx * KF * ex.Pow(Const(A) * JF + Const(B), 1 / A))
        if B == 0:
            raise CompatibilityError("A = 0 needs B != 0")
        return ex.simplify(Dx * KF * ex.exp(JF / Const(B)))
    nu = Fraction(nu if nu is not None else model.nu)
    if nu == 2:
        raise CompatibilityError("the z^(2-nu) generator has no compatibility relation at nu = 2")
    M = Fraction(M)
    if form == "y4":
        if nu == 1:
            return ex.simplify(Nx * KF * ex.exp(JF / Const(M)))
        A4 = y4_exponent(nu)
        return ex.simplify(Nx * KF * ex.Pow(Const(A4) * JF + Const(M), 1 / A4))
    if form == "y4-printed":
        return ex.simplify(Nx * KF * ex.Pow(Const(2 * (2 - nu) * M) - JF, Fraction(-2) / (2 - nu)))
    raise ValueError(f"unknown form {form!r}")


def link_constant_D(model: CoefficientModel, A, B, n: int = 50, rtol: float = 1e-10) -> float:
    """The constant D with C = D K (A J + B)^(1/A) (or D K exp(J/B) when A = 0)."""
    A, B = float(A), float(B)
    vals = []
    for x in sample_points(*model.u_domain, n=n):
        base = A * model.J(x) + B
        if A != 0:
            if base <= 0:
                raise CompatibilityError(f"A J + B = {base} <= 0 at u={x}; no real D")
            denom = base ** (1.0 / A)
        else:
            denom = math.exp(model.J(x) / B)
        vals.append(model.C(x) / (model.K(x) * denom))
    vals = np.array(vals)
    D = float(np.median(vals))
    if np.max(np.abs(vals - D)) > rtol * abs(D) * 10:
        raise CompatibilityError("C/(K (A J + B)^(1/A)) is not constant for this model")
    return D


def link_constant_D_exact(model: CoefficientModel):
    """Closed-form D for the families with a scaling generator (None when there is none)."""
    ab = y3_constants(model)
    if ab is None:
        return None
    A, B = ab
    p = model.params
    if model.family == "power":
        k0, c0, m, n = (float(p[k]) for k in ("k0", "c0", "m", "n"))
        if A == 0:
            return c0 / k0
        if n <= m:
            raise CompatibilityError("n < m gives a negative base; no real D")
        return (c0 / k0) / (k0 / (n - m)) ** ((n - m) / (m + 1))
    if model.family == "exp":
        k0, c0, lam, mu = (float(p[k]) for k in ("k0", "c0", "lam", "mu"))
        if A == 0:
            return c0 / k0
        if mu <= lam:
            raise CompatibilityError("mu < lam gives a negative base; no real D")
        return (c0 / k0) * ((mu - lam) / k0) ** ((mu - lam) / lam)
    return link_constant_D(model, A, B)


# ---------------------------------------------------------------------------
# classification


@dataclass
class Classification:
    ratio: object
    case_tag: str
    generators: list
    constants: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def labels(self):
        return [g.label for g in self.generators]

    def render(self) -> dict:
        rc = self.ratio
        ratio = (
            {"kind": "ConstantRatio", "beta": _num(rc.beta)}
            if rc.is_constant
            else {"kind": "NonConstant", "ratio": ex.unparse(rc.ratio)}
        )
        return {
            "ratio_class": ratio,
            "case_tag": self.case_tag,
            "generators": [g.render() for g in self.generators],
            "constants": {k: _num(v) for k, v in self.constants.items()},
            "notes": list(self.notes),
        }


def y1_basic(tag=NONCONSTANT_GENERIC):
    return _gen("Y1", Z / 2, T, ZERO, tag)


def y2_basic(tag=NONCONSTANT_GENERIC):
    return _gen("Y2", ZERO, ONE, ZERO, tag)


def y3_generator(A, B, tag=NONCONSTANT_EXTENDED):
    A, B = Fraction(A), Fraction(B)
    return _gen("Y3", Z, ZERO, -2 * (Const(A) * JF + Const(B)) / KF, tag, A=A, B=B)


def y4_generator(nu, A, B, tag=NONCONSTANT_EXTENDED):
    """z^(2-nu) generator admitted when F K = A J + B with the matching A."""
    nu = Fraction(nu)
    if nu == 1:
        if Fraction(A) != 0:
            raise CompatibilityError("at nu = 1 the extra generator needs A = 0")
        return _gen("Y4", Z * ex.ln(Z) - Z, ZERO, -2 * Const(Fraction(B)) * ex.ln(Z) / KF, tag, A=Fraction(0), M=Fraction(B))
    if nu == 2:
        raise CompatibilityError("no z^(2-nu) generator at nu = 2")
    A, B = Fraction(A), Fraction(B)
    if A != y4_exponent(nu):
        raise CompatibilityError(f"A = {A} but the z^(2-nu) generator needs A = {y4_exponent(nu)}")
    return _gen(
        "Y4",
        ex.Pow(Z, 2 - nu),
        ZERO,
        -2 * (2 - nu) * (Const(A) * JF + Const(B)) / KF * ex.Pow(Z, 1 - nu),
        tag,
        A=A,
        M=B,
    )


def printed_y4(nu, M) -> Generator:
    """The z^(2-nu) operator in its commonly quoted form (not always admitted)."""
    nu, M = Fraction(nu), Fraction(M)
    if nu == 1:
        return _gen("Y4p", Z * ex.ln(Z) - Z, ZERO, -ex.ln(Z) * (Const(2 * M) - JF) / KF, NONCONSTANT_EXTENDED, M=M)
    if nu == 2:
        return _gen("Y4p", -ex.ln(Z), ZERO, ZERO, NONCONSTANT_EXTENDED)
    return _gen(
        "Y4p",
        ex.Pow(Z, 2 - nu),
        ZERO,
        -(Const(2 * (2 - nu) * M) - JF) / KF * ex.Pow(Z, 1 - nu),
        NONCONSTANT_EXTENDED,
        M=M,
    )


def nonconstant_table_basis(nu, M=Fraction(1)):
    """Y1..Y4 in the generic printed shape with one shared F K = M - J/(2(2-nu)).

    At nu = 1 the last two coincide; bracket extraction then uses the minimum-norm
    decomposition.
    """
    nu = Fraction(nu)
    A = Fraction(-1) / (2 * (2 - nu))
    y4 = _gen(
        "Y4",
        ex.Pow(Z, 2 - nu),
        ZERO,
        -(Const(2 * (2 - nu) * M) - JF) / KF * ex.Pow(Z, 1 - nu),
        NONCONSTANT_EXTENDED,
        M=Fraction(M),
    )
    return [y1_basic(), y2_basic(), y3_generator(A, M), y4]


def constant_generators(nu, beta):
    nu, beta = Fraction(nu), Fraction(beta)
    b = Const(beta)
    if nu != 2:
        tag = CONSTANT_GENERIC
        return [
            _gen("Yt1", T * Z, T * T, -(b / 4 * Z * Z + Const((1 + nu) / 2) * T) * W, tag, beta=beta),
            _gen("Yt2", Z / 2, T, ZERO, tag),
            _gen("Yt3", ZERO, ONE, ZERO, tag),
            _gen("Yt4", ZERO, ZERO, -W, tag),
        ]
    tag = CONSTANT_SPHERICAL
    return [
        _gen("Yh1", T * Z, T * T, -(b / 4 * Z * Z + Const(Fraction(3, 2)) * T) * W, tag, beta=beta),
        _gen("Yh2", Z / 2, T, ZERO, tag),
        _gen("Yh3", ZERO, ONE, ZERO, tag),
        _gen("Yh4", T, ZERO, -(b / 2 * Z + T / Z) * W, tag, beta=beta),
        _gen("Yh5", ONE, ZERO, -W / Z, tag),
        _gen("Yh6", ZERO, ZERO, -W, tag),
    ]


def classify(model: CoefficientModel) -> Classification:
    rc = model.ratio_class()
    nu = Fraction(model.nu)
    if rc.is_constant:
        gens = constant_generators(nu, _as_fraction(rc.beta))
        tag = CONSTANT_SPHERICAL if nu == 2 else CONSTANT_GENERIC
        return Classification(rc, tag, gens, {"beta": rc.beta})

    gens = [y1_basic(), y2_basic()]
    constants = {}
    notes = []
    ab = y3_constants(model)
    if ab is None:
        return Classification(rc, NONCONSTANT_GENERIC, gens, constants, notes)
    A, B = ab
    gens = [y1_basic(NONCONSTANT_EXTENDED), y2_basic(NONCONSTANT_EXTENDED), y3_generator(A, B)]
    constants.update(A=A, B=B)
    try:
        constants["D"] = link_constant_D_exact(model)
    except CompatibilityError as err:
        notes.append(f"no real D linking the scaling generator to C: {err}")
    if nu == 2:
        notes.append("nu = 2: the z^(2-nu) generator does not exist (the ln z term cannot cancel)")
    elif nu == 1:
        if A == 0:
            gens.append(y4_generator(nu, A, B))
            constants["M"] = B
    elif A == y4_exponent(nu):
        gens.append(y4_generator(nu, A, B))
        constants["M"] = B
    return Classification(rc, NONCONSTANT_EXTENDED, gens, constants, notes)


def _as_fraction(x):
    if isinstance(x, Fraction):
        return x
    return ex.to_fraction(x)


# ---------------------------------------------------------------------------
# determining equations


@dataclass
class EquationResult:
    name: str
    residual: ex.Expr
    path: str
    max_abs: float
    max_relative: float
    passed: bool

    def render(self):
        return {
            "equation": self.name,
            "residual": ex.unparse(self.residual),
            "path": self.path,
            "max_abs": self.max_abs,
            "max_relative": self.max_relative,
            "pass": self.passed,
        }


@dataclass
class DeterminingReport:
    generator: str
    branch: str
    equations: list

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.equations)

    @property
    def failing(self) -> list:
        return [e.name for e in self.equations if not e.passed]

    def render(self):
        return {
            "generator": self.generator,
            "branch": self.branch,
            "pass": self.passed,
            "failing": self.failing,
            "equations": [e.render() for e in self.equations],
        }


# Names for the split invariance condition. "free" collects terms without
# derivatives of u, the others are coefficients of u_z, u_z^2 and u_zz.
EQUATION_NAMES = ("xi_u", "tau_z", "tau_u", "free", "uz", "uz2", "uzz")


def determining_equations(model: CoefficientModel, g: Generator, variant: str = "corrected") -> dict:
    """Residual expressions of the determining system for ``g``.

    Non-constant ratio: the general system in C and K. Constant ratio: the same
    system divided by K with C = beta K. ``variant="printed"`` swaps the u_z
    coefficient of the constant branch for the commonly printed form whose
    last term is nu (xi_z - xi)/z instead of nu (xi_z/z - xi/z^2).
    """
    st = model.symbol_table()
    nu = Const(model.nu)
    xi, tau, eta = g.xi, g.tau, g.eta
    d = lambda e, *vs: _nd(e, vs, st)
    out = {
        "xi_u": d(xi, "u"),
        "tau_z": d(tau, "z"),
        "tau_u": d(tau, "u"),
    }
    Kp = ex.diff(KF, "u", st)
    Kpp = ex.diff(Kp, "u", st)
    tau_t = d(tau, "t")
    if model.is_constant_ratio:
        beta = Const(_as_fraction(model.beta))
        out["free"] = beta * d(eta, "t") - d(eta, "z", "z") - nu / Z * d(eta, "z")
        geo = nu * (d(xi, "z") / Z - xi / (Z * Z)) if variant == "corrected" else nu * (d(xi, "z") - xi) / Z
        out["uz"] = 2 * Kp / KF * d(eta, "z") + beta * d(xi, "t") + 2 * d(eta, "z", "u") - d(xi, "z", "z") + geo
        out["uz2"] = (
            eta * (Kp * Kp / (KF * KF) - Kpp / KF)
            + Kp / KF * (2 * d(xi, "z") - d(eta, "u") - tau_t)
            - d(eta, "u", "u")
        )
        out["uzz"] = 2 * d(xi, "z") - tau_t
    else:
        Cp = ex.diff(CF, "u", st)
        out["free"] = CF * d(eta, "t") - KF * d(eta, "z", "z") - nu / Z * KF * d(eta, "z")
        out["uz"] = (
            2 * Kp * d(eta, "z")
            + CF * d(xi, "t")
            + KF * (2 * d(eta, "z", "u") - d(xi, "z", "z"))
            + nu * KF * (d(xi, "z") / Z - xi / (Z * Z))
        )
        out["uz2"] = eta * (Cp * Kp / CF - Kpp) + Kp * (2 * d(xi, "z") - d(eta, "u") - tau_t) - KF * d(eta, "u", "u")
        out["uzz"] = eta * (Cp * KF / CF - Kp) + KF * (2 * d(xi, "z") - tau_t)
    return {k: ex.simplify(v) for k, v in out.items()}


def _nd(e, vs, st):
    for v in vs:
        e = ex.diff(e, v, st)
    return e


def point_sampler(model: CoefficientModel, rng: random.Random, z_range=(0.3, 3.0), t_range=(0.3, 3.0)):
    lo, hi = model.u_domain
    if math.isfinite(lo) and math.isfinite(hi):
        ulo, uhi = lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo)
    elif math.isfinite(lo):
        ulo, uhi = lo + 0.2, lo + 3.0
    elif math.isfinite(hi):
        ulo, uhi = hi - 3.0, hi - 0.2
    else:
        ulo, uhi = -1.5, 1.5

    def sample():
        return {
            "z": rng.uniform(*z_range),
            "t": rng.uniform(*t_range),
            "u": rng.uniform(ulo, uhi),
        }

    return sample


def check_determining(
    model: CoefficientModel, g: Generator, n_points: int = 30, seed: int = 0, variant: str = "corrected", rtol: float = 1e-10
) -> DeterminingReport:
    st = model.symbol_table()
    rng = random.Random(seed)
    sampler = point_sampler(model, rng)
    eqs = determining_equations(model, g, variant)
    results = []
    for name in EQUATION_NAMES:
        zc = ex.check_zero(eqs[name], st, sampler, n_samples=n_points, rtol=rtol)
        results.append(EquationResult(name, zc.residual, zc.path, zc.max_abs, zc.max_relative, zc.is_zero))
    branch = "constant" if model.is_constant_ratio else "nonconstant"
    return DeterminingReport(g.label, branch, results)


# ---------------------------------------------------------------------------
# independent oracle: invariance of the equation under the full second prolongation


def prolongation_residual(model: CoefficientModel, g: Generator, n_points: int = 20, seed: int = 0, h: float = 1e-3):
    """Max relative size of pr^(2)Y applied to the equation, on the equation.

    Uses the general prolongation formula with every partial derivative of
    (xi, tau, eta) taken by Richardson-extrapolated central differences of the
    numeric component functions, so it shares no code path with the symbolic
    determining system. Returns (max_relative, worst_point).
    """
    st = model.symbol_table()
    comps = [ex.compile_expr(c, st) for c in g.components()]
    rng = random.Random(seed)
    sampler = point_sampler(model, rng)
    nu = float(model.nu)
    worst, worst_pt = 0.0, None
    for _ in range(n_points):
        p = sampler()
        z, t, u = p["z"], p["t"], p["u"]
        uz, uzz, uzt = rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)
        K, Kp, C = model.K(u), model.K_prime(u), model.C(u)
        Kpp = _fd1(model.K_prime, u, 1e-4)
        Cp = model.C_prime(u)
        ut = (Kp * uz * uz + K * uzz + nu / z * K * uz) / C
        D = _Partials(comps, (z, t, u), h)
        xi, tau, eta = D.val(0), D.val(1), D.val(2)
        # general prolongation coefficients
        eta_z = D.d(2, "z") + (D.d(2, "u") - D.d(0, "z")) * uz - D.d(1, "z") * ut - D.d(0, "u") * uz**2 - D.d(1, "u") * uz * ut
        eta_t = D.d(2, "t") + (D.d(2, "u") - D.d(1, "t")) * ut - D.d(0, "t") * uz - D.d(1, "u") * ut**2 - D.d(0, "u") * uz * ut
        eta_zz = (
            D.d2(2, "z", "z")
            + (2 * D.d2(2, "z", "u") - D.d2(0, "z", "z")) * uz
            - D.d2(1, "z", "z") * ut
            + (D.d2(2, "u", "u") - 2 * D.d2(0, "z", "u")) * uz**2
            - 2 * D.d2(1, "z", "u") * uz * ut
            + (D.d(2, "u") - 2 * D.d(0, "z")) * uzz
            - 2 * D.d(1, "z") * uzt
            - D.d2(0, "u", "u") * uz**3
            - D.d2(1, "u", "u") * uz**2 * ut
            - 3 * D.d(0, "u") * uz * uzz
            - D.d(1, "u") * ut * uzz
            - 2 * D.d(1, "u") * uz * uzt
        )
        # G = C u_t - K' u_z^2 - K u_zz - nu/z K u_z
        terms = [
            xi * (nu / z**2) * K * uz,
            eta * (Cp * ut - Kpp * uz**2 - Kp * uzz - nu / z * Kp * uz),
            eta_z * (-2 * Kp * uz - nu / z * K),
            eta_t * C,
            eta_zz * (-K),
        ]
        total = abs(sum(terms))
        scale = sum(abs(x) for x in terms) + 1e-300
        rel = total / scale
        if rel > worst:
            worst, worst_pt = rel, {"z": z, "t": t, "u": u, "u_z": uz, "u_zz": uzz}
    return worst, worst_pt


def _fd1(f, x, h):
    d1 = (f(x + h) - f(x - h)) / (2 * h)
    d2 = (f(x + h / 2) - f(x - h / 2)) / h
    return (4 * d2 - d1) / 3


class _Partials:
    _IDX = {"z": 0, "t": 1, "u": 2}

    def __init__(self, comps, x, h):
        self.comps = comps
        self.x = x
        self.h = h
        self._cache = {}

    def _f(self, k, x):
        return self.comps[k]({"z": x[0], "t": x[1], "u": x[2]})

    def val(self, k):
        return self._f(k, self.x)

    def _shift(self, shifts):
        x = list(self.x)
        for i, s in shifts:
            x[i] += s
        return x

    def d(self, k, v):
        key = (k, v)
        if key not in self._cache:
            i = self._IDX[v]

            def cd(h):
                hi = h * max(1.0, abs(self.x[i]))
                return (self._f(k, self._shift([(i, hi)])) - self._f(k, self._shift([(i, -hi)]))) / (2 * hi)

            self._cache[key] = (4 * cd(self.h / 2) - cd(self.h)) / 3
        return self._cache[key]

    def d2(self, k, v, w):
        key = (k, v, w)
        if key not in self._cache:
            i, j = self._IDX[v], self._IDX[w]

            def cd(h):
                hi = h * max(1.0, abs(self.x[i]))
                hj = h * max(1.0, abs(self.x[j]))
                if i == j:
                    f0 = self._f(k, self.x)
                    return (self._f(k, self._shift([(i, hi)])) - 2 * f0 + self._f(k, self._shift([(i, -hi)]))) / hi**2
                return (
                    self._f(k, self._shift([(i, hi), (j, hj)]))
                    - self._f(k, self._shift([(i, hi), (j, -hj)]))
                    - self._f(k, self._shift([(i, -hi), (j, hj)]))
                    + self._f(k, self._shift([(i, -hi), (j, -hj)]))
                ) / (4 * hi * hj)

            self._cache[key] = (4 * cd(self.h / 2) - cd(self.h)) / 3
        return self._cache[key]


# ---------------------------------------------------------------------------
# brackets and structure constants


def lie_bracket(g1: Generator, g2: Generator, st) -> Generator:
    """[g1, g2] with components g1(c2) - g2(c1)."""
    comps = [ex.simplify(g1.apply(c2, st) - g2.apply(c1, st)) for c1, c2 in zip(g1.components(), g2.components())]
    return Generator(f"[{g1.label},{g2.label}]", *comps, g1.case_tag)


@dataclass
class CommutatorTable:
    labels: list
    # coeffs[i][j] is the list of structure constants c^k_ij over the basis
    coeffs: list
    paths: dict = field(default_factory=dict)

    def entry(self, i, j):
        return self.coeffs[i][j]

    def render_entry(self, i, j) -> str:
        parts = []
        for k, c in enumerate(self.coeffs[i][j]):
            if c == 0:
                continue
            sign = "-" if c < 0 else "+"
            parts.append((sign, f"{_coef_text(-c if c < 0 else c)}{self.labels[k]}"))
        if not parts:
            return "0"
        s = ("-" if parts[0][0] == "-" else "") + parts[0][1]
        return s + "".join(f" {sg} {txt}" for sg, txt in parts[1:])

    def as_dict(self):
        return {
            "labels": list(self.labels),
            "entries": {
                f"[{self.labels[i]},{self.labels[j]}]": [_num(c) for c in self.coeffs[i][j]]
                for i in range(len(self.labels))
                for j in range(len(self.labels))
            },
        }

    def antisymmetry_defect(self) -> float:
        n = len(self.labels)
        return max(
            (abs(float(self.coeffs[i][j][k]) + float(self.coeffs[j][i][k])) for i in range(n) for j in range(n) for k in range(n)),
            default=0.0,
        )

    def jacobi_defect(self) -> float:
        """max over (i,j,l,m) of the cyclic sum of structure-constant products."""
        n = len(self.labels)
        c = np.array([[[float(x) for x in self.coeffs[i][j]] for j in range(n)] for i in range(n)])
        worst = 0.0
        for i in range(n):
            for j in range(n):
                for l in range(n):
                    # [Yi,[Yj,Yl]] + [Yj,[Yl,Yi]] + [Yl,[Yi,Yj]] expanded in the basis
                    s = np.zeros(n)
                    for k in range(n):
                        s += c[j, l, k] * c[i, k] + c[l, i, k] * c[j, k] + c[i, j, k] * c[l, k]
                    worst = max(worst, float(np.max(np.abs(s))))
        return worst


def _coef_text(c):
    if c == 1:
        return ""
    if c == -1:
        return "-"
    if isinstance(c, Fraction):
        return (str(c.numerator) if c.denominator == 1 else f"({c})") + "*"
    return f"{c:.12g}*"


def commutator_table(gens, model: CoefficientModel, n_points: int = 12, seed: int = 1, max_den: int = 1000) -> CommutatorTable:
    """Structure constants by collocation, rationalization, then an identity check.

    Each bracket's (xi, tau, eta) is matched against the basis at sampled
    points (least squares, minimum-norm when the basis is degenerate); the
    rationalized coefficients are accepted only if bracket - sum c_k Y_k is
    recognized as zero by the expression checker.
    """
    st = model.symbol_table()
    rng = random.Random(seed)
    sampler = point_sampler(model, rng)
    pts = [sampler() for _ in range(n_points)]
    compiled = [[ex.compile_expr(c, st) for c in g.components()] for g in gens]

    def vec(fs):
        return np.array([f(p) for p in pts for f in fs])

    basis = np.column_stack([vec(fs) for fs in compiled])
    n = len(gens)
    coeffs = [[None] * n for _ in range(n)]
    paths = {}
    check_sampler = point_sampler(model, random.Random(seed + 7))
    for i in range(n):
        for j in range(n):
            if i == j:
                coeffs[i][j] = [Fraction(0)] * n
                continue
            if j < i and coeffs[j][i] is not None:
                coeffs[i][j] = [-c for c in coeffs[j][i]]
                paths[(i, j)] = "antisymmetry"
                continue
            br = lie_bracket(gens[i], gens[j], st)
            b = vec([ex.compile_expr(c, st) for c in br.components()])
            sol, *_ = np.linalg.lstsq(basis, b, rcond=1e-10)
            cs = [_rationalize(float(x), max_den, 1e-8) if abs(x) > 1e-11 else Fraction(0) for x in sol]
            rem = [
                ex.simplify(bc - sum((ex.as_expr(c) * gc for c, gc in zip(cs, comps)), ZERO))
                for bc, comps in zip(br.components(), zip(*[g.components() for g in gens]))
            ]
            checks = [ex.check_zero(r, st, check_sampler, n_samples=20, rtol=1e-9) for r in rem]
            if not all(checks):
                raise BracketClosureError(
                    f"[{gens[i].label},{gens[j].label}] is not in the span of the basis",
                    Generator("remainder", *rem),
                )
            coeffs[i][j] = cs
            paths[(i, j)] = "normal-form" if all(c.path == "normal-form" for c in checks) else "sampled"
    return CommutatorTable([g.label for g in gens], coeffs, paths)


# ---------------------------------------------------------------------------
# tables as commonly printed


def _table(labels, entries):
    n = len(labels)
    out = [[[Fraction(0)] * n for _ in range(n)] for _ in range(n)]
    for (i, j), combo in entries.items():
        for k, c in combo.items():
            out[i][j][k] = Fraction(c)
    return CommutatorTable(list(labels), out)


def expected_nonconstant_table(nu) -> CommutatorTable:
    nu = Fraction(nu)
    h = (1 - nu) / 2
    return _table(
        ["Y1", "Y2", "Y3", "Y4"],
        {
            (0, 1): {1: -1},
            (0, 3): {3: h},
            (1, 0): {1: 1},
            (2, 3): {3: 1 - nu},
            (3, 0): {3: -h},
            (3, 2): {3: -(1 - nu)},
        },
    )


def expected_constant_table(nu) -> CommutatorTable:
    nu = Fraction(nu)
    q = (1 + nu) / 2
    return _table(
        ["Yt1", "Yt2", "Yt3", "Yt4"],
        {
            (0, 1): {0: -1},
            (0, 2): {1: -2, 3: -q},
            (1, 0): {0: 1},
            (1, 2): {2: -1},
            (2, 0): {1: 2, 3: q},
            (2, 1): {2: 1},
        },
    )


def expected_spherical_table(beta) -> CommutatorTable:
    beta = Fraction(beta)
    return _table(
        ["Yh1", "Yh2", "Yh3", "Yh4", "Yh5", "Yh6"],
        {
            (0, 1): {0: -1},
            (0, 2): {1: -2, 5: Fraction(-3, 2)},
            (0, 4): {3: -1},
            (1, 0): {0: 1},
            (1, 2): {2: -1},
            (1, 3): {3: Fraction(-1, 4)},
            (1, 4): {4: Fraction(-1, 2)},
            (2, 0): {1: 2, 5: Fraction(3, 2)},
            (2, 1): {2: 1},
            (2, 3): {4: 1},
            (3, 1): {3: Fraction(-1, 2)},
            (3, 2): {4: -1},
            (3, 4): {5: -beta / 2},
            (4, 0): {3: 1},
            (4, 1): {4: Fraction(1, 2)},
            (4, 3): {5: beta / 2},
        },
    )


def compare_tables(computed: CommutatorTable, expected: CommutatorTable, tol: float = 1e-9):
    """List of (row, col, computed_text, expected_text) for mismatching entries."""
    out = []
    n = len(expected.labels)
    for i in range(n):
        for j in range(n):
            a = computed.coeffs[i][j]
            b = expected.coeffs[i][j]
            if any(abs(float(x) - float(y)) > tol for x, y in zip(a, b)):
                out.append((expected.labels[i], expected.labels[j], computed.render_entry(i, j), expected.render_entry(i, j)))
    return out
