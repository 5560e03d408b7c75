"""One-parameter groups: closed-form catalog and numeric Lie-ODE integration.

The numeric flow is the reference; closed forms are catalog entries checked
against it. Several quoted closed forms disagree with their own generator, so
each such entry has a "corrected" sibling obtained by integrating the field.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, optimize

from . import expr as ex
from . import symmetry as sy
from .expr import Const, Func, Sym, Z, T, U, ZERO, ONE, FunctionSymbol
from .model import CoefficientModel, SingularityError

LAM = Sym("lam")


class FlowError(ValueError):
    pass


class FlowValidityError(FlowError):
    pass


class FlowDomainError(FlowError):
    def __init__(self, message, lam_exit=None):
        super().__init__(message)
        self.lam_exit = lam_exit


class FlowPoint(NamedTuple):
    z: float
    t: float
    u: float


# ---------------------------------------------------------------------------
# logarithmic integral on z > 1

LI2 = 1.045163780117492784844588889194613136522615578151


def li(x: float) -> float:
    """li(x) for x > 1, from the stored value li(2) plus quadrature."""
    if not x > 1:
        raise ex.DomainError(f"li is restricted to z > 1 (got {x})")
    val, _ = integrate.quad(lambda s: 1.0 / math.log(s), 2.0, x, epsabs=1e-13, epsrel=1e-13, limit=200)
    return LI2 + val


def li_inverse(y: float) -> float:
    lo, hi = 2.0, 2.0
    while li(lo) > y:
        lo = 1.0 + (lo - 1.0) / 16.0
        if lo - 1.0 < 1e-300:
            raise ex.DomainError(f"li^-1({y}) out of range")
    while li(hi) < y:
        hi *= 2.0
    return optimize.brentq(lambda s: li(s) - y, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


LI_SYMBOLS = (
    FunctionSymbol("li", li, ex.Pow(ex.Ln(U), -1), None),
    FunctionSymbol("liinv", li_inverse, ex.Ln(Func("liinv", U)), None),
)


# ---------------------------------------------------------------------------
# numeric flow


def _dir(lam):
    return 1.0 if lam >= 0 else -1.0


def flow_numeric(g: sy.Generator, model: CoefficientModel, p, lam: float, rtol: float = 1e-10, atol: float = 1e-12) -> FlowPoint:
    """Integrate dz/dl = xi, dt/dl = tau, du/dl = eta from p over [0, lam] (DOP853)."""
    p = FlowPoint(*map(float, p))
    if lam == 0:
        return p
    st = model.symbol_table().with_functions(*LI_SYMBOLS)
    comps = [ex.compile_expr(c, st) for c in g.components()]
    lo, hi = model.u_domain
    state = {"last": 0.0}

    def rhs(s, y):
        z, t, u = y
        if z <= 0 or not (lo < u < hi):
            raise FlowDomainError(f"{g.label}: trajectory left the domain near lambda={s:.6g}", s)
        b = {"z": z, "t": t, "u": u}
        try:
            out = [f(b) for f in comps]
        except (ex.DomainError, SingularityError, ZeroDivisionError, OverflowError) as err:
            raise FlowDomainError(f"{g.label}: {err} near lambda={s:.6g}", s) from None
        state["last"] = s
        return out

    sol = integrate.solve_ivp(rhs, (0.0, float(lam)), list(p), method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise FlowDomainError(f"{g.label}: integration failed ({sol.message})", state["last"])
    z, t, u = sol.y[:, -1]
    return FlowPoint(float(z), float(t), float(u))


# ---------------------------------------------------------------------------
# closed forms


@dataclass(frozen=True)
class ClosedFlow:
    label: str
    generator: sy.Generator
    zbar: ex.Expr
    tbar: ex.Expr
    ubar: ex.Expr
    status: str = "as-quoted"
    sibling: str | None = None
    constraints: tuple = ()  # (Expr, text): Expr must be > 0
    note: str = ""

    def maps(self):
        return (self.zbar, self.tbar, self.ubar)

    def render(self):
        return {
            "label": self.label,
            "generator": self.generator.render(),
            "zbar": ex.unparse(self.zbar),
            "tbar": ex.unparse(self.tbar),
            "ubar": ex.unparse(self.ubar),
            "status": self.status,
            "constraints": [text for _, text in self.constraints],
        }


def _jinv(x):
    return Func("Jinv", x)


JU = Func("J", U)


def _beta_of(model, beta):
    if beta is not None:
        return Fraction(beta)
    if not model.is_constant_ratio:
        raise FlowError("beta is required for a non-constant-ratio model")
    return sy._as_fraction(model.beta)


def _y3_params(model, A, B):
    if A is None or B is None:
        ab = sy.y3_constants(model)
        if ab is None:
            raise FlowError("model has no scaling generator; pass A and B")
        A = ab[0] if A is None else A
        B = ab[1] if B is None else B
    return Fraction(A), Fraction(B)


def _g1(model, **_):
    return ClosedFlow("G1", sy.y1_basic(), Z * ex.exp(LAM / 2), T * ex.exp(LAM), U)


def _g2(model, **_):
    return ClosedFlow("G2", sy.y2_basic(), Z, T + LAM, U)


def _g3(model, A=None, B=None, **_):
    A, B = _y3_params(model, A, B)
    if A != 0:
        r = Const(B / A)
        jb = (JU + r) * ex.exp(Const(-2 * A) * LAM) - r
    else:
        jb = JU - Const(2 * B) * LAM
    return ClosedFlow("G3", sy.y3_generator(A, B), Z * ex.exp(LAM), T, _jinv(jb))


def _nu_of(model, nu):
    return Fraction(nu) if nu is not None else Fraction(model.nu)


def _g4_generic(model, nu, M):
    nu = _nu_of(model, nu)
    if nu in (1, 2):
        raise FlowError("the generic z^(2-nu) group needs nu != 1, 2; use the nu = 1 or nu = 2 entries")
    return nu, Fraction(M if M is not None else 1)


def _g4(model, nu=None, M=None, **_):
    nu, M = _g4_generic(model, nu, M)
    P = Const(2 * (2 - nu) * M)
    base = ex.Pow(Z, 1 - nu) + Const(nu - 1) * LAM
    zb = ex.Pow(base, 1 / (nu - 1))
    jb = P + (JU - P) * ex.exp(ex.Pow(Z, 1 - nu) * LAM)
    return ClosedFlow(
        "G4", sy.printed_y4(nu, M), zb, T, _jinv(jb), "as-quoted", "G4_corrected",
        ((base, "z^(1-nu) + (nu-1) lam > 0"),),
    )


def _g4_corrected(model, nu=None, M=None, **_):
    nu, M = _g4_generic(model, nu, M)
    P = Const(2 * (2 - nu) * M)
    base = ex.Pow(Z, nu - 1) + Const(nu - 1) * LAM
    zb = ex.Pow(base, 1 / (nu - 1))
    jb = P + (JU - P) * zb / Z
    return ClosedFlow(
        "G4_corrected", sy.printed_y4(nu, M), zb, T, _jinv(jb), "corrected", None,
        ((base, "z^(nu-1) + (nu-1) lam > 0"),),
        "exact integral of the quoted z^(2-nu) field",
    )


def _g4_sym(model, nu=None, M=None, **_):
    """Flow of the admitted z^(2-nu) generator (F K = A4 J + M)."""
    nu, M = _g4_generic(model, nu, M)
    A4 = sy.y4_exponent(nu)
    base = ex.Pow(Z, nu - 1) + Const(nu - 1) * LAM
    zb = ex.Pow(base, 1 / (nu - 1))
    # Q = (nu-1) J + 2(2-nu) M is multiplied by (z/zbar)^(nu-1)
    c = Const(2 * (2 - nu) * M)
    q = (Const(nu - 1) * JU + c) * ex.Pow(Z, nu - 1) / base
    jb = (q - c) / Const(nu - 1)
    return ClosedFlow(
        "G4_sym", sy.y4_generator(nu, A4, M), zb, T, _jinv(jb), "corrected", None,
        ((base, "z^(nu-1) + (nu-1) lam > 0"),),
        "flow of the admitted generator",
    )


def _w1():
    return ex.Ln(Z) - 1


def _g4_nu1(model, M=None, **_):
    M = Fraction(M if M is not None else 1)
    zb = ex.exp(1 + _w1() * ex.exp(LAM))
    jb = Const(2 * M) + (JU - Const(2 * M)) * ex.exp(-LAM * ex.Ln(Z))
    return ClosedFlow("G4_nu1", sy.printed_y4(1, M), zb, T, _jinv(jb), "as-quoted", "G4_nu1_corrected")


def _g4_nu1_corrected(model, M=None, **_):
    M = Fraction(M if M is not None else 1)
    zb = ex.exp(1 + _w1() * ex.exp(LAM))
    jb = Const(2 * M) + (JU - Const(2 * M)) * ex.exp(LAM + _w1() * (ex.exp(LAM) - 1))
    return ClosedFlow(
        "G4_nu1_corrected", sy.printed_y4(1, M), zb, T, _jinv(jb), "corrected", None, (),
        "exact integral of the quoted nu = 1 field",
    )


def _g4_nu1_sym(model, M=None, **_):
    M = Fraction(M if M is not None else 1)
    zb = ex.exp(1 + _w1() * ex.exp(LAM))
    jb = JU - Const(2 * M) * (LAM + _w1() * (ex.exp(LAM) - 1))
    return ClosedFlow(
        "G4_nu1_sym", sy.y4_generator(1, 0, M), zb, T, _jinv(jb), "corrected", None, (),
        "flow of the admitted nu = 1 generator",
    )


def _g4_nu2(model, **_):
    zb = Func("liinv", Func("li", Z) - LAM)
    return ClosedFlow(
        "G4_nu2", sy.printed_y4(2, 1), zb, T, U, "as-quoted", None,
        ((Z - 1, "z > 1 (logarithmic integral branch)"),),
    )


def _const_gen(model, nu, beta, k, spherical=False):
    nu = Fraction(2) if spherical else _nu_of(model, nu)
    return sy.constant_generators(nu, _beta_of(model, beta))[k]


def _projective(model, nu, beta, spherical):
    b = Const(_beta_of(model, beta))
    nu = Fraction(2) if spherical else _nu_of(model, nu)
    s = 1 - LAM * T
    jb = JU * ex.Pow(s, (1 + nu) / 2) * ex.exp(-b * LAM * Z * Z / (4 * s))
    return Z / s, T / s, _jinv(jb), ((s, "1 - lam t > 0"),)


def _l1(model, nu=None, beta=None, **_):
    zb, tb, ub, cons = _projective(model, nu, beta, False)
    return ClosedFlow("L1", _const_gen(model, nu, beta, 0), zb, tb, ub, "as-quoted", None, cons)


def _l2(model, nu=None, beta=None, **_):
    return ClosedFlow("L2", _const_gen(model, nu, beta, 1), Z * ex.exp(LAM / 2), T * ex.exp(LAM * T), U, "as-quoted", "L2_corrected")


def _l2_corrected(model, nu=None, beta=None, **_):
    return ClosedFlow("L2_corrected", _const_gen(model, nu, beta, 1), Z * ex.exp(LAM / 2), T * ex.exp(LAM), U, "corrected")


def _l3(model, nu=None, beta=None, **_):
    return ClosedFlow("L3", _const_gen(model, nu, beta, 2), Z, T + LAM, U)


def _l4(model, nu=None, beta=None, **_):
    return ClosedFlow("L4", _const_gen(model, nu, beta, 3), Z, T, _jinv(JU * ex.exp(-LAM)))


def _lt1(model, beta=None, **_):
    zb, tb, ub, cons = _projective(model, 2, beta, True)
    return ClosedFlow("Lt1", _const_gen(model, 2, beta, 0, True), zb, tb, ub, "as-quoted", None, cons)


def _lt2(model, beta=None, **_):
    return ClosedFlow("Lt2", _const_gen(model, 2, beta, 1, True), Z * ex.exp(LAM / 2), T * ex.exp(LAM), U)


def _lt3(model, beta=None, **_):
    return ClosedFlow("Lt3", _const_gen(model, 2, beta, 2, True), Z, T + LAM, U)


def _lt4(model, beta=None, **_):
    b = Const(_beta_of(model, beta))
    zb = Z + LAM * T
    jb = JU * Z / zb * ex.exp(-b / 2 * LAM * Z - b / 4 * LAM * LAM * T)
    return ClosedFlow("Lt4", _const_gen(model, 2, beta, 3, True), zb, T, _jinv(jb), "as-quoted", None, ((zb, "z + lam t > 0"),))


def _lt5(model, beta=None, **_):
    zb = Z + LAM
    return ClosedFlow("Lt5", _const_gen(model, 2, beta, 4, True), zb, T, _jinv(JU * Z / zb), "as-quoted", None, ((zb, "z + lam > 0"),))


def _lt6(model, beta=None, **_):
    return ClosedFlow("Lt6", _const_gen(model, 2, beta, 5, True), Z, T, _jinv(JU * ex.exp(-LAM)))


CATALOG: dict[str, Callable] = {
    "G1": _g1,
    "G2": _g2,
    "G3": _g3,
    "G4": _g4,
    "G4_corrected": _g4_corrected,
    "G4_sym": _g4_sym,
    "G4_nu1": _g4_nu1,
    "G4_nu1_corrected": _g4_nu1_corrected,
    "G4_nu1_sym": _g4_nu1_sym,
    "G4_nu2": _g4_nu2,
    "L1": _l1,
    "L2": _l2,
    "L2_corrected": _l2_corrected,
    "L3": _l3,
    "L4": _l4,
    "Lt1": _lt1,
    "Lt2": _lt2,
    "Lt3": _lt3,
    "Lt4": _lt4,
    "Lt5": _lt5,
    "Lt6": _lt6,
}

# quoted entries and their replacements
QUOTED_LABELS = ("G1", "G2", "G3", "G4", "G4_nu1", "G4_nu2", "L1", "L2", "L3", "L4", "Lt1", "Lt2", "Lt3", "Lt4", "Lt5", "Lt6")


def closed_flow(label: str, model: CoefficientModel, **params) -> ClosedFlow:
    try:
        build = CATALOG[label]
    except KeyError:
        raise FlowError(f"unknown group {label!r}; known: {', '.join(CATALOG)}") from None
    return build(model, **params)


def _compiled(cf: ClosedFlow, model):
    st = model.symbol_table().with_functions(*LI_SYMBOLS)
    maps = [ex.compile_expr(m, st) for m in cf.maps()]
    cons = [(ex.compile_expr(c, st), text) for c, text in cf.constraints]
    return maps, cons


def flow_closed(label, model: CoefficientModel, p, lam: float, **params) -> FlowPoint:
    cf = label if isinstance(label, ClosedFlow) else closed_flow(label, model, **params)
    maps, cons = _compiled(cf, model)
    p = FlowPoint(*map(float, p))
    b = {"z": p.z, "t": p.t, "u": p.u, "lam": float(lam)}
    for f, text in cons:
        try:
            ok = f(b) > 0
        except ex.DomainError:
            ok = False
        if not ok:
            raise FlowValidityError(f"{cf.label}: validity violated at {tuple(p)}, lam={lam}: need {text}")
    try:
        return FlowPoint(*(float(f(b)) for f in maps))
    except (ex.DomainError, OverflowError, ZeroDivisionError) as err:
        raise FlowValidityError(f"{cf.label}: {err}") from None


def validity_window(label, model, p, lam_max: float = 5.0, **params):
    """Largest (lam_lo, lam_hi) around 0 where the closed form evaluates, by bisection."""
    cf = closed_flow(label, model, **params)

    def ok(lam):
        try:
            flow_closed(cf, model, p, lam)
            return True
        except FlowError:
            return False

    out = []
    for sgn in (-1.0, 1.0):
        if ok(sgn * lam_max):
            out.append(sgn * lam_max)
            continue
        a, b = 0.0, lam_max
        for _ in range(60):
            mid = 0.5 * (a + b)
            if ok(sgn * mid):
                a = mid
            else:
                b = mid
        out.append(sgn * a)
    return tuple(out)


# ---------------------------------------------------------------------------
# fidelity and axioms


@dataclass
class FidelityReport:
    label: str
    status: str
    samples: int
    max_diff: tuple
    tolerance: float
    passed: bool
    worst: dict | None = None
    skipped: int = 0
    sibling: str | None = None

    @property
    def discrepancy(self) -> str | None:
        if self.passed:
            return None
        return f"{self.label}: closed form disagrees with the integrated field (max diff {max(self.max_diff):.3g})"

    def render(self):
        return {
            "label": self.label,
            "status": self.status,
            "samples": self.samples,
            "skipped": self.skipped,
            "max_diff": list(self.max_diff),
            "tolerance": self.tolerance,
            "pass": self.passed,
            "worst": self.worst,
            "discrepancy": self.discrepancy,
            "corrected_variant": self.sibling,
        }


def sample_flow_inputs(model, rng: random.Random, label: str = ""):
    sampler = sy.point_sampler(model, rng, z_range=(0.6, 2.0), t_range=(0.3, 1.5))
    p = sampler()
    z = p["z"] + (1.0 if label == "G4_nu2" else 0.0)
    return FlowPoint(z, p["t"], p["u"]), rng.uniform(-0.3, 0.3)


def flow_fidelity(label, model: CoefficientModel, n: int = 20, seed: int = 0, tol: float = 1e-7, **params) -> FidelityReport:
    cf = closed_flow(label, model, **params)
    rng = random.Random(seed)
    diffs = np.zeros(3)
    worst = None
    done = skipped = 0
    while done < n and skipped < 20 * n:
        p, lam = sample_flow_inputs(model, rng, label)
        try:
            a = flow_closed(cf, model, p, lam)
            b = flow_numeric(cf.generator, model, p, lam)
        except FlowError:
            skipped += 1
            continue
        d = np.abs(np.array(a) - np.array(b)) / np.maximum(1.0, np.abs(np.array(b)))
        if worst is None or d.max() > diffs.max():
            worst = {"point": list(p), "lam": lam, "closed": list(a), "numeric": list(b)}
        diffs = np.maximum(diffs, d)
        done += 1
    if done == 0:
        raise FlowError(f"{label}: no admissible samples")
    return FidelityReport(label, cf.status, done, tuple(float(x) for x in diffs), tol, bool(diffs.max() < tol), worst, skipped, cf.sibling)


@dataclass
class AxiomReport:
    label: str
    additivity: float
    inverse: float
    tolerance: float
    samples: int

    @property
    def passed(self):
        return self.additivity < self.tolerance and self.inverse < self.tolerance


def _close(a, b):
    a, b = np.array(a), np.array(b)
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def check_group_axioms(
    label_or_gen, model: CoefficientModel, points=None, lam1: float = 0.1, lam2: float = 0.2, tol: float = 1e-8, numeric: bool = False, seed: int = 0, **params
) -> AxiomReport:
    """flow(l1) o flow(l2) = flow(l1 + l2) and flow(l) o flow(-l) = id.

    With a Generator (or numeric=True) the numeric flow is used; with a catalog
    label the closed form is used.
    """
    if isinstance(label_or_gen, sy.Generator) or numeric:
        g = label_or_gen if isinstance(label_or_gen, sy.Generator) else closed_flow(label_or_gen, model, **params).generator
        f = lambda p, lam: flow_numeric(g, model, p, lam, rtol=1e-12, atol=1e-13)
        name = g.label
    else:
        cf = closed_flow(label_or_gen, model, **params)
        f = lambda p, lam: flow_closed(cf, model, p, lam)
        name = cf.label
    if points is None:
        rng = random.Random(seed)
        points = [sample_flow_inputs(model, rng, name)[0] for _ in range(5)]
    add = inv = 0.0
    for p in points:
        p = FlowPoint(*p)
        add = max(add, _close(f(f(p, lam2), lam1), f(p, lam1 + lam2)))
        inv = max(inv, _close(f(f(p, -lam1), lam1), p))
    return AxiomReport(name, add, inv, tol, len(points))


# ---------------------------------------------------------------------------
# mapping solutions


def map_solution(label, model: CoefficientModel, lam: float, s, **params):
    """Image of solution ``s`` under the group element lam.

    The (z, t) part of every catalog group is independent of u, so the image is
    u_new(z, t) = ubar(z0, t0, s(z0, t0)) with (z0, t0) the (z, t) image of
    (z, t) under -lam.
    """
    from .solutions import InvariantSolution

    cf = closed_flow(label, model, **params)
    st = model.symbol_table().with_functions(*LI_SYMBOLS)
    fz, ft = ex.compile_expr(cf.zbar, st), ex.compile_expr(cf.tbar, st)

    def base_inverse(z, t):
        b = {"z": z, "t": t, "u": 0.0, "lam": -float(lam)}
        return fz(b), ft(b)

    def evaluator(z, t):
        z0, t0 = base_inverse(z, t)
        u0 = s.evaluate(z0, t0)
        return flow_closed(cf, model, (z0, t0, u0), lam).u

    return InvariantSolution(
        id=f"{s.id}@{cf.label}",
        generator=s.generator,
        params={**s.params, "lam": lam, "group": cf.label},
        kind="mapped",
        evaluator=evaluator,
        validity=s.validity,
        provenance=f"derived-by-flow {cf.label}(lam={lam}) from {s.id}",
        model=model,
    )
