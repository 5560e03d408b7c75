"""Invariant and similarity solutions, reduced ODEs and their profiles.

Catalog ids ("eq78", "eq137", ...) are stable identifiers for the solution
families. Every entry builds an InvariantSolution whose evaluator returns
u(z, t); residual checks live in :mod:`radheat.verify`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy import integrate, optimize, special

from . import expr as ex
from . import symmetry as sy
from .expr import Const, Func, Sym, Z, T, U, ETA, ONE, ZERO, to_fraction
from .model import CoefficientModel, ModelError, SingularityError


class SolutionError(ValueError):
    pass


class CompatibilityViolation(SolutionError):
    pass


class PicardError(SolutionError):
    def __init__(self, message, last_change=None):
        super().__init__(message)
        self.last_change = last_change


# ---------------------------------------------------------------------------
# data types


@dataclass
class ReducedODE:
    """Reduced equation as an Expr in (x, phi, dphi, ddphi).

    ``var`` names the independent variable; ``phi`` may appear inside K(phi),
    C(phi) when the model's symbol table is supplied.
    """

    name: str
    var: str
    order: int
    expr: ex.Expr
    first_integral: str = ""
    st: ex.SymbolTable | None = None

    def residual_fn(self):
        f = ex.compile_expr(self.expr, self.st)
        var = self.var
        return lambda x, p0, p1, p2=0.0: f({var: x, "phi": p0, "dphi": p1, "ddphi": p2})


@dataclass
class InvariantSolution:
    id: str
    generator: str
    params: dict
    kind: str  # closed | v-form | quadrature | implicit | constant | mapped
    evaluator: Callable
    model: CoefficientModel | None = None
    u_expr: ex.Expr | None = None
    v_expr: ex.Expr | None = None
    v_evaluator: Callable | None = None
    validity: tuple | None = None
    status: str = "catalog"
    provenance: str = "catalog"
    notes: list = field(default_factory=list)
    ode: ReducedODE | None = None
    profile: Callable | None = None
    similarity: str | None = None  # "z/sqrt(t)" for G1-invariant forms

    def evaluate(self, z, t) -> float:
        return float(self.evaluator(float(z), float(t)))

    def evaluate_v(self, z, t) -> float:
        if self.v_evaluator is None:
            raise SolutionError(f"{self.id} has no v-form")
        return float(self.v_evaluator(float(z), float(t)))

    def u_ref_value(self, model=None):
        return (model or self.model).u_ref

    @property
    def symbolic(self) -> bool:
        return self.u_expr is not None

    def describe(self) -> dict:
        return {
            "id": self.id,
            "generator": self.generator,
            "kind": self.kind,
            "params": {k: (float(v) if isinstance(v, Fraction) else v) for k, v in self.params.items()},
            "u": ex.unparse(self.u_expr) if self.u_expr is not None else None,
            "v": ex.unparse(self.v_expr) if self.v_expr is not None else None,
            "validity": self.validity,
            "status": self.status,
            "provenance": self.provenance,
            "notes": list(self.notes),
        }


# ---------------------------------------------------------------------------
# quadrature


def quadrature(f, a: float, b: float, tol: float = 1e-10, limit: int = 200) -> float:
    """Adaptive quadrature of a scalar function (or one-variable Expr).

    An integrable singularity at ``a`` is handled by splitting off [a, a+d]
    and integrating it with the algebraic-weight-aware QAGS routine.
    """
    if isinstance(f, ex.Expr):
        names = ex.free_symbols(f)
        if len(names) > 1:
            raise SolutionError(f"integrand must have one variable, got {sorted(names)}")
        name = next(iter(names), "eta")
        g = ex.compile_expr(f)
        fn = lambda x: g({name: x})
    else:
        fn = f
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    if math.isinf(b):
        val, err = integrate.quad(fn, a, b, epsabs=tol, epsrel=tol, limit=limit)
    else:
        mid = a + min(1.0, 0.5 * (b - a))
        v1, e1 = integrate.quad(fn, a, mid, epsabs=tol / 2, epsrel=tol, limit=limit)
        v2, e2 = integrate.quad(fn, mid, b, epsabs=tol / 2, epsrel=tol, limit=limit) if mid < b else (0.0, 0.0)
        val, err = v1 + v2, e1 + e2
    if not math.isfinite(val) or err > max(100 * tol, 1e-8 * abs(val)):
        raise SolutionError(f"quadrature did not converge (estimate {val}, error {err})")
    return sign * val


_GL = np.polynomial.legendre.leggauss(80)


@lru_cache(maxsize=32)
def _jacobi_rule(nu: float, n: int = 80):
    return special.roots_jacobi(n, 0.0, -nu)


def gaussian_profile_integral(nu, beta, eta: float) -> float:
    """I(eta) = int_{eta_ref}^{eta} s^-nu exp(-beta s^2/4) ds.

    eta_ref = 0 when nu < 1 (integrable), else 1. Fixed-node Gauss rules make
    I a smooth function of eta, so finite differences of it stay clean.
    """
    nu, beta = float(nu), float(beta)
    if eta <= 0:
        raise ex.DomainError("similarity variable must be positive")
    if nu < 1:
        # s = eta (1 + x)/2 with weight (1+x)^-nu on [-1, 1]
        x, w = _jacobi_rule(nu)
        s = 0.5 * eta * (1.0 + x)
        return float(np.sum(w * np.exp(-beta * s * s / 4.0)) * (0.5 * eta) ** (1.0 - nu))
    x, w = _GL
    half = 0.5 * (eta - 1.0)
    s = 1.0 + half * (1.0 + x)
    return float(half * np.sum(w * s ** (-nu) * np.exp(-beta * s * s / 4.0)))


# ---------------------------------------------------------------------------
# reduced ODEs

PHI, DPHI, DDPHI = Sym("phi"), Sym("dphi"), Sym("ddphi")


def _sub_phi(e):
    return ex.substitute(e, {"u": PHI})


def ode_similarity(model: CoefficientModel) -> ReducedODE:
    """K phi'' + K' phi'^2 + (nu/eta) K phi' + (eta/2) C phi' in eta = z/sqrt(t)."""
    K, Kp, C = _sub_phi(model.K_expr), _sub_phi(model.K_prime_expr), _sub_phi(model.C_expr)
    nu = Const(model.nu)
    e = K * DDPHI + Kp * DPHI * DPHI + nu / ETA * K * DPHI + ETA / 2 * C * DPHI
    return ReducedODE("similarity", "eta", 2, ex.simplify(e), "K phi' = C1 eta^-nu exp(-1/2 int eta C/K)")


def ode_stationary(model: CoefficientModel) -> ReducedODE:
    K, Kp = _sub_phi(model.K_expr), _sub_phi(model.K_prime_expr)
    nu = Const(model.nu)
    e = K * DDPHI + Kp * DPHI * DPHI + nu / Z * K * DPHI
    return ReducedODE("stationary", "z", 2, ex.simplify(e), "z^nu K phi' = C1")


def ode_projective(nu) -> ReducedODE:
    return ReducedODE("projective", "eta", 2, ETA * DDPHI + Const(to_fraction(nu)) * DPHI)


def ode_gaussian(nu, beta) -> ReducedODE:
    nu, beta = Const(to_fraction(nu)), Const(to_fraction(beta))
    return ReducedODE("gaussian", "eta", 2, DDPHI + (nu / ETA + beta * ETA / 2) * DPHI, "phi' = c1 eta^-nu exp(-beta eta^2/4)")


def ode_radial_steady(nu) -> ReducedODE:
    return ReducedODE("radial-steady", "z", 2, DDPHI + Const(to_fraction(nu)) / Z * DPHI)


def ode_spherical_amplitude() -> ReducedODE:
    return ReducedODE("spherical-amplitude", "t", 1, DPHI + PHI / (2 * T))


def _derivs(profile, x, h):
    """phi, phi', phi'' by central differences with one Richardson step."""
    f0 = profile(x)

    def d1(s):
        return (profile(x + s) - profile(x - s)) / (2 * s)

    def d2(s):
        return (profile(x + s) - 2 * f0 + profile(x - s)) / (s * s)

    return f0, (4 * d1(h / 2) - d1(h)) / 3, (4 * d2(h / 2) - d2(h)) / 3


def reduced_ode_residual(ode: ReducedODE, profile, points, h: float = 1e-3, model: CoefficientModel | None = None) -> float:
    st = ode.st or (model.symbol_table() if model is not None else None)
    f = ex.compile_expr(ode.expr, st)
    worst = 0.0
    for x in points:
        p0, p1, p2 = _derivs(profile, float(x), h)
        r = f({ode.var: float(x), "phi": p0, "dphi": p1, "ddphi": p2})
        worst = max(worst, abs(r))
    return worst


# profiles


def profile_projective(nu, c1=1, c2=0):
    nu, c1, c2 = float(nu), float(c1), float(c2)
    if nu == 1:
        return lambda e: c1 + c2 * math.log(e)
    return lambda e: c1 + c2 * e ** (1 - nu) / (1 - nu)


def profile_gaussian(nu, beta, c1=1, c2=0):
    return lambda e: float(c2) + float(c1) * gaussian_profile_integral(nu, beta, e)


def profile_radial_steady(nu, C0=0, C1=1):
    nu, C0, C1 = float(nu), float(C0), float(C1)
    if nu == 1:
        return lambda z: C0 + C1 * math.log(z)
    return lambda z: C0 + C1 * z ** (1 - nu) / (1 - nu)


def profile_spherical_amplitude(C0=1):
    return lambda t: float(C0) * t ** -0.5


# ---------------------------------------------------------------------------
# Picard profile of the self-similar integral relation


@dataclass
class PicardProfile:
    coeffs: np.ndarray
    domain: tuple
    iterations: int
    last_change: float
    C1: float
    C2: float

    def __call__(self, eta):
        lo, hi = self.domain
        if not (lo - 1e-12 <= eta <= hi + 1e-12):
            raise ex.DomainError(f"eta={eta} outside the profile interval [{lo}, {hi}]")
        return float(cheb.chebval(self._x(eta), self.coeffs))

    def _x(self, eta):
        lo, hi = self.domain
        return (2.0 * eta - lo - hi) / (hi - lo)

    def derivative(self, eta, k=1):
        lo, hi = self.domain
        d = cheb.chebder(self.coeffs, k) * (2.0 / (hi - lo)) ** k
        return float(cheb.chebval(self._x(eta), d))


def picard_profile(
    model: CoefficientModel,
    C1: float = 0.1,
    C2: float = 1.0,
    eta_range=(0.5, 2.0),
    n: int = 48,
    damping: float = 0.7,
    tol: float = 1e-9,
    max_iter: int = 500,
) -> PicardProfile:
    """Fixed point of phi = C2 + C1 int eta^-nu / K(phi) exp(-1/2 int eta C(phi)/K(phi)).

    Both integrals start at eta_min (so phi(eta_min) = C2). phi is a Chebyshev
    interpolant on n+1 Lobatto points; damped updates, stop at sup change < tol.
    """
    lo, hi = map(float, eta_range)
    if not 0 < lo < hi:
        raise SolutionError("eta interval must satisfy 0 < eta_min < eta_max")
    nu = float(model.nu)
    x = np.cos(np.pi * np.arange(n + 1) / n)[::-1]
    eta = 0.5 * (hi - lo) * (x + 1) + lo
    scale = 0.5 * (hi - lo)
    phi = np.full_like(eta, float(C2))

    def integrate_nodes(vals):
        c = cheb.chebfit(x, vals, n)
        ci = cheb.chebint(c, lbnd=-1) * scale
        return cheb.chebval(x, ci)

    change = math.inf
    for it in range(1, max_iter + 1):
        if np.any([not model.in_domain(p) for p in phi]):
            raise PicardError("profile left u_domain during iteration", change)
        K = model.K_array(phi)
        C = model.C_array(phi)
        inner = integrate_nodes(eta * C / K)
        g = eta ** (-nu) / K * np.exp(-0.5 * inner)
        new = float(C2) + float(C1) * integrate_nodes(g)
        if not np.all(np.isfinite(new)):
            raise PicardError("non-finite iterate", change)
        change = float(np.max(np.abs(new - phi)))
        phi = (1 - damping) * phi + damping * new
        if change < tol:
            break
    else:
        raise PicardError(f"Picard iteration did not converge in {max_iter} steps (last change {change:.3g})", change)
    coeffs = cheb.chebfit(x, phi, n)
    return PicardProfile(coeffs, (lo, hi), it, change, float(C1), float(C2))


# ---------------------------------------------------------------------------
# validity rectangles


def _ok(f, z, t):
    try:
        v = f(z, t)
        return math.isfinite(v)
    except (ex.DomainError, ex.EvaluationError, SolutionError, ValueError, ZeroDivisionError, OverflowError, ArithmeticError):
        return False


def validity_rectangle(f, z_box=(0.2, 3.0), t_box=(0.2, 3.0), center=None, steps: int = 24, probe: int = 5):
    """Largest axis-aligned rectangle around a valid center where f evaluates, by bisection per side."""
    zs, ts = z_box, t_box
    if center is None:
        cands = [(1.0, 1.0), (1.5, 1.0), (1.0, 2.0), (2.0, 2.0), (0.7, 1.0), (1.0, 0.5), (2.5, 1.0), (1.5, 2.5), (0.5, 0.5)]
        center = next(((z, t) for z, t in cands if zs[0] <= z <= zs[1] and ts[0] <= t <= ts[1] and _ok(f, z, t)), None)
        if center is None:
            grid = [(z, t) for z in np.linspace(*zs, 9) for t in np.linspace(*ts, 9)]
            center = next(((z, t) for z, t in grid if _ok(f, z, t)), None)
        if center is None:
            raise SolutionError("validity domain is empty on the search box")
    rect = [center[0], center[0], center[1], center[1]]

    def all_ok(r):
        return all(_ok(f, z, t) for z in np.linspace(r[0], r[1], probe) for t in np.linspace(r[2], r[3], probe))

    limits = [zs[0], zs[1], ts[0], ts[1]]
    for _ in range(2):
        for side in range(4):
            trial = list(rect)
            trial[side] = limits[side]
            if all_ok(trial):
                rect = trial
                continue
            good, bad = rect[side], limits[side]
            for _ in range(steps):
                mid = 0.5 * (good + bad)
                trial = list(rect)
                trial[side] = mid
                if all_ok(trial):
                    good = mid
                else:
                    bad = mid
            rect[side] = good
    # shrink a little so finite-difference stencils stay inside
    dz, dt = rect[1] - rect[0], rect[3] - rect[2]
    if dz <= 0 or dt <= 0:
        raise SolutionError("validity domain is degenerate")
    m = 0.01
    return ((rect[0] + m * dz, rect[1] - m * dz), (rect[2] + m * dt, rect[3] - m * dt))


# ---------------------------------------------------------------------------
# builders


def _F(x):
    return Const(to_fraction(x))


def _require_constant(model, what):
    if not model.is_constant_ratio:
        raise SolutionError(f"{what} needs a constant-ratio model (C = beta K)")
    return sy._as_fraction(model.beta)


def _require_nonconstant(model, what):
    if model.is_constant_ratio:
        raise SolutionError(f"{what} needs a non-constant ratio C/K")


def _require_family(model, fam, what):
    if model.family != fam:
        raise SolutionError(f"{what} is stated for the {fam} family (model is {model.family})")


def _finish(sol: InvariantSolution, model, z_box=None, t_box=None):
    sol.model = model
    st = model.symbol_table()
    if sol.u_expr is not None:
        sol.u_expr = ex.simplify(sol.u_expr)
    if sol.v_expr is not None:
        sol.v_expr = ex.simplify(sol.v_expr)
    if sol.u_expr is not None and sol.evaluator is None:
        fu = ex.compile_expr(sol.u_expr, st)
        sol.evaluator = lambda z, t: fu({"z": z, "t": t})
    if sol.v_expr is not None and sol.v_evaluator is None:
        fv = ex.compile_expr(sol.v_expr, st)
        sol.v_evaluator = lambda z, t: fv({"z": z, "t": t})
    if sol.validity is None:
        sol.validity = validity_rectangle(
            lambda z, t: _in_domain_eval(sol, model, z, t), z_box or (0.2, 3.0), t_box or (0.2, 3.0)
        )
    (z0, z1), (t0, t1) = sol.validity
    sol.validity = ((float(z0), float(z1)), (float(t0), float(t1)))
    return sol


def _in_domain_eval(sol, model, z, t):
    u = sol.evaluator(z, t)
    if not model.in_domain(u):
        raise ex.DomainError(f"u={u} outside u_domain")
    return u


def _vform(sid, gen, model, v_expr, params, notes=(), **kw):
    u_expr = Func("Jinv", v_expr)
    return _finish(
        InvariantSolution(sid, gen, params, "v-form", None, u_expr=u_expr, v_expr=ex.simplify(v_expr), notes=list(notes), **kw),
        model,
    )


def _closed(sid, gen, model, u_expr, params, notes=(), v_expr=None, **kw):
    return _finish(
        InvariantSolution(sid, gen, params, "closed", None, u_expr=ex.simplify(u_expr), v_expr=v_expr, notes=list(notes), **kw),
        model,
    )


def _nu_branch(model, nu1_id, other_id, sid):
    is1 = model.nu == 1
    if sid == nu1_id and not is1 and nu1_id != other_id:
        raise SolutionError(f"{sid} is the nu = 1 branch; use {other_id}")
    if sid == other_id and is1 and nu1_id != other_id:
        raise SolutionError(f"{sid} needs nu != 1; use {nu1_id}")
    return is1


def _steady_H(model, C1, C2):
    nu = model.nu
    if nu == 1:
        return _F(C1) * ex.ln(Z) + _F(C2)
    return _F(C1) / Const(1 - nu) * ex.Pow(Z, 1 - nu) + _F(C2)


def steady_state(model: CoefficientModel, C1=1, C2=0, sid=None) -> InvariantSolution:
    """Stationary solution J(u) = C1 z^(1-nu)/(1-nu) + C2 (C1 ln z + C2 at nu = 1)."""
    sid = sid or ("eq79" if model.nu == 1 else "eq78")
    H = ex.simplify(_steady_H(model, C1, C2))
    if to_fraction(C1) == 0:
        return constant_solution(model, model.J_inverse(float(C2)), sid=sid, generator="Y2")
    return _vform(
        sid, "Y2", model, H, {"C1": to_fraction(C1), "C2": to_fraction(C2)},
        ode=ode_stationary(model), profile=None,
    )


def constant_solution(model, value, sid="eq106", generator="Yt4") -> InvariantSolution:
    value = float(value)
    if not model.in_domain(value):
        raise SolutionError(f"constant {value} outside u_domain")
    u_expr = Const(to_fraction(value))
    return _finish(
        InvariantSolution(sid, generator, {"u0": value}, "constant", None, u_expr=u_expr, validity=((0.2, 3.0), (0.2, 3.0))),
        model,
    )


def trivial_y4(model, M=None) -> InvariantSolution:
    """The constant left by the z^(2-nu) generator: J(u) = 2(2-nu) M."""
    if M is None:
        ab = sy.y3_constants(model)
        M = ab[1] if ab else 0
    val = model.J_inverse(float(2 * (2 - model.nu) * to_fraction(M)))
    return constant_solution(model, val, "eq106", "Y4")


def steady_linear_v(model, C0=0, C1=1, sid="eq129") -> InvariantSolution:
    beta = _require_constant(model, sid)
    v = _steady_H(model, C1, C0)
    if to_fraction(C1) == 0:
        return constant_solution(model, model.J_inverse(float(C0)), sid=sid, generator="Yt3")
    return _vform(sid, "Yt3", model, v, {"C0": to_fraction(C0), "C1": to_fraction(C1)}, profile=profile_radial_steady(model.nu, C0, C1), ode=ode_radial_steady(model.nu))


def projective_solution(model: CoefficientModel, c1=1, c2=0, sid="eq118") -> InvariantSolution:
    beta = _require_constant(model, "projective solution")
    nu = model.nu
    b = Const(beta)
    pre = ex.Pow(T, -(1 + nu) / 2) * ex.exp(-b * Z * Z / (4 * T))
    if nu == 1:
        phi = _F(c1) + _F(c2) * ex.ln(Z / T)
    else:
        phi = _F(c1) + _F(c2) * ex.Pow(Z / T, 1 - nu) / Const(1 - nu)
    return _vform(
        sid, "Yt1", model, pre * phi, {"c1": to_fraction(c1), "c2": to_fraction(c2)},
        ode=ode_projective(nu), profile=profile_projective(nu, c1, c2),
    )


def similarity_scaling(model: CoefficientModel, C1=None, C2=None, eta_range=(0.5, 2.0), sid=None, **picard) -> InvariantSolution:
    """G1-invariant solution u = phi(z/sqrt(t)).

    Constant ratio: v = c2 + c1 int s^-nu exp(-beta s^2/4) ds (quadrature form).
    Otherwise: the Picard fixed point of the self-similar integral relation.
    """
    if model.is_constant_ratio:
        beta = sy._as_fraction(model.beta)
        c1 = 1 if C1 is None else C1
        c2 = 0 if C2 is None else C2
        prof = profile_gaussian(model.nu, beta, c1, c2)

        def v(z, t):
            return prof(z / math.sqrt(t))

        ev = lambda z, t: model.J_inverse(v(z, t))
        sol = InvariantSolution(
            sid or "eq124", "Yt2", {"c1": to_fraction(c1), "c2": to_fraction(c2)}, "quadrature", ev,
            v_evaluator=v, ode=ode_gaussian(model.nu, beta), profile=prof, similarity="z/sqrt(t)",
            notes=["lower limit of the profile integral: 0 for nu < 1, 1 otherwise"],
        )
        return _finish(sol, model)
    C1 = 0.1 if C1 is None else C1
    C2 = 1.0 if C2 is None else C2
    prof = picard_profile(model, float(C1), float(C2), eta_range, **picard)
    lo, hi = prof.domain

    def u(z, t):
        return prof(z / math.sqrt(t))

    # keep z/sqrt(t) inside the profile interval on the whole rectangle
    t_lo, t_hi = 0.8, 1.25
    z_lo, z_hi = lo * math.sqrt(t_hi) * 1.01, hi * math.sqrt(t_lo) * 0.99
    if not z_lo < z_hi:
        raise SolutionError("eta interval too narrow for a (z, t) rectangle; widen eta_range")
    sol = InvariantSolution(
        sid or "eq69", "Y1", {"C1": to_fraction(C1), "C2": to_fraction(C2), "eta_range": (lo, hi)}, "quadrature", u,
        ode=ode_similarity(model), profile=prof, similarity="z/sqrt(t)",
        notes=[f"Picard fixed point anchored at eta={lo}: {prof.iterations} iterations, last change {prof.last_change:.2e}"],
        validity=((z_lo, z_hi), (t_lo, t_hi)),
    )
    return _finish(sol, model)


def spherical_specials(model: CoefficientModel, C0=1, C1=1):
    beta = _require_constant(model, "spherical solutions")
    if model.nu != 2:
        raise SolutionError("the spherical solutions need nu = 2")
    b = Const(beta)
    gauss = _F(C0) / Z * ex.Pow(T, Fraction(-1, 2)) * ex.exp(-b * Z * Z / (4 * T))
    out = []
    if to_fraction(C0) == 0:
        out.append(constant_solution(model, model.J_inverse(0.0), "eq137", "Yh4"))
    else:
        out.append(_vform("eq137", "Yh4", model, gauss, {"C0": to_fraction(C0)}, ode=ode_spherical_amplitude(), profile=profile_spherical_amplitude(C0)))
    out.append(_vform("eq142", "Yh5", model, _F(C1) / Z, {"C1": to_fraction(C1)}))
    return out


def y3_solution(model: CoefficientModel, Q=1, D=None, sid=None) -> InvariantSolution:
    """Scaling-generator solution: J = ((z^-2A (Q + 2(2A+1-nu)t/D)^A) - B)/A, or the A = 0 log form.

    D defaults to the constant linking C to K through the compatibility
    relation; passing another D gives a function that is not a solution.
    """
    _require_nonconstant(model, "scaling-generator solution")
    ab = sy.y3_constants(model)
    if ab is None:
        raise CompatibilityViolation("model does not satisfy F K = A J + B; no scaling generator")
    A, B = ab
    linked = sy.link_constant_D_exact(model)
    Dv = to_fraction(linked) if D is None else to_fraction(D)
    notes = []
    if D is not None and abs(float(Dv) - linked) > 1e-12 * abs(linked):
        notes.append(f"D={float(Dv)} differs from the linked value {linked}")
    nu = model.nu
    Qx = _F(Q)
    if A != 0:
        A = Fraction(A)
        base = Qx + Const(2 * (2 * A + 1 - nu)) / Const(Dv) * T
        J = (ex.Pow(Z, -2 * A) * ex.Pow(base, A) - Const(B)) / Const(A)
        sid = sid or "eq90"
    else:
        base = Qx + Const(2 * (1 - nu)) / Const(Dv) * T
        J = Const(-2 * B) * ex.ln(Z) + Const(B) * ex.ln(base)
        sid = sid or "eq100"
    return _vform(sid, "Y3", model, J, {"Q": to_fraction(Q), "D": Dv, "A": A, "B": B}, notes)


# -- family-specific printed forms -------------------------------------------


def _power_inv(model, v):
    """u from v = J(u) for the power family, as printed."""
    p = model.params
    if p["m"] == -1:
        return ex.exp(v / Const(p["k0"]))
    return ex.Pow(Const((p["m"] + 1) / p["k0"]) * v, 1 / (p["m"] + 1))


def _exp_inv(model, v):
    p = model.params
    lam, k0 = p["lam"], p["k0"]
    if lam == 0:
        return v / Const(k0)
    return ex.ln(Const(lam / k0) * v) / Const(lam)


def _v_projective(model, c1, c2, beta):
    nu = model.nu
    b = Const(beta)
    pre = ex.Pow(T, -(1 + nu) / 2) * ex.exp(-b * Z * Z / (4 * T))
    if nu == 1:
        return pre * (_F(c1) + _F(c2) * ex.ln(Z / T))
    return pre * (_F(c1) + _F(c2) * ex.Pow(Z / T, 1 - nu) / Const(1 - nu))


def eq148(model, c1=1, c2=0):
    _require_family(model, "power", "eq148")
    beta = _require_constant(model, "eq148")
    if model.params["m"] == -1:
        raise SolutionError("eq148 needs m != -1 (use eq149)")
    v = _v_projective(model, c1, c2, beta)
    return _closed("eq148", "Yt1", model, _power_inv(model, v), {"c1": to_fraction(c1), "c2": to_fraction(c2)}, v_expr=v)


def eq149(model, c1=1, c2=0):
    _require_family(model, "power", "eq149")
    beta = _require_constant(model, "eq149")
    if model.params["m"] != -1:
        raise SolutionError("eq149 needs m = -1")
    v = _v_projective(model, c1, c2, beta)
    notes = []
    if model.nu == 1:
        # quoted without the 1/k0 factor; still a solution since k0 v also solves the linear equation
        u = ex.exp(v)
        notes.append("nu = 1 branch is quoted without 1/k0; kept as quoted (k0 v is also a linear solution)")
    else:
        u = ex.exp(v / Const(model.params["k0"]))
    return _closed("eq149", "Yt1", model, u, {"c1": to_fraction(c1), "c2": to_fraction(c2)}, notes)


def _quad_family(sid, model, inv, c1, c2):
    beta = _require_constant(model, sid)
    prof = profile_gaussian(model.nu, beta, c1, c2)
    st = model.symbol_table()
    f = ex.compile_expr(inv(model, Sym("v")), st)

    def v(z, t):
        return prof(z / math.sqrt(t))

    ev = lambda z, t: f({"v": v(z, t)})
    sol = InvariantSolution(
        sid, "Yt2", {"c1": to_fraction(c1), "c2": to_fraction(c2)}, "quadrature", ev,
        v_evaluator=v, ode=ode_gaussian(model.nu, beta), profile=prof, similarity="z/sqrt(t)",
    )
    return _finish(sol, model)


def eq150(model, c1=1, c2=0):
    _require_family(model, "power", "eq150")
    return _quad_family("eq150", model, _power_inv, c1, c2)


def _v_steady(model, C0, C1):
    return _steady_H(model, C1, C0)


def eq151(model, C0=0, C1=1):
    _require_family(model, "power", "eq151")
    _require_constant(model, "eq151")
    if model.params["m"] == -1:
        raise SolutionError("eq151 needs m != -1 (use eq152)")
    v = _v_steady(model, C0, C1)
    return _closed("eq151", "Yt3", model, _power_inv(model, v), {"C0": to_fraction(C0), "C1": to_fraction(C1)}, v_expr=v)


def eq152(model, C0=0, C1=1):
    _require_family(model, "power", "eq152")
    _require_constant(model, "eq152")
    if model.params["m"] != -1:
        raise SolutionError("eq152 needs m = -1")
    v = _v_steady(model, C0, C1)
    return _closed("eq152", "Yt3", model, _power_inv(model, v), {"C0": to_fraction(C0), "C1": to_fraction(C1)}, v_expr=v)


def eq153(model, C1=0.1, C2=1.0, eta_range=(0.5, 2.0)):
    _require_family(model, "power", "eq153")
    s = similarity_scaling(model, C1, C2, eta_range, sid="eq153")
    s.notes.append("the quoted integrand omits 1/k0; it is absorbed into C1")
    return s


def eq156(model, C1=1, C2=1):
    """Power-law stationary solution, m != -1 (both nu branches)."""
    _require_family(model, "power", "eq156")
    _require_nonconstant(model, "eq156")
    m = model.params["m"]
    if m == -1:
        raise SolutionError("eq156 needs m != -1 (use eq157)")
    inner = _F(C2) + _F(C1) * (ex.ln(Z) if model.nu == 1 else ex.Pow(Z, 1 - model.nu))
    notes = ["second branch is stated for (m = -1, nu = 1) but its power 1/(m+1) needs m != -1; used for (m != -1, nu = 1)"] if model.nu == 1 else []
    return _closed("eq156", "Y2", model, ex.Pow(inner, 1 / (m + 1)), {"C1": to_fraction(C1), "C2": to_fraction(C2)}, notes)


def eq157(model, C1=1, C2=1):
    _require_family(model, "power", "eq157")
    _require_nonconstant(model, "eq157")
    if model.params["m"] != -1:
        raise SolutionError("eq157 needs m = -1")
    if model.nu == 1:
        u = _F(C2) * ex.Pow(Z, to_fraction(C1))
    else:
        u = ex.exp(_F(C2) + _F(C1) * ex.Pow(Z, 1 - model.nu))
    return _closed("eq157", "Y2", model, u, {"C1": to_fraction(C1), "C2": to_fraction(C2)})


def _y3_base(model, Q, D, A):
    Dv = to_fraction(sy.link_constant_D_exact(model) if D is None else D)
    base = _F(Q) + Const(2 * (2 * A + 1 - model.nu)) / Const(Dv) * T
    return ex.Pow(Z, -2 * A) * ex.Pow(base, A), Dv


def eq160(model, Q=1, D=None):
    _require_family(model, "power", "eq160")
    _require_nonconstant(model, "eq160")
    p = model.params
    m, n, k0 = p["m"], p["n"], p["k0"]
    if m == -1:
        raise SolutionError("eq160 needs m != -1")
    A = (m + 1) / (n - m)
    core, Dv = _y3_base(model, Q, D, A)
    u = ex.Pow(Const((n - m) / k0) * core, 1 / (m + 1))
    return _closed("eq160", "Y3", model, u, {"Q": to_fraction(Q), "D": Dv, "A": A})


def eq165(model, c1=1, c2=0):
    _require_family(model, "exp", "eq165")
    beta = _require_constant(model, "eq165")
    if model.params["lam"] == 0:
        raise SolutionError("eq165 is stated for lam != 0")
    v = _v_projective(model, c1, c2, beta)
    return _closed("eq165", "Yt1", model, _exp_inv(model, v), {"c1": to_fraction(c1), "c2": to_fraction(c2)}, v_expr=v)


def eq166(model, c1=1, c2=0):
    _require_family(model, "exp", "eq166")
    return _quad_family("eq166", model, _exp_inv, c1, c2)


def eq167(model, C0=0, C1=1):
    _require_family(model, "exp", "eq167")
    _require_constant(model, "eq167")
    if model.params["lam"] == 0:
        raise SolutionError("eq167 is stated for lam != 0 (its nu = 1 branch is labelled lam = 0 but divides by lam)")
    v = _v_steady(model, C0, C1)
    notes = ["nu = 1 branch: label lam = 0 read as lam != 0"] if model.nu == 1 else []
    return _closed("eq167", "Yt3", model, _exp_inv(model, v), {"C0": to_fraction(C0), "C1": to_fraction(C1)}, notes, v_expr=v)


def eq168(model, C1=0.1, C2=1.0, eta_range=(0.5, 2.0)):
    _require_family(model, "exp", "eq168")
    return similarity_scaling(model, C1, C2, eta_range, sid="eq168")


def eq169(model, C1=1, C2=1):
    _require_family(model, "exp", "eq169")
    _require_nonconstant(model, "eq169")
    lam, k0 = model.params["lam"], model.params["k0"]
    if lam == 0:
        raise SolutionError("eq169 needs lam != 0")
    nu = model.nu
    if nu == 1:
        inner = Const(lam / k0) * _F(C1) * ex.ln(Z) + _F(C2)
    else:
        inner = Const(lam / (k0 * (1 - nu))) * _F(C1) * ex.Pow(Z, 1 - nu) + _F(C2)
    return _closed("eq169", "Y2", model, ex.ln(inner) / Const(lam), {"C1": to_fraction(C1), "C2": to_fraction(C2)})


def eq170(model, Q=1, D=None):
    _require_family(model, "exp", "eq170")
    _require_nonconstant(model, "eq170")
    lam, mu, k0 = model.params["lam"], model.params["mu"], model.params["k0"]
    if lam == 0:
        raise SolutionError("eq170 needs lam != 0")
    A = lam / (mu - lam)
    core, Dv = _y3_base(model, Q, D, A)
    u = ex.ln(Const((mu - lam) / k0) * core) / Const(lam)
    return _closed("eq170", "Y3", model, u, {"Q": to_fraction(Q), "D": Dv, "A": A})


def eq174(model, C1=0.1, C2=1.0, eta_range=(0.5, 2.0)):
    _require_family(model, "linear", "eq174")
    return similarity_scaling(model, C1, C2, eta_range, sid="eq174")


def _root_in_domain(R, model, n=400):
    lo, hi = model.u_domain
    a = lo if math.isfinite(lo) else -50.0
    b = hi if math.isfinite(hi) else 50.0
    eps = 1e-9 * max(1.0, b - a)
    xs = np.linspace(a + eps, b - eps, n)
    prev_x, prev_r = None, None
    for x in xs:
        try:
            r = R(x)
        except (ValueError, ZeroDivisionError, OverflowError, ArithmeticError):
            prev_x = prev_r = None
            continue
        if not math.isfinite(r):
            prev_x = prev_r = None
            continue
        if r == 0:
            return x
        if prev_r is not None and (r > 0) != (prev_r > 0):
            return optimize.brentq(R, prev_x, x, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        prev_x, prev_r = x, r
    raise ex.DomainError("no root in u_domain")


def eq175(model, C1=1, C2=0, sid=None):
    """Linear-family stationary solution from a u + b u^2/2 = RHS(z)."""
    _require_family(model, "linear", "eq175")
    p = model.params
    a, b, k0 = float(p["a"]), float(p["b"]), float(p["k0"])
    nu = float(model.nu)
    c1, c2 = float(C1), float(C2)
    if nu == 1:
        rhs = lambda z: c1 / k0 * math.log(z) + c2
        sid = sid or "eq176"
    else:
        rhs = lambda z: c1 / (k0 * (1 - nu)) * z ** (1 - nu) + c2
        sid = sid or "eq175"

    def ev(z, t):
        r = rhs(z)
        return _root_in_domain(lambda u: a * u + b * u * u / 2 - r, model)

    sol = InvariantSolution(sid, "Y2", {"C1": to_fraction(C1), "C2": to_fraction(C2)}, "implicit", ev, ode=ode_stationary(model))
    return _finish(sol, model)


def eq177(model, Q=1, D=1):
    """Scaling-generator relation for the linear family with A(u) as quoted (suspect)."""
    _require_family(model, "linear", "eq177")
    p = model.params
    a, b, c, d, k0 = (float(p[k]) for k in ("a", "b", "c", "d", "k0"))
    if b == 0:
        raise SolutionError("eq177 needs b != 0")
    nu, Qf, Df = float(model.nu), float(Q), float(D)

    def A_of(u):
        w = a * u + b * u * u / 2
        return d * (a + b * u) / (w * (c + d * u)) - b / w

    def R(u, z, t):
        u, z, t = float(u), float(z), float(t)
        w = a * u + b * u * u / 2
        if w == 0 or c + d * u == 0:
            return math.nan
        Au = A_of(u)
        base = Qf + 2 * (2 * Au + 1 - nu) * t / Df
        if base <= 0 or Au == 0:
            return math.nan
        return w - z ** (-2 * Au) * base**Au / (k0 * Au)

    def ev(z, t):
        return _root_in_domain(lambda u: R(u, z, t), model)

    sol = InvariantSolution(
        "eq177", "Y3", {"Q": to_fraction(Q), "D": to_fraction(D)}, "implicit", ev, status="suspect",
        notes=["A(u) depends on u although the scaling generator needs a constant A; implemented as quoted, first root from the left"],
    )
    return _finish(sol, model)


# ---------------------------------------------------------------------------
# catalog


def _eq78(model, C1=1, C2=0, **_):
    if model.nu == 1:
        raise SolutionError("eq78 needs nu != 1 (use eq79)")
    return steady_state(model, C1, C2, "eq78")


def _eq79(model, C1=1, C2=0, **_):
    if model.nu != 1:
        raise SolutionError("eq79 is the nu = 1 branch (use eq78)")
    return steady_state(model, C1, C2, "eq79")


def _eq90(model, Q=1, D=None, **_):
    s = y3_solution(model, Q, D)
    if s.id != "eq90":
        raise SolutionError("model has A = 0; use eq100")
    return s


def _eq100(model, Q=1, D=None, **_):
    s = y3_solution(model, Q, D)
    if s.id != "eq100":
        raise SolutionError("model has A != 0; use eq90")
    return s


def _eq118(model, c1=1, c2=0, **_):
    return projective_solution(model, c1, c2)


def _eq124(model, c1=1, c2=0, **_):
    if not model.is_constant_ratio:
        raise SolutionError("eq124 needs a constant-ratio model")
    return similarity_scaling(model, c1, c2, sid="eq124")


def _eq69(model, C1=None, C2=None, eta_min=0.5, eta_max=2.0, **_):
    return similarity_scaling(model, C1, C2, (eta_min, eta_max), sid="eq69")


def _eq129(model, C0=0, C1=1, **_):
    return steady_linear_v(model, C0, C1)


def _eq137(model, C0=1, **_):
    return spherical_specials(model, C0, 1)[0]


def _eq142(model, C1=1, **_):
    return spherical_specials(model, 1, C1)[1]


def _eq106(model, M=None, **_):
    return trivial_y4(model, M)


def _wrap(fn, *keys):
    def build(model, **kw):
        return fn(model, **{k: v for k, v in kw.items() if k in keys and v is not None})

    return build


CATALOG = {
    "eq69": _eq69,
    "eq78": _eq78,
    "eq79": _eq79,
    "eq90": _eq90,
    "eq100": _eq100,
    "eq106": _eq106,
    "eq118": _eq118,
    "eq124": _eq124,
    "eq129": _eq129,
    "eq137": _eq137,
    "eq142": _eq142,
    "eq148": _wrap(eq148, "c1", "c2"),
    "eq149": _wrap(eq149, "c1", "c2"),
    "eq150": _wrap(eq150, "c1", "c2"),
    "eq151": _wrap(eq151, "C0", "C1"),
    "eq152": _wrap(eq152, "C0", "C1"),
    "eq153": _wrap(eq153, "C1", "C2"),
    "eq156": _wrap(eq156, "C1", "C2"),
    "eq157": _wrap(eq157, "C1", "C2"),
    "eq160": _wrap(eq160, "Q", "D"),
    "eq165": _wrap(eq165, "c1", "c2"),
    "eq166": _wrap(eq166, "c1", "c2"),
    "eq167": _wrap(eq167, "C0", "C1"),
    "eq168": _wrap(eq168, "C1", "C2"),
    "eq169": _wrap(eq169, "C1", "C2"),
    "eq170": _wrap(eq170, "Q", "D"),
    "eq174": _wrap(eq174, "C1", "C2"),
    "eq175": _wrap(eq175, "C1", "C2"),
    "eq176": _wrap(eq175, "C1", "C2"),
    "eq177": _wrap(eq177, "Q", "D"),
}
ALIASES = {"eq73": "eq69", "eq143": "eq142"}


def build_solution(sid: str, model: CoefficientModel, **params) -> InvariantSolution:
    key = ALIASES.get(sid, sid)
    try:
        builder = CATALOG[key]
    except KeyError:
        raise SolutionError(f"unknown catalog id {sid!r}; known: {', '.join(sorted(CATALOG, key=lambda s: int(s[2:])))}") from None
    if key == "eq176" and model.nu != 1:
        raise SolutionError("eq176 is the nu = 1 branch (use eq175)")
    if key == "eq175" and model.nu == 1:
        raise SolutionError("eq175 needs nu != 1 (use eq176)")
    return builder(model, **params)
