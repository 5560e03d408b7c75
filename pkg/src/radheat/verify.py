"""Residual checks and an implicit finite-difference solver.

Residual of the nonlinear equation:
    C(u) u_t - K'(u) u_z^2 - K(u) u_zz - (nu/z) K(u) u_z
and of the linear one:  beta v_t - v_zz - (nu/z) v_z.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from . import expr as ex
from .model import CoefficientModel

SYMBOLIC_TOL = 1e-9
NUMERIC_TOL = 1e-5
DEFAULT_H = 1e-4


class VerifyError(RuntimeError):
    pass


class NewtonDivergence(VerifyError):
    def __init__(self, message, step=None, residual=None):
        super().__init__(message)
        self.step = step
        self.residual = residual


@dataclass(frozen=True)
class Grid:
    z0: float
    z1: float
    t0: float
    t1: float
    nz: int = 20
    nt: int = 20

    @classmethod
    def over(cls, validity, nz=20, nt=20):
        (z0, z1), (t0, t1) = validity
        return cls(float(z0), float(z1), float(t0), float(t1), nz, nt)

    @classmethod
    def parse(cls, text: str, validity):
        """'20x20' over the validity rectangle, or 'z0:z1:nz,t0:t1:nt'."""
        text = text.strip()
        if "x" in text and ":" not in text:
            nz, nt = (int(s) for s in text.lower().split("x"))
            return cls.over(validity, nz, nt)
        zs, ts = text.split(",")
        z0, z1, nz = zs.split(":")
        t0, t1, nt = ts.split(":")
        return cls(float(z0), float(z1), float(t0), float(t1), int(nz), int(nt))

    def points(self):
        for z in np.linspace(self.z0, self.z1, self.nz):
            for t in np.linspace(self.t0, self.t1, self.nt):
                yield float(z), float(t)

    def as_dict(self):
        return {"z": [self.z0, self.z1, self.nz], "t": [self.t0, self.t1, self.nt]}


@dataclass
class ResidualReport:
    solution_id: str
    method: str
    grid: dict
    max_residual: float
    mean_residual: float
    tolerance: float
    passed: bool
    worst_point: dict | None = None

    def to_dict(self):
        fin = lambda x: x if math.isfinite(x) else None  # JSON has no inf
        return {
            "solution_id": self.solution_id,
            "method": self.method,
            "grid": self.grid,
            "max_residual": fin(self.max_residual),
            "mean_residual": fin(self.mean_residual),
            "tolerance": self.tolerance,
            "pass": self.passed,
            "worst_point": self.worst_point,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


REPORT_FIELDS = ("solution_id", "method", "grid", "max_residual", "mean_residual", "tolerance", "pass", "worst_point")


def _report(sid, method, grid, res, pts, tol, errors=None):
    res = np.asarray(res)
    i = int(np.argmax(res))
    mx = float(res[i])
    worst = {"z": pts[i][0], "t": pts[i][1], "residual": mx if math.isfinite(mx) else None}
    if errors:
        worst["error"] = errors.get(i)
        worst["failed_nodes"] = len(errors)
    return ResidualReport(sid, method, grid.as_dict(), mx, float(np.mean(res)), tol, bool(mx < tol), worst)


def _fd_jet(f, z, t, h):
    """(u, u_z, u_zz, u_t) by central differences with one Richardson step."""
    u0 = f(z, t)

    def dz(s):
        return (f(z + s, t) - f(z - s, t)) / (2 * s)

    def dzz(s):
        return (f(z + s, t) - 2 * u0 + f(z - s, t)) / (s * s)

    def dt(s):
        return (f(z, t + s) - f(z, t - s)) / (2 * s)

    rich = lambda d: (4 * d(h / 2) - d(h)) / 3
    return u0, rich(dz), rich(dzz), rich(dt)


def _symbolic_jet(u_expr, st):
    fs = [
        ex.compile_expr(e, st)
        for e in (u_expr, ex.diff(u_expr, "z", st), ex.diff(ex.diff(u_expr, "z", st), "z", st), ex.diff(u_expr, "t", st))
    ]
    return lambda z, t: tuple(f({"z": z, "t": t}) for f in fs)


def pde_residual_at(model: CoefficientModel, z, u, uz, uzz, ut):
    K = model.K(u)
    return model.C(u) * ut - model.K_prime(u) * uz * uz - K * uzz - float(model.nu) / z * K * uz


def residual_pde(
    s, model: CoefficientModel | None = None, grid: Grid | None = None, method: str = "auto", h: float = DEFAULT_H, tol: float | None = None, tolerate_failures: bool = False
) -> ResidualReport:
    """Residual of the nonlinear equation for solution ``s`` on ``grid``.

    method "symbolic" differentiates s.u_expr exactly; "numeric" uses central
    differences of the evaluator at step h with Richardson (h, h/2); "auto"
    picks symbolic when an expression exists. With ``tolerate_failures`` a
    node where the solution cannot be evaluated counts as an infinite
    residual instead of raising.
    """
    model = model or s.model
    grid = grid or Grid.over(s.validity)
    if method == "auto":
        method = "symbolic" if getattr(s, "u_expr", None) is not None else "numeric"
    if method == "symbolic":
        if s.u_expr is None:
            raise VerifyError(f"{s.id} has no closed form; use the numeric path")
        jet = _symbolic_jet(s.u_expr, model.symbol_table())
        tol = SYMBOLIC_TOL if tol is None else tol
        label = "symbolic"
    else:
        jet = lambda z, t: _fd_jet(s.evaluate, z, t, h)
        tol = NUMERIC_TOL if tol is None else tol
        label = f"numeric-FD h={h:g}"
    pts, res, errors = [], [], {}
    for z, t in grid.points():
        try:
            u, uz, uzz, ut = jet(z, t)
            r = abs(pde_residual_at(model, z, u, uz, uzz, ut))
        except (ex.DomainError, ex.EvaluationError, ValueError, ZeroDivisionError, OverflowError) as err:
            if not tolerate_failures:
                raise VerifyError(f"{s.id}: evaluation failed at z={z}, t={t}: {err}") from None
            errors[len(res)] = str(err)
            r = math.inf
        pts.append((z, t))
        res.append(r if math.isfinite(r) else math.inf)
    return _report(s.id, label, grid, res, pts, tol, errors)


def residual_linear(v, beta, nu, grid: Grid, method: str = "auto", h: float = DEFAULT_H, tol: float | None = None, solution_id: str = "v") -> ResidualReport:
    """Residual of beta v_t = v_zz + (nu/z) v_z; v is an Expr in (z, t) or a callable."""
    beta, nu = float(beta), float(nu)
    if isinstance(v, ex.Expr) and method in ("auto", "symbolic"):
        jet = _symbolic_jet(v, None)
        tol = SYMBOLIC_TOL if tol is None else tol
        label = "symbolic"
    else:
        f = ex.compile_expr(v) if isinstance(v, ex.Expr) else v
        g = (lambda z, t: f({"z": z, "t": t})) if isinstance(v, ex.Expr) else f
        jet = lambda z, t: _fd_jet(g, z, t, h)
        tol = NUMERIC_TOL if tol is None else tol
        label = f"numeric-FD h={h:g}"
    pts, res = [], []
    for z, t in grid.points():
        w, wz, wzz, wt = jet(z, t)
        pts.append((z, t))
        res.append(abs(beta * wt - wzz - nu / z * wz))
    return _report(solution_id, label, grid, res, pts, tol)


def residual_solution(s, grid: Grid | None = None, **kw) -> ResidualReport:
    """v-form solutions are checked against the linear equation when a v exists, else the PDE."""
    return residual_pde(s, s.model, grid, **kw)


def perturbed(s, amount: float = 0.01):
    """Negative control: u + amount*z with the same metadata."""
    from .solutions import InvariantSolution

    u_expr = ex.simplify(s.u_expr + ex.Const(ex.to_fraction(amount)) * ex.Z) if s.u_expr is not None else None
    f = s.evaluator
    return InvariantSolution(
        s.id + "+perturbed", s.generator, dict(s.params), s.kind, lambda z, t: f(z, t) + amount * z,
        model=s.model, u_expr=u_expr, validity=s.validity, provenance="negative control",
    )


# ---------------------------------------------------------------------------
# finite-difference solver


@dataclass
class GridSolution:
    z: np.ndarray
    t: np.ndarray
    u: np.ndarray  # shape (len(t), len(z))
    dz: float
    dt: float
    newton_iterations: list = field(default_factory=list)

    def conserved(self, model: CoefficientModel, n=-1) -> float:
        """Trapezoid integral of E(u) z^nu, E = int C du."""
        w = np.full_like(self.z, self.dz)
        w[0] = w[-1] = self.dz / 2
        return float(np.sum(w * self.z ** float(model.nu) * model.E_array(self.u[n])))


def fd_solve(
    model: CoefficientModel,
    z_range,
    t_range,
    Nz: int,
    Nt: int,
    initial,
    boundary=None,
    newton_tol: float = 1e-12,
    max_newton: int = 50,
) -> GridSolution:
    """Backward Euler, conservative centered differences, Newton per step.

    Node i carries the cell weight z_i^nu dz (half at the ends). The face flux
    is z_{i+1/2}^nu K((u_i + u_{i+1})/2) (u_{i+1} - u_i)/dz. With
    ``boundary=None`` both end faces carry zero flux; otherwise
    ``boundary(z, t)`` supplies Dirichlet values at z0 and z1.
    """
    z0, z1 = map(float, z_range)
    t0, t1 = map(float, t_range)
    if z0 <= 0:
        raise VerifyError("z0 must be > 0")
    if Nz < 8 or Nt < 8:
        raise VerifyError("Nz and Nt must be >= 8")
    nu = float(model.nu)
    z = np.linspace(z0, z1, Nz + 1)
    t = np.linspace(t0, t1, Nt + 1)
    dz, dt = z[1] - z[0], t[1] - t[0]
    zf = (0.5 * (z[:-1] + z[1:])) ** nu  # face weights z_{i+1/2}^nu
    w = z**nu * dz
    dirichlet = boundary is not None
    if not dirichlet:
        w[0] *= 0.5
        w[-1] *= 0.5
    u = np.array([initial(zi) for zi in z], dtype=float)
    out = np.empty((Nt + 1, Nz + 1))
    out[0] = u
    iters = []
    lo, hi = model.u_domain
    for n in range(1, Nt + 1):
        E_old = model.E_array(u)
        un = u.copy()
        if dirichlet:
            un[0] = boundary(z0, t[n])
            un[-1] = boundary(z1, t[n])
        for k in range(1, max_newton + 1):
            if np.any(un <= lo) or np.any(un >= hi):
                raise VerifyError(f"u left u_domain at step {n}")
            m = 0.5 * (un[:-1] + un[1:])
            Km, Kpm = model.K_array(m), model.K_prime_array(m)
            du = un[1:] - un[:-1]
            flux = zf * Km * du / dz
            F = w * (model.E_array(un) - E_old) / dt
            F[:-1] -= flux
            F[1:] += flux
            # derivatives of flux_{i+1/2} with respect to u_i and u_{i+1}
            dfl = zf * (0.5 * Kpm * du - Km) / dz
            dfr = zf * (0.5 * Kpm * du + Km) / dz
            diag = w * model.C_array(un) / dt
            diag[:-1] -= dfl
            diag[1:] += dfr
            upper = -dfr.copy()  # dF_i/du_{i+1}
            lower = dfl.copy()  # dF_{i+1}/du_i
            if dirichlet:
                F[0] = F[-1] = 0.0
                diag[0] = diag[-1] = 1.0
                upper[0] = 0.0
                lower[-1] = 0.0
            ab = np.zeros((3, Nz + 1))
            ab[0, 1:] = upper
            ab[1] = diag
            ab[2, :-1] = lower
            step = solve_banded((1, 1), ab, -F)
            un = un + step
            if np.max(np.abs(step)) < newton_tol * max(1.0, np.max(np.abs(un))):
                break
        else:
            raise NewtonDivergence(f"Newton did not converge at step {n}", n, float(np.max(np.abs(F))))
        iters.append(k)
        u = un
        out[n] = u
    return GridSolution(z, t, out, dz, dt, iters)


@dataclass
class ConvergenceRow:
    nz: int
    nt: int
    h: float
    error: float
    order: float | None


def convergence_study(model: CoefficientModel, reference, refinements, z_range=(0.5, 1.5), t_range=(1.0, 1.25)):
    """L-infinity errors at the final time against ``reference(z, t)`` and observed orders."""
    rows = []
    prev = None
    for Nz, Nt in refinements:
        sol = fd_solve(model, z_range, t_range, Nz, Nt, lambda zz: reference(zz, t_range[0]), boundary=reference)
        exact = np.array([reference(zz, t_range[1]) for zz in sol.z])
        err = float(np.max(np.abs(sol.u[-1] - exact)))
        order = None
        if prev is not None and err > 0 and prev[1] > 0:
            order = math.log(prev[1] / err) / math.log(prev[0] / sol.dz)
        rows.append(ConvergenceRow(Nz, Nt, float(sol.dz), err, order))
        prev = (sol.dz, err)
    return rows
