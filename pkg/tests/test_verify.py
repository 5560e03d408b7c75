import json
import math

import numpy as np
import pytest

from radheat import expr as ex
from radheat.model import build_model
from radheat.solutions import build_solution
from radheat.verify import (
    REPORT_FIELDS,
    Grid,
    VerifyError,
    convergence_study,
    fd_solve,
    residual_linear,
    residual_pde,
)

SPH = build_model("exp", 2, k0=1, lam=1, c0=1, mu=1)


def test_report_schema():
    s = build_solution("eq137", SPH)
    d = json.loads(residual_pde(s).to_json())
    assert tuple(d) == REPORT_FIELDS
    assert d["pass"] is True and d["method"] == "symbolic"


def test_grid_parsing():
    g = Grid.parse("5x7", ((1, 2), (3, 4)))
    assert (g.nz, g.nt, g.z0, g.t1) == (5, 7, 1.0, 4.0)
    g = Grid.parse("0.5:1.5:11,1:2:3", None)
    assert len(list(g.points())) == 33


def test_symbolic_and_numeric_paths_agree():
    s = build_solution("eq142", SPH)
    sym = residual_pde(s, method="symbolic")
    num = residual_pde(s, method="numeric")
    assert sym.passed and num.passed
    assert num.tolerance == 1e-5 and num.method.startswith("numeric")


def test_linear_residual_heat_kernel():
    beta, nu = 2.0, 1.0
    v = ex.parse("t^(-1)*exp(-2*z^2/(4*t))")
    rep = residual_linear(v, beta, nu, Grid(0.5, 2, 0.5, 2, 10, 10))
    assert rep.passed and rep.max_residual < 1e-12
    bad = residual_linear(ex.parse("t^(-1)*exp(-z^2/(4*t))"), beta, nu, Grid(0.5, 2, 0.5, 2, 10, 10))
    assert not bad.passed


def test_unevaluable_nodes_fail_instead_of_raising():
    s = build_solution("eq137", SPH)
    grid = Grid(-1.0, 1.0, 0.5, 1.0, 3, 3)
    with pytest.raises(VerifyError):
        residual_pde(s, grid=grid, method="numeric")
    rep = residual_pde(s, grid=grid, method="numeric", tolerate_failures=True)
    assert not rep.passed and rep.to_dict()["max_residual"] is None


def test_fd_second_order():
    s = build_solution("eq137", SPH, C0=1)
    rows = convergence_study(SPH, s.evaluate, [(16, 16), (32, 64), (64, 256), (128, 1024)])
    orders = [r.order for r in rows[1:]]
    assert all(1.7 <= q <= 2.3 for q in orders), orders
    assert rows[-1].error < rows[0].error / 50


@pytest.mark.parametrize(
    "model",
    [
        SPH,
        build_model("power", 1, k0=1, m=2, c0=1, n=1),
        build_model("linear", 3, k0=1, a=1, b=1, c0=1, c=1, d=2),
    ],
)
def test_zero_flux_conservation(model):
    g = fd_solve(model, (0.5, 1.5), (0.0, 0.5), 48, 40, lambda z: 1 + 0.4 * math.cos(math.pi * (z - 0.5)))
    q = np.array([g.conserved(model, n) for n in range(len(g.t))])
    assert np.max(np.abs(q - q[0])) / abs(q[0]) < 1e-10
    # flattens towards a constant
    assert np.ptp(g.u[-1]) < np.ptp(g.u[0])


def test_constant_data_stays_constant():
    g = fd_solve(SPH, (0.5, 1.5), (0.0, 1.0), 32, 32, lambda z: 0.7)
    assert np.max(np.abs(g.u - 0.7)) < 1e-14
    g = fd_solve(SPH, (0.5, 1.5), (0.0, 1.0), 32, 32, lambda z: 0.7, boundary=lambda z, t: 0.7)
    assert np.max(np.abs(g.u - 0.7)) < 1e-14


def test_fd_input_checks():
    with pytest.raises(VerifyError):
        fd_solve(SPH, (0.0, 1.0), (0, 1), 16, 16, lambda z: 1.0)
    with pytest.raises(VerifyError):
        fd_solve(SPH, (0.5, 1.0), (0, 1), 4, 16, lambda z: 1.0)
    m = build_model("power", 1, k0=1, m=1, c0=1, n=1)
    with pytest.raises(VerifyError, match="u_domain"):
        fd_solve(m, (0.5, 1.5), (0, 1), 16, 16, lambda z: z - 1.0)
