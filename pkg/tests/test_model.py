import math
from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given, strategies as st

from radheat import expr as ex
from radheat.model import (
    ConstantRatio,
    ModelError,
    SingularityError,
    build_model,
    model_from_mapping,
    parse_model_file,
    with_nu,
)


def test_power_equal_exponents_is_constant_ratio():
    m = build_model("power", 2, k0=2, m=3, c0=5, n=3)
    rc = m.ratio_class()
    assert isinstance(rc, ConstantRatio)
    assert rc.beta == Fr(5, 2)


def test_exp_equal_rates_is_constant_ratio():
    m = build_model("exp", 1, k0=4, lam=2, c0=1, mu=2)
    assert m.is_constant_ratio and m.beta == Fr(1, 4)


def test_nonconstant_ratio_has_F():
    m = build_model("power", 3, k0=1, m=1, c0=1, n=3)
    assert not m.is_constant_ratio
    with pytest.raises(SingularityError):
        build_model("power", 3, k0=1, m=1, c0=1, n=1).F(1.0)
    # F (C'/C - K'/K) = 1
    for u in np.linspace(0.2, 4, 15):
        assert math.isclose(m.F(u) * (m.C_prime(u) / m.C(u) - m.K_prime(u) / m.K(u)), 1.0, rel_tol=1e-12)


@pytest.mark.parametrize(
    "family, params",
    [
        ("power", dict(k0=2, m=Fr(1, 2), c0=1, n=2)),
        ("power", dict(k0=1, m=-1, c0=1, n=1)),
        ("exp", dict(k0=1, lam=Fr(-1, 2), c0=3, mu=1)),
        ("exp", dict(k0=2, lam=0, c0=1, mu=1)),
        ("linear", dict(k0=1, a=1, b=2, c0=1, c=2, d=1)),
        ("linear", dict(k0=3, a=2, b=0, c0=1, c=1, d=1)),
    ],
)
def test_J_derivative_and_inverse(family, params):
    m = build_model(family, Fr(3, 2), **params)
    lo, hi = m.u_domain
    lo = max(lo, -3.0) + 0.1
    hi = min(hi, 3.0) - 0.1
    for u in np.linspace(lo, hi, 9):
        h = 1e-5
        dJ = (m.J(u + h) - m.J(u - h)) / (2 * h)
        assert math.isclose(dJ, m.K(u), rel_tol=1e-7)
        assert math.isclose(m.J_inverse(m.J(u)), u, rel_tol=1e-10, abs_tol=1e-12)


@given(st.floats(0.3, 5.0), st.floats(0.3, 5.0))
def test_power_J_inverse_round_trip(u, k0):
    m = build_model("power", 2, k0=Fr(k0).limit_denominator(100), m=2, c0=1, n=1)
    assert math.isclose(m.J_inverse(m.J(u)), u, rel_tol=1e-12)


def test_J_inverse_range_violation():
    m = build_model("power", 2, k0=1, m=1, c0=1, n=2)
    with pytest.raises(ex.DomainError):
        m.J_inverse(-1.0)


def test_custom_model():
    m = build_model("custom", 2, u_domain=(0.1, 5), K="1 + u^2", C="2*(1 + u^2)")
    assert m.is_constant_ratio and float(m.beta) == pytest.approx(2.0, rel=1e-12)
    m2 = build_model("custom", 2, u_domain=(0.1, 5), K="exp(u)", C="u")
    assert not m2.is_constant_ratio
    # J anchored at the middle of the domain
    assert abs(m2.J(m2.u_ref)) < 1e-12
    u = 1.7
    assert math.isclose(m2.J_inverse(m2.J(u)), u, rel_tol=1e-9)


def test_bad_models():
    with pytest.raises(ModelError):
        build_model("power", 0, k0=1, m=1, c0=1, n=1)
    with pytest.raises(ModelError):
        build_model("power", 1, k0=-1, m=1, c0=1, n=1)
    with pytest.raises(ModelError):
        build_model("power", 1, k0=1, m=1, c0=1)
    with pytest.raises(ModelError):
        build_model("linear", 1, k0=1, a=1, b=1, c0=1, c=-1, d=-1, u_domain=(0, 5))
    with pytest.raises(ModelError):
        build_model("custom", 1, K="u", C="1")
    with pytest.raises(ModelError):
        build_model("nope", 1)


def test_model_file_parsing():
    text = """
    # a comment
    family = custom
    nu = 3/2
    K = "exp(u)"   # conductivity
    C = "1 + u^2"
    u_min = -1
    u_max = 2
    """
    m = model_from_mapping(parse_model_file(text))
    assert m.family == "custom" and m.nu == Fr(3, 2)
    assert m.u_domain == (-1.0, 2.0)
    assert math.isclose(m.K(0.3), math.exp(0.3))
    with pytest.raises(ModelError, match="line 2"):
        parse_model_file("family = power\nnu\n")
    with pytest.raises(ModelError, match="nu"):
        model_from_mapping({"family": "power", "k0": "1", "m": "1", "c0": "1", "n": "1"})


def test_conserved_density():
    m = build_model("power", 2, k0=1, m=1, c0=3, n=2)
    # E = c0 u^3 / 3
    assert math.isclose(m.E(2.0), 8.0, rel_tol=1e-12)
    assert np.allclose(m.E_array(np.array([1.0, 2.0])), [1.0, 8.0])


def test_with_nu_keeps_coefficients():
    m = build_model("exp", 1, k0=1, lam=1, c0=1, mu=2)
    m2 = with_nu(m, 3)
    assert m2.nu == 3 and m2.K(0.5) == m.K(0.5)
