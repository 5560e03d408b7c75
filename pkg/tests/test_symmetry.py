from fractions import Fraction as Fr

import pytest
from hypothesis import given, strategies as st

from radheat import expr as ex
from radheat import symmetry as sy
from radheat.model import build_model

NU_VALUES = [Fr(1, 2), Fr(1), Fr(3, 2), Fr(3)]

FAMILIES = [
    ("power", dict(k0=1, m=1, c0=1, n=-1)),
    ("power", dict(k0=1, m=2, c0=1, n=3)),
    ("power", dict(k0=1, m=1, c0=2, n=1)),
    ("exp", dict(k0=1, lam=1, c0=1, mu=2)),
    ("exp", dict(k0=1, lam=1, c0=3, mu=1)),
    ("linear", dict(k0=1, a=1, b=1, c0=1, c=1, d=2)),
    ("linear", dict(k0=1, a=1, b=0, c0=1, c=0, d=1)),
]


def test_classify_power_nu1():
    m = build_model("power", 1, k0=1, m=1, c0=1, n=3)
    cl = sy.classify(m)
    assert not cl.ratio.is_constant
    assert cl.labels() == ["Y1", "Y2", "Y3"]
    assert cl.constants["A"] == 1 and cl.constants["B"] == 0


def test_classify_exp_spherical_constant():
    m = build_model("exp", 2, k0=1, lam=2, c0=5, mu=2)
    cl = sy.classify(m)
    assert cl.ratio.is_constant and cl.ratio.beta == 5
    assert cl.labels() == [f"Yh{i}" for i in range(1, 7)]
    assert cl.case_tag == sy.CONSTANT_SPHERICAL


def test_four_generators_only_at_matching_exponent(power_y4):
    assert sy.classify(power_y4).labels() == ["Y1", "Y2", "Y3", "Y4"]
    assert "Y4" not in sy.classify(build_model("power", 2, k0=1, m=1, c0=1, n=-1)).labels()


@pytest.mark.parametrize("family, params", FAMILIES)
@pytest.mark.parametrize("nu", [Fr(1, 2), 1, 2, 3])
def test_classified_generators_satisfy_determining_equations(family, params, nu):
    m = build_model(family, nu, **params)
    for g in sy.classify(m).generators:
        rep = sy.check_determining(m, g, n_points=30, seed=0)
        assert rep.passed, rep.render()


@pytest.mark.parametrize("family, params", FAMILIES[:5])
def test_bogus_translation_fails(family, params):
    m = build_model(family, 3, **params)
    g = sy.Generator("dz", ex.ONE, ex.ZERO, ex.ZERO)
    rep = sy.check_determining(m, g)
    assert not rep.passed and "uz" in rep.failing


def test_oracle_agrees_with_determining_equations(power_y4):
    for g in sy.classify(power_y4).generators:
        worst, _ = sy.prolongation_residual(power_y4, g)
        assert worst < 1e-6
    worst, _ = sy.prolongation_residual(power_y4, sy.Generator("dz", ex.ONE, ex.ZERO, ex.ZERO))
    assert worst > 1e-2


def test_printed_z_power_generator_is_not_admitted(power_y4):
    g = sy.printed_y4(3, 0)
    assert not sy.check_determining(power_y4, g).passed
    worst, _ = sy.prolongation_residual(power_y4, g)
    assert worst > 1e-3


def test_spherical_printed_variant_fails_where_expected():
    m = build_model("exp", 2, k0=1, lam=1, c0=1, mu=1)
    failing = [g.label for g in sy.classify(m).generators if not sy.check_determining(m, g, variant="printed").passed]
    assert failing == ["Yh1", "Yh2", "Yh4", "Yh5"]


def test_y4_undefined_at_nu2():
    with pytest.raises(sy.CompatibilityError):
        sy.y4_generator(2, sy.y4_exponent(3), 1)


def test_compatibility_relation_power():
    # power law: C = D K exp(-int 1/(A J + B) ...) consistent with m, n
    m = build_model("power", 3, k0=1, m=2, c0=1, n=3)
    A, B = sy.y3_constants(m)
    assert (A, B) == ((m.p("m") + 1) / (m.p("n") - m.p("m")), 0)
    assert sy.link_constant_D_exact(m) == pytest.approx(1.0)


@pytest.mark.parametrize("nu", NU_VALUES)
def test_nonconstant_table(nu):
    gens = sy.nonconstant_table_basis(nu)
    model = build_model("power", nu, k0=1, m=1, c0=1, n=2)
    assert sy.compare_tables(sy.commutator_table(gens, model), sy.expected_nonconstant_table(nu)) == []


@pytest.mark.parametrize("nu", NU_VALUES)
def test_constant_table(nu):
    beta = Fr(2)
    model = build_model("exp", nu, k0=1, lam=0, c0=beta, mu=0)
    table = sy.commutator_table(sy.constant_generators(nu, beta), model)
    assert sy.compare_tables(table, sy.expected_constant_table(nu)) == []


def test_constant_table_entry_value():
    model = build_model("exp", Fr(3, 2), k0=1, lam=0, c0=1, mu=0)
    table = sy.commutator_table(sy.constant_generators(Fr(3, 2), 1), model)
    assert table.entry(0, 2) == [0, -2, 0, Fr(-5, 4)]


def test_spherical_table_single_discrepancy():
    beta = Fr(3)
    model = build_model("exp", 2, k0=1, lam=0, c0=beta, mu=0)
    table = sy.commutator_table(sy.constant_generators(2, beta), model)
    mism = sy.compare_tables(table, sy.expected_spherical_table(beta))
    # only one cell differs; the expected table is not antisymmetric there
    assert [(r, c) for r, c, *_ in mism] == [("Yh2", "Yh4")]
    assert table.entry(1, 3) == [0, 0, 0, Fr(1, 2), 0, 0]
    assert sy.expected_spherical_table(beta).antisymmetry_defect() == pytest.approx(0.75)


def test_nu1_specialized_basis_brackets():
    model = build_model("power", 1, k0=1, m=-1, c0=1, n=1)
    gens = [sy.y1_basic(), sy.y2_basic(), sy.y3_generator(0, 1), sy.y4_generator(1, 0, 1)]
    table = sy.commutator_table(gens, model)
    assert table.entry(0, 3) == [0, 0, Fr(1, 2), 0]
    assert table.entry(2, 3) == [0, 0, 1, 0]


@given(st.sampled_from([Fr(1, 3), Fr(1, 2), Fr(3, 2), Fr(5, 2), Fr(3), Fr(7, 2)]), st.integers(1, 5))
def test_structure_constant_invariants(nu, beta):
    model = build_model("exp", nu, k0=1, lam=0, c0=beta, mu=0)
    table = sy.commutator_table(sy.constant_generators(nu, beta), model)
    assert table.antisymmetry_defect() == 0
    assert table.jacobi_defect() < 1e-12
    n = len(table.labels)
    assert all(c == 0 for i in range(n) for c in table.entry(i, i))


def test_bracket_is_antisymmetric_symbolically(power_y4):
    st_ = power_y4.symbol_table()
    g = sy.classify(power_y4).generators
    a, b = sy.lie_bracket(g[0], g[3], st_), sy.lie_bracket(g[3], g[0], st_)
    for x, y in zip(a.components(), b.components()):
        assert ex.simplify(x + y) == ex.ZERO


def test_closure_failure_reported(power_y4):
    gens = [sy.y2_basic(), sy.Generator("X", ex.parse("t^2"), ex.ZERO, ex.ZERO)]
    with pytest.raises(sy.BracketClosureError):
        sy.commutator_table(gens, power_y4)
