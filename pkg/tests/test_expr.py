import pytest
from hypothesis import given, settings, strategies as st

from cjid.catalog import load_catalog
from cjid.expr import (
    BinOp, DegreeMismatchError, DSLSyntaxError, Func, ValidationError, degree_rule_ok,
    expand_cyclic, expand_node, parse, parse_expr, parse_one, rank_of, render, render_spec,
)


def test_parse_fitted_constant():
    spec, = parse("@p 4\n@eq E3\ncyc(d[1]*d[2]) == A")
    assert (spec.p, spec.rank, spec.eq) == (4, 2, "E3")
    assert spec.unknowns == ("A",)
    assert spec.to_fit == ("A",)


def test_parse_known_constant_is_lifted():
    spec, = parse("@p 3\n@eq E32\nd[1]*d[2]*d[3] == ((q^2+m-1)/(1-q^2)) * cyc(d[1])")
    assert spec.rank == 3
    assert spec.to_fit == ()
    assert render(spec.constants_known["A"]) == "(q^2+m-1)/(1-q^2)"


def test_name_and_comments():
    spec, = parse('# header\n@p 2\n@eq E23\n@name "two"\nd[1]*d[2] == sqrt(1-m)  # tail')
    assert spec.name == "two"


def test_chained_equality_splits():
    specs = parse("@p 4\n@eq E26\nd[1]*d[3] == d[2]*d[4] == sqrt(1-m)")
    assert [s.name for s in specs] == ["E26a", "E26b"]
    assert all(render(s.rhs) == "sqrt(1-m)" for s in specs)


@pytest.mark.parametrize("src,exc,fragment", [
    ("@p 4\ncyc(d[1]*d[9]) == A", ValidationError, "outside 1..4"),
    ("@p 3\nacyc(d[1]) == 0", ValidationError, "even p"),
    ("@p 3\nd[1]*ts[2] == A", ValidationError, "mixes"),
    ("@p 3\n@spacing full\nd[1]*d[2] == A", ValidationError, "contradicts"),
    ("@p 3\nA*d[1] == d[2]", ValidationError, "lhs"),
    ("d[1] == A", DSLSyntaxError, "@p"),
    ("@p 3\nd[1]*d[2 == A", DSLSyntaxError, "column"),
    ("@p 3\nfoo(d[1]) == A", DSLSyntaxError, "unknown name"),
    ("@p 1\nd[1] == A", ValidationError, "p must be"),
])
def test_parse_errors(src, exc, fragment):
    with pytest.raises(exc, match=fragment):
        parse(src)


def test_syntax_error_position():
    with pytest.raises(DSLSyntaxError) as info:
        parse("@p 3\n\nd[1]*d[2] == (A")
    assert info.value.line == 3
    assert info.value.col > 0


def test_rank_of():
    assert rank_of(parse_expr("cyc(d[1]*d[2])")) == 2
    assert rank_of(parse_expr("cyc(tc[1]*td[2]*td[3])")) == 3
    assert rank_of(parse_expr("d[1]^3*s[2]")) == 4
    with pytest.raises(DegreeMismatchError):
        rank_of(parse_expr("d[1]*d[2] + d[1]"))


def test_expand_cyclic_four_points():
    spec = parse_one("@p 4\ncyc(d[1]*d[2]) == A")
    assert render(expand_cyclic(spec).lhs) == "d[1]*d[2]+d[2]*d[3]+d[3]*d[4]+d[4]*d[1]"


def test_expand_alternating():
    out = render(expand_node(parse_expr("acyc(d[1]^2*(d[2]+d[4]))"), 4))
    assert out.count("-") == 2
    assert out.startswith("d[1]^2*(d[2]+d[4])")


def test_expand_two_points():
    assert render(expand_node(parse_expr("cyc(d[1])"), 2)) == "d[1]+d[2]"


def test_degree_rule():
    assert degree_rule_ok(parse_one("@p 3\ncyc(d[1]^3) == A*cyc(d[1]) + B*cyc(d[1]^3)")) is False
    assert degree_rule_ok(parse_one("@p 3\ncyc(d[1]*d[2]*d[3]) == A*cyc(d[1]^2)")) is False
    assert degree_rule_ok(parse_one("@p 3\ncyc(d[1]^3*d[2]) == A*cyc(d[1]^2) + B"))


def _catalog_specs():
    for entry in load_catalog():
        yield from entry.specs


@pytest.mark.parametrize("spec", list(_catalog_specs()), ids=lambda s: s.name)
def test_render_parse_fixed_point(spec):
    again = parse_one(render_spec(spec))
    assert (again.lhs, again.rhs, again.p) == (spec.lhs, spec.rhs, spec.p)
    assert rank_of(expand_cyclic(spec).lhs) == spec.rank


# random homogeneous polynomials of the lattice functions
_kinds = st.sampled_from(["s", "c", "d"])


@st.composite
def monomials(draw, p, degree):
    parts = []
    for _ in range(degree):
        parts.append(f"{draw(_kinds)}[{draw(st.integers(1, p))}]")
    return "*".join(parts)


@st.composite
def identities(draw):
    p = draw(st.integers(2, 8))
    r = draw(st.integers(1, 4))
    terms = draw(st.lists(monomials(p, r), min_size=1, max_size=3))
    body = "+".join(terms)
    lhs = f"cyc({body})" if draw(st.booleans()) else body
    coef = draw(st.sampled_from(["A", "sqrt(1-m)", "q*(q+2)", "2*t*(1+t^2)", "(q^2-1)/m"]))
    return f"@p {p}\n{lhs} == {coef}"


@settings(max_examples=150, deadline=None)
@given(identities())
def test_round_trip_property(src):
    spec = parse_one(src)
    again = parse_one(render_spec(spec))
    assert again.lhs == spec.lhs and again.rhs == spec.rhs
    assert rank_of(expand_cyclic(spec).lhs) == spec.rank


def test_ast_is_immutable():
    f = Func("d", 1)
    with pytest.raises(AttributeError):
        f.index = 2
    assert isinstance(parse_expr("d[1]+d[2]"), BinOp)
