import pytest

from hojabr import ast as A
from hojabr.errors import CheckError
from hojabr.syntax import parse, parse_constraint, parse_rule, print_constraint


def test_nodes_are_structural_and_hashable():
    a = A.atom("R", ["x", 1])
    b = A.atom("R", ["x", 1])
    assert a == b and hash(a) == hash(b)
    assert {a, b} == {a}


def test_literal_equality_distinguishes_types():
    assert A.Lit(1) != A.Lit(1.0)
    assert A.Lit(True) != A.Lit(1)
    assert A.Lit(2.5) == A.Lit(2.5)


def test_rule_equality_ignores_location():
    r1 = parse_rule("Q(x) := R(x)")
    r2 = A.Rule(r1.head, r1.action, r1.constraint, r1.expr, line=40, column=3)
    assert r1 == r2


def test_access_levels_and_flat_args():
    acc = A.access("B", ["i"], ["j", "k"])
    assert acc.levels == (1, 2)
    assert acc.flat_args == (A.Var("i"), A.Var("j"), A.Var("k"))


def test_conj_flattens_and_groups_disjunctions():
    x = A.atom("R", ["x"])
    y = A.atom("S", ["x"])
    z = A.Or((x, y))
    out = A.conj([A.And((x, y)), z])
    assert out == A.And((x, y, A.Group(z)))
    with pytest.raises(ValueError):
        A.conj([])


def test_conjuncts_look_through_groups():
    c = parse_constraint("R(x), (S(x), T(x)), x > 1")
    assert [type(k).__name__ for k in A.conjuncts(c)] == ["Atom", "Atom", "Atom", "Compare"]


@pytest.mark.parametrize(
    "src, expected",
    [
        ("x in [1, 2]", "x = 1 or x = 2"),
        ("0 <= i < n", "0 <= i, i < n"),
        ("match j case 0 -> v = a case 1 -> v = b", "(j = 0, v = a) or (j = 1, v = b)"),
        ("x: int", "type(x, int)"),
    ],
)
def test_desugar_sugar_forms(src, expected):
    assert print_constraint(A.desugar_constraint(parse_constraint(src))) == expected


def test_desugared_program_has_no_sugar():
    prog = parse("Q(x) := R(x), 0 < x < 9, x in [1, 3]\nP(v) := match v case 1 -> R(v)")
    assert not A.is_desugared(prog)
    assert A.is_desugared(A.desugar(prog))


def test_duplicate_match_case_is_rejected():
    with pytest.raises(CheckError) as info:
        A.desugar(parse("Q(v) := R(v), match v case 1 -> v = 1 case 1 -> v = 2"))
    assert info.value.code == "duplicate-case"


def test_free_variables_exclude_nested_relation_variables():
    rule = parse_rule("Q(x) := (Rh(a)(b) := R(a, b)), Rh(x)(y), card(B, n)")
    assert A.relation_variables(rule) == {"Rh"}
    assert A.free_variables(rule) == {"x", "y", "n", "a", "b"}


def test_cei_relation_and_variable_args():
    cei = parse_constraint("card(B, n, m)")
    assert A.cei_relation_arg(cei) == "B"
    assert A.cei_variable_args(cei) == (A.Var("n"), A.Var("m"))
    assert A.constraint_vars(cei) == {"n", "m"}


def test_rename_relations_touches_head_and_body():
    rule = parse_rule("Q(x) := R(x), not(S(x))")
    out = A.rename_relations(rule, {"R": "R2", "Q": "Q2"})
    assert out.head.rel == "Q2"
    assert {a.rel for a in A.rule_accesses(out)} >= {"R2", "S"}
