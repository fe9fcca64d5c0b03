import numpy as np
import pytest

from conftest import corpus_db, corpus_program
from hojabr import ast as A
from hojabr.errors import LoweringError
from hojabr.evaluator import run_program
from hojabr.relation import Database, from_dense
from hojabr.slangs import CATALOG, STRATEGIES, convert_database, get, lift, lower_join, lower_tensor, natural_form, validate
from hojabr.syntax import parse
from randgen import random_join_db

TWO_WAY = parse("Q(a,b,c) := R(a,b), S(b,c)")
MV = parse("A(i) := b * c if b = B(i)(j), c = C(j), card(B, 3, 4), card(C, 4), 0 <= i < 3, 0 <= j < 4")


def _rename(program, mapping):
    return A.Program(tuple(A.rename_relations(r, mapping) for r in program.statements))


@pytest.mark.parametrize(
    "strategy, query, expected",
    [
        ("nlj", TWO_WAY, "fig4_nlj"),
        ("hash", TWO_WAY, "fig4_hash"),
        ("sort-merge", TWO_WAY, "fig4_smj"),
        ("generic", "fig5_query", "fig5_generic"),
        ("free", "fig5_query", "fig5_free"),
    ],
)
def test_join_lowering_reproduces_corpus(strategy, query, expected):
    q = corpus_program(query) if isinstance(query, str) else query
    assert lower_join(q, strategy) == corpus_program(expected)


def test_diamond_lowering_matches_corpus_up_to_source_name():
    got = lower_join(corpus_program("fig5_diamond_query"), "diamond")
    # the transcribed plan scans R where the query names R1
    assert got == _rename(corpus_program("fig5_diamond"), {"R": "R1"})


def test_natural_form_merges_equalities():
    nj = natural_form(parse("Q(a, c) := R(a, b), S(b', c), (b = b')").rules[0])
    assert nj.atoms == (("R", ("a", "b")), ("S", ("b", "c")))
    assert nj.rule() == parse("Q(a, c) := R(a, b), S(b, c)").rules[0]


@pytest.mark.parametrize("name", ["fig4_nlj", "fig4_hash", "fig4_smj", "fig5_generic", "fig5_free"])
def test_lift_inverts_lowering(name):
    lifted = lift(corpus_program(name))
    query = TWO_WAY if name.startswith("fig4") else corpus_program("fig5_query")
    assert lifted == query


@pytest.mark.parametrize("strategy", STRATEGIES)
@pytest.mark.parametrize("seed", range(5))
def test_lowered_triangle_matches_logical(strategy, seed):
    q = parse("Q(a, b, c) := R(a, b), S(b, c), T(a, c)")
    db = random_join_db(seed, {"R": 2, "S": 2, "T": 2}, max_tuples=30, max_key=6)
    expected, _ = run_program(q, db)
    got, _ = run_program(lower_join(q, strategy, prefix="L"), db)
    assert got["Q"].to_dict() == expected["Q"].to_dict()


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_lowered_programs_stay_in_physical_join(strategy):
    q = parse("Q(a, b, c) := R(a, b), S(b, c), T(a, c)")
    assert validate(lower_join(q, strategy), "physical-join").ok


@pytest.mark.parametrize(
    "thunk, code",
    [
        (lambda: lower_join(TWO_WAY, "diamond"), "inapplicable"),
        (lambda: lower_join(TWO_WAY, "zigzag"), "usage"),
        (lambda: lower_join(parse("Q(a) := R(a), not(S(a))"), "hash"), "inapplicable"),
        (lambda: lift(parse("P(x) := (Zx := Q(x)), Zx()")), "unrecognized"),
        (lambda: lower_tensor(parse("A(i) := b * c if b = B(i), c = C(i), card(B, 3), card(C, 3), 0 <= i < 3"), "csr"), "csr-order"),
        (lambda: lower_tensor(parse("A(i) := b + c if b = B(i)(j), c = C(j), card(B, 3, 3), card(C, 3), 0 <= i < 3, 0 <= j < 3"), "csr"), "non-annihilating"),
        (lambda: lower_tensor(parse("A(i) := b * c if b = B(i)(j), c = C(j)"), "dense"), "shape-incomplete"),
    ],
)
def test_lowering_errors(thunk, code):
    with pytest.raises(LoweringError) as info:
        thunk()
    assert info.value.code == code


def test_csr_lowering_reproduces_corpus():
    assert lower_tensor(corpus_program("fig6_dense"), "csr") == corpus_program("fig6_csr")


@pytest.mark.parametrize("fmt", ["dense", "coo", "csr"])
def test_tensor_formats_agree_with_numpy(fmt):
    rng = np.random.default_rng(11)
    B = rng.normal(size=(3, 4))
    B[rng.random(B.shape) < 0.5] = 0.0
    C = rng.normal(size=4)
    db = Database().put("B", from_dense(B, (1, 1))).put("C", from_dense(C))
    out, _ = run_program(lower_tensor(MV, fmt), convert_database(db, MV, fmt))
    got = np.array([out["A"].get((i,)) for i in range(3)])
    assert np.allclose(got, B @ C, atol=1e-12)


def test_coo_lowering_uses_coordinate_atoms():
    text = str(lower_tensor(MV, "coo").rules[0].constraint)
    assert "B_coo" in text and "C_coo" in text


def test_fig6_programs_agree():
    dense, _ = run_program(corpus_program("fig6_dense"), corpus_db("fig6_dense"))
    B = np.array([[1.0, 0.0, 2.0], [0.0, 3.0, 0.0]])
    C = np.array([4.0, 5.0, 6.0])
    assert dense["A"].to_dict() == {k: v for k, v in np.ndenumerate(B * C) if v}


def test_structured_matches_toeplitz():
    out, _ = run_program(corpus_program("fig6_structured"), corpus_db("fig6_structured"))
    col, c = np.array([1.0, 2.0, 3.0]), np.array([1.0, 10.0, 100.0])
    B = np.zeros((5, 3))
    for j in range(3):
        B[j : j + 3, j] = col
    expected = {k: v for k, v in np.ndenumerate(B * c) if v}
    assert out["A"].to_dict() == pytest.approx(expected)


def test_catalog():
    assert set(CATALOG) == {
        "logical-declarative", "logical-join", "physical-join", "dense-tensor",
        "sparse-tensor", "sql-core", "einsum-core",
    }
    assert "logical-join" in get("logical-join").describe()
    with pytest.raises(KeyError):
        get("nope")


@pytest.mark.parametrize(
    "src, slang, ok",
    [
        ("Q(a, c) := R(a, b), S(b, c)", "logical-join", True),
        ("Q(a) := R(a), not(S(a))", "logical-join", False),
        ("Q(a) := R(a), a > 1", "logical-join", False),
        ("Q(a) := sum(v) if T(a, v)", "sql-core", True),
        ("Q(a) := R(a), not(S(a))", "sql-core", False),
        ("A(i) := b * c if b = B(i)(j), c = C(j), card(B, 2, 2), card(C, 2), 0 <= i < 2, 0 <= j < 2", "einsum-core", True),
        ("A(i) := relu(b) if b = B(i), card(B, 2), 0 <= i < 2", "einsum-core", False),
        ("A(i) := relu(b) if b = B(i), card(B, 2), 0 <= i < 2", "dense-tensor", True),
    ],
)
def test_validate(src, slang, ok):
    res = validate(parse(src), slang)
    assert res.ok is ok
    assert bool(res.violations) is not ok
