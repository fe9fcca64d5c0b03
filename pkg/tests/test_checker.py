import pytest

from conftest import CORPUS, INDEX, corpus_db, corpus_program, fixture_program
from hojabr import semiring as S
from hojabr.check import check_program, stratify
from hojabr.errors import CheckError
from hojabr.relation import Database, Relation
from hojabr.storage import load_manifest
from hojabr.syntax import parse


@pytest.fixture
def db():
    out = Database()
    out.put("R", Relation((1,)))
    out.put("S", Relation((2,)))
    out.put("X", Relation((2,), S.REAL))
    return out


def codes(src, db=None, strict=False):
    return [d.code for d in check_program(parse(src), db, strict=strict).errors]


@pytest.mark.parametrize(
    "code, src",
    [
        ("unsafe-variable", "Q(x, y) := R(x)"),
        ("unsafe-negation", "Q(x) := R(x), not(S(x, y))"),
        ("unstratifiable", "P(x) := R(x), not(P(x))"),
        ("type-conflict", 'Q(x) := R(x), x = 1, x = "a"'),
        ("unknown-cei", "Q(x) := R(x), foo(x)"),
        ("undeclared", "Q(x) := Nope(x)"),
        ("aggregate-position", "Q(x) := sum(v) + 1 if X(x, v)"),
        ("kind", "Q(x) := R(x, x)"),
        ("real-recursion", "P(x, y) := v if X(x, y) = v\nP(x, z) := a * b if P(x, y) = a, X(y, z) = b"),
        ("semiring-mismatch", "Q(x) := R(x)\nQ(x) := 1.0 if R(x)"),
        ("order-column", "Q(x) := S(x, y), order(y)"),
        ("duplicate-case", "Q(v) := R(v), match v case 1 -> v = 1 case 1 -> v = 2"),
    ],
)
def test_each_check_has_its_code(code, src, db):
    assert code in codes(src, db)


def test_clean_program_has_no_diagnostics(db):
    res = check_program(parse("Q(x, y) := R(x), S(x, y), not(S(y, x))"), db)
    assert res.ok and not res.diagnostics


def test_raise_on_error(db):
    res = check_program(parse("Q(x, y) := R(x)"), db)
    with pytest.raises(CheckError):
        res.raise_on_error()


def test_negation_of_lower_stratum_is_fine(db):
    prog = parse("P(x) := R(x)\nQ(x) := R(x), not(P(x))")
    strata = stratify(prog)
    assert strata.stratum_of("Q") > strata.stratum_of("P")


def test_mutual_negation_is_unstratifiable():
    res = check_program(fixture_program("unstratifiable"))
    assert {d.code for d in res.errors} == {"unstratifiable"}


@pytest.mark.parametrize("name", ["unsafe_negation", "unstratifiable", "type_conflict"])
def test_static_fixtures(name):
    res = check_program(fixture_program(name))
    assert [d.code for d in res.errors] == [name.replace("_", "-")] * len(res.errors)
    assert res.errors


def test_integrity_violation_is_error_only_when_strict():
    prog = fixture_program("integrity_violation")
    data = load_manifest(CORPUS / "data" / "integrity" / "manifest.json")
    lenient = check_program(prog, data)
    assert lenient.ok and [d.code for d in lenient.warnings] == ["integrity-violation"]
    strict = check_program(prog, data, strict=True)
    assert [d.code for d in strict.errors] == ["integrity-violation"]
    assert "(1, 10)" in strict.errors[0].message


def test_integrity_checks_pass_on_clean_data():
    prog = parse("R(a, b), fdep(a)(b)\nR(a, b), pkey(a)")
    data = Database().put("R", Relation((2,), entries=[((1, 2), True), ((2, 2), True)]))
    assert not check_program(prog, data, strict=True).diagnostics


def test_unique_violation():
    prog = parse("R(a, b), unique(b)")
    data = Database().put("R", Relation((2,), entries=[((1, 2), True), ((2, 2), True)]))
    assert [d.code for d in check_program(prog, data, strict=True).errors] == ["integrity-violation"]


@pytest.mark.parametrize("name", sorted(INDEX))
def test_corpus_checks_clean(name):
    res = check_program(corpus_program(name), corpus_db(name))
    assert res.errors == []
