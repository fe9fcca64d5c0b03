import json

import numpy as np
import pytest

from hojabr import semiring as S
from hojabr.errors import KindError, ShapeError
from hojabr.relation import (
    TRIE,
    Database,
    DenseRelation,
    Relation,
    build_layout,
    from_csr,
    from_dense,
    merge,
    ordered,
    to_coo,
    to_csr,
)
from hojabr.storage import DataError, dump_csv, load_csv, load_manifest, load_manifest_obj, relation_to_json


def test_merge_adds_under_semiring_and_elides_zero():
    r = Relation((2,), S.NATURAL)
    r.merge((1, 2), 3).merge((1, 2), 4)
    assert r.get((1, 2)) == 7
    r.set((1, 2), 0)
    assert (1, 2) not in r and len(r) == 0
    assert r.get((9, 9)) == 0


def test_boolean_merge_is_or():
    r = Relation((1,))
    r.merge((1,)).merge((1,))
    assert r.to_dict() == {(1,): True}


def test_merge_refuses_foreign_semiring():
    with pytest.raises(KindError):
        merge(Relation((1,), S.REAL), (1,), 1.0, S.NATURAL)


def test_arity_mismatch_is_a_kind_error():
    with pytest.raises(KindError):
        Relation((2,)).merge((1,))


def test_levels_and_sub_relations():
    r = Relation((1, 1), S.REAL, entries={(0, 1): 2.0, (0, 2): 3.0, (1, 1): 5.0})
    assert r.depth == 2 and r.arity == 2
    row = r.lookup((0,))
    assert row.levels == (1,) and row.to_dict() == {(1,): 2.0, (2,): 3.0}
    assert r.lookup((7,)).is_empty()
    assert [k for k, _ in r.scan()] == [(0,), (1,)]


def test_frozen_relation_rejects_writes():
    r = Relation((1,)).freeze()
    with pytest.raises(RuntimeError):
        r.merge((1,))


def test_ordered_layout_iterates_in_column_order():
    r = Relation((2,), entries=[((3, "b"), True), ((1, "z"), True), ((2, "a"), True)])
    by_second = build_layout(r, ordered(1))
    assert [k for k, _ in by_second.items()] == [(2, "a"), (3, "b"), (1, "z")]
    assert by_second.same_as(r)


def test_build_layout_permutes_and_resplits():
    r = Relation((2,), entries=[((1, 10), True), ((2, 20), True)])
    t = build_layout(r, TRIE, levels=(1, 1), perm=(1, 0))
    assert t.levels == (1, 1)
    assert t.lookup((10,)).to_dict() == {(1,): True}
    with pytest.raises(KindError):
        build_layout(r, TRIE, perm=(0, 0))


def test_select_returns_distinct_prefixes():
    r = Relation((3,), entries=[((1, 2, 3), True), ((1, 2, 4), True), ((2, 2, 3), True)])
    assert sorted(r.select(2, ())) == [(1, 2), (2, 2)]
    assert r.select(2, ((0, 2),)) == [(2, 2)]
    assert r.select(1, ((0, [1],),)) == []


def test_dense_relation_cells():
    d = from_dense([[0.0, 1.5], [2.0, 0.0]], levels=(1, 1))
    assert len(d) == 2
    assert d.get((0, 1)) == 1.5 and d.get((5, 5)) == 0.0 and d.get(("a", 0)) == 0.0
    assert sorted(d.items()) == [((0, 1), 1.5), ((1, 0), 2.0)]
    assert d.lookup((1,)).to_dict() == {(0,): 2.0}
    with pytest.raises(ShapeError):
        d.merge((2, 0), 1.0)
    with pytest.raises(ShapeError):
        DenseRelation((1,), (2, 2))


def test_dense_scalar():
    d = from_dense(np.float64(4.0))
    assert d.levels == (0,) and d.get(()) == 4.0


def test_csr_round_trip():
    m = np.array([[0.0, 3.0, 0.0], [4.0, 0.0, 5.0], [0.0, 0.0, 0.0]])
    n, P, I, V = to_csr(from_dense(m, (1, 1)))
    assert n == 3 and P.tolist() == [0, 1, 3, 3] and I.tolist() == [1, 0, 2]
    back = from_csr(n, P, I, V)
    assert back.to_dict() == {(0, 1): 3.0, (1, 0): 4.0, (1, 2): 5.0}
    with pytest.raises(ShapeError):
        from_csr(2, P, I, V)


def test_coo_appends_value_column():
    coo = to_coo(from_dense([[0.0, 2.0]], (1, 1)))
    assert coo.levels == (3,) and coo.to_dict() == {(0, 1, 2.0): True}


def test_database_copy_is_shallow_but_independent():
    db = Database().put("R", Relation((1,)), ["a"])
    cp = db.copy()
    cp.put("S", Relation((1,)))
    assert "S" not in db and cp.attributes["R"] == ("a",)


def test_csv_round_trip(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("a,b,__val\n1,x,2.5\n1,x,0.5\n2,y,1\n")
    rel, attrs = load_csv(p)
    assert attrs == ("a", "b") and rel.semiring is S.REAL
    assert rel.to_dict() == {(1, "x"): 3.0, (2, "y"): 1.0}
    assert dump_csv(rel, attributes=attrs) == "a,b,__val\n1,x,3.0\n2,y,1.0\n"


def test_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1\n")
    with pytest.raises(DataError):
        load_csv(p)
    p.write_text("")
    with pytest.raises(DataError):
        load_csv(p)


def test_manifest_formats(tmp_path):
    (tmp_path / "r.csv").write_text("a,b\n2,1\n1,2\n")
    (tmp_path / "m.json").write_text(json.dumps({"n": 1, "P": [0, 1], "I": [0], "V": [7.0]}))
    spec = {
        "params": {"k": 3},
        "R": {"path": "r.csv", "layout": "ordered", "order": [1], "attributes": ["x", "y"]},
        "W": {"format": "dense-json", "inline": {"shape": [2], "data": [1, 0]}},
        "M": {"path": "m.json", "format": "csr-json", "names": {"P": "MP", "I": "MI", "V": "MV", "n": "mn"}},
    }
    db = load_manifest_obj(spec, tmp_path)
    assert db.params == {"k": 3, "mn": 1}
    assert [k for k, _ in db["R"].items()] == [(2, 1), (1, 2)]
    assert db.attributes["R"] == ("x", "y")
    assert db["W"].to_dict() == {(0,): 1.0}
    assert db["MV"].to_dict() == {(0,): 7.0}
    with pytest.raises(DataError):
        load_manifest_obj({"X": {"path": "r.csv", "format": "parquet"}}, tmp_path)
    with pytest.raises(DataError):
        load_manifest(tmp_path / "missing.json")


def test_relation_json_is_deterministic():
    r = Relation((1,), S.NATURAL, entries={(2,): 1, (1,): 4})
    assert relation_to_json(r) == {
        "levels": [1],
        "semiring": "natural",
        "layout": "flat",
        "entries": [[[1], 4], [[2], 1]],
    }
