"""Integrity and structural constraints checked against stored data.

Declarations name attributes positionally through an atom in the same
statement, e.g. ``R(a, b), fdep(a)(b)``.  Without an atom, attribute
names are matched against CSV header names recorded in the database.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import ast as A
from .. import kernels
from ..errors import Diagnostic, error, warning
from ..relation import DenseRelation, key_order
from ..syntax import print_constraint
from .types import SCALAR_ALIASES, lit_type

HARD = frozenset({"fdep", "pkey", "unique", "card", "order", "type"})


@dataclass
class Violation:
    kind: str
    relation: str
    message: str
    witnesses: list[tuple] = field(default_factory=list)
    hard: bool = True
    line: int = 0

    def to_diagnostic(self, strict: bool) -> Diagnostic:
        make = error if (strict and self.hard) else warning
        shown = ", ".join(str(w) for w in self.witnesses[:4])
        msg = self.message + (f"; witnesses {shown}" if shown else "")
        return make("integrity-violation", f"{self.kind}: {msg}", rule=self.relation, line=self.line)


def _bindings(decl: A.Constraint, db) -> list[tuple[str, dict[str, int]]]:
    """(relation, attribute -> column) pairs a declaration talks about."""
    out = []
    for c in A.conjuncts(decl):
        c = A.strip_group(c)
        if isinstance(c, A.Atom):
            cols = {}
            for k, a in enumerate(c.access.flat_args):
                if isinstance(a, A.Var):
                    cols.setdefault(a.name, k)
            out.append((c.access.rel, cols))
    return out


def _by_header(names: set[str], db) -> list[tuple[str, dict[str, int]]]:
    out = []
    for rel, attrs in sorted(db.attributes.items()):
        if names <= set(attrs):
            out.append((rel, {a: k for k, a in enumerate(attrs)}))
    return out


def _targets(cei: A.Cei, decl, db, names: set[str]):
    bound = [(r, cols) for r, cols in _bindings(decl, db) if names <= set(cols)]
    return bound or _by_header(names, db)


def _var_names(exprs) -> list[str]:
    return [e.name for e in exprs if isinstance(e, A.Var)]


def _rows(rel) -> list[tuple]:
    return [k for k, _ in rel.items()]


def _codes(rows: list[tuple], cols: list[int]) -> np.ndarray:
    if not rows or not cols:
        return np.zeros((len(rows), len(cols)), np.int64)
    return np.stack([kernels.factorize([r[c] for r in rows]) for c in cols], axis=1)


def _grouped(rows, lhs_cols, rhs_cols):
    lhs = _codes(rows, lhs_cols)
    rhs = _codes(rows, rhs_cols)
    order, starts, conflict = kernels.group_rows(lhs, rhs)
    ends = list(starts[1:]) + [len(rows)]
    return order, starts, ends, conflict


def check_fdep(rel, name, lhs: list[int], rhs: list[int], line=0) -> list[Violation]:
    rows = _rows(rel)
    order, starts, ends, conflict = _grouped(rows, lhs, rhs)
    out = []
    for g in np.flatnonzero(conflict):
        members = [rows[i] for i in order[starts[g]: ends[g]]]
        first = members[0]
        other = next(m for m in members if tuple(m[c] for c in rhs) != tuple(first[c] for c in rhs))
        key = tuple(first[c] for c in lhs)
        out.append(
            Violation(
                "fdep",
                name,
                f"{name} has two tuples agreeing on {key} with different dependent values",
                [first, other],
                line=line,
            )
        )
    return out


def check_key(rel, name, cols: list[int], kind="pkey", line=0) -> list[Violation]:
    rows = _rows(rel)
    order, starts, ends, _ = _grouped(rows, cols, [])
    out = []
    for g in range(len(starts)):
        if ends[g] - starts[g] > 1:
            members = [rows[i] for i in order[starts[g]: ends[g]]]
            key = tuple(members[0][c] for c in cols)
            out.append(
                Violation(kind, name, f"{name} has {len(members)} tuples with key {key}", members, line=line)
            )
    return out


def check_degree(rel, name, cols: list[int], bound: int, line=0) -> list[Violation]:
    rows = _rows(rel)
    order, starts, ends, _ = _grouped(rows, cols, [])
    out = []
    for g in range(len(starts)):
        size = ends[g] - starts[g]
        if size > bound:
            members = [rows[i] for i in order[starts[g]: ends[g]]]
            out.append(
                Violation("deg", name, f"degree {size} exceeds {bound}", members[:2], hard=False, line=line)
            )
    return out


def relation_card(rel, nargs: int) -> tuple[int, ...]:
    """What `card(X, ...)` with `nargs` arguments measures on stored data."""
    if isinstance(rel, DenseRelation):
        return tuple(rel.shape)
    if nargs == 1:
        return (len(rel),)
    extents = [0] * rel.arity
    for key, _ in rel.items():
        for k, v in enumerate(key):
            if isinstance(v, int) and not isinstance(v, bool):
                extents[k] = max(extents[k], v + 1)
    return tuple(extents)


def check_card(rel, name, args, line=0) -> list[Violation]:
    have = relation_card(rel, len(args))
    if len(have) != len(args):
        return [Violation("card", name, f"{name} has {len(have)} dimensions, declared {len(args)}", line=line)]
    out = []
    for k, (a, h) in enumerate(zip(args, have)):
        if isinstance(a, A.Lit) and isinstance(a.value, int) and a.value != h:
            out.append(Violation("card", name, f"{name} dimension {k}: {h}≠{a.value}", line=line))
    return out


def check_order(rel, name, cols: list[int], line=0) -> list[Violation]:
    prev = None
    for key, _ in rel.items():
        cur = key_order(tuple(key[c] for c in cols))
        if prev is not None and cur < prev[0]:
            return [
                Violation("order", name, f"{name} does not iterate in declared order", [prev[1], key], line=line)
            ]
        prev = (cur, key)
    return []


def check_column_type(rel, name, col: int, tname: str, line=0) -> list[Violation]:
    want = SCALAR_ALIASES.get(tname)
    if want is None:
        return []
    for key, _ in rel.items():
        got = lit_type(key[col])
        if got != want and not (want == "real" and got == "int"):
            return [Violation("type", name, f"{name} column {col} holds {got}, declared {want}", [key], line=line)]
    return []


def check_integrity(db, decls) -> list[Violation]:
    """All violations of the declared integrity constraints, with witnesses."""
    out: list[Violation] = []
    for d in decls:
        line = getattr(d, "line", 0)
        decl = d.constraint if isinstance(d, A.Declaration) else d
        for c in A.conjuncts(decl):
            c = A.strip_group(c)
            if not isinstance(c, A.Cei):
                continue
            out.extend(_check_one(c, decl, db, line))
    return out


def _check_one(c: A.Cei, decl, db, line) -> list[Violation]:
    if c.name == "card":
        rel = A.cei_relation_arg(c)
        if rel is None or rel not in db:
            return []
        return check_card(db[rel], rel, A.cei_variable_args(c), line)
    if c.name == "type":
        if A.cei_relation_arg(c) is not None:
            return []
        flat = c.flat_args
        if len(flat) != 2 or not isinstance(flat[0], A.Var) or not isinstance(flat[1], A.Var):
            return []
        out = []
        for rel, cols in _targets(c, decl, db, {flat[0].name}):
            if rel in db:
                out += check_column_type(db[rel], rel, cols[flat[0].name], flat[1].name, line)
        return out
    if c.name == "fdep":
        if len(c.args) != 2:
            return [Violation("fdep", "", f"malformed {print_constraint(c)}", line=line)]
        lhs, rhs = _var_names(c.args[0]), _var_names(c.args[1])
        out = []
        for rel, cols in _targets(c, decl, db, set(lhs) | set(rhs)):
            if rel in db:
                out += check_fdep(db[rel], rel, [cols[a] for a in lhs], [cols[a] for a in rhs], line)
        return out
    if c.name in ("pkey", "unique"):
        names = _var_names(c.flat_args)
        out = []
        for rel, cols in _targets(c, decl, db, set(names)):
            if rel in db:
                out += check_key(db[rel], rel, [cols[a] for a in names], c.name, line)
        return out
    if c.name == "order":
        names = _var_names(c.flat_args)
        out = []
        for rel, cols in _targets(c, decl, db, set(names)):
            if rel in db:
                out += check_order(db[rel], rel, [cols[a] for a in names], line)
        return out
    if c.name == "deg":
        flat = c.flat_args
        if len(flat) != 2 or not isinstance(flat[1], A.Lit):
            return []
        names = _var_names(flat[:1])
        out = []
        for rel, cols in _targets(c, decl, db, set(names)):
            if rel in db:
                out += check_degree(db[rel], rel, [cols[a] for a in names], int(flat[1].value), line)
        return out
    return []
