"""Seeded random generators shared by the unit and acceptance tests."""

from __future__ import annotations

import random

from hojabr import ast as A
from hojabr.relation import Database, Relation

REL_NAMES = ["R", "S", "T", "Edge", "B_coo", "W1", "Q'"]
VAR_NAMES = ["x", "y", "z", "a", "b'", "i", "j", "n", "v2"]
EEIS = sorted(A.EEI_NAMES)
CEIS = sorted(A.CEI_NAMES)
TYPES = ["int", "real", "string", "bool"]


class AstGen:
    """Random ASTs in the canonical shape the parser produces.

    Conjunction items are never bare conjunctions or disjunctions; those
    appear wrapped in `Group`, exactly as parenthesised source would parse.
    """

    def __init__(self, seed: int, max_depth: int = 3):
        self.r = random.Random(seed)
        self.max_depth = max_depth

    def lit(self):
        r = self.r
        kind = r.randrange(5)
        if kind == 0:
            return A.Lit(r.randint(-50, 50))
        if kind == 1:
            return A.Lit(round(r.uniform(-100, 100), r.randint(0, 4)))
        if kind == 2:
            return A.Lit(r.choice([True, False]))
        if kind == 3:
            return A.Lit(r.choice(["", "a", 'say "hi"', "tab\there", "back\\slash", "line\nbreak"]))
        return A.Lit(r.random() * 10 ** r.randint(-5, 12))

    def var(self):
        return A.Var(self.r.choice(VAR_NAMES))

    def access(self, depth: int, nonempty: bool = False) -> A.Access:
        r = self.r
        groups = []
        for _ in range(r.randint(1, 3)):
            lo = 1 if nonempty else 0
            groups.append(tuple(self.expr(depth + 1) for _ in range(r.randint(lo, 3))))
        return A.Access(r.choice(REL_NAMES), tuple(groups))

    def expr(self, depth: int = 0):
        r = self.r
        if depth >= self.max_depth:
            return r.choice([self.var, self.lit, lambda: A.Wildcard()])()
        k = r.randrange(8)
        if k <= 1:
            return self.var()
        if k == 2:
            return self.lit()
        if k == 3:
            return self.access(depth)
        if k == 4:
            return A.Call(r.choice(EEIS), tuple(self.expr(depth + 1) for _ in range(r.randint(1, 2))))
        if k == 5:
            return A.Neg(self.expr(depth + 1))
        return A.Binary(r.choice(A.BINARY_OPS), self.expr(depth + 1), self.expr(depth + 1))

    def primary(self, depth: int):
        """A constraint that can stand as a conjunction item."""
        r = self.r
        if depth >= self.max_depth:
            return A.Atom(self.access(depth))
        k = r.randrange(11)
        if k == 0:
            return A.Atom(self.access(depth))
        if k == 1:
            return A.Compare(self.expr(depth + 1), r.choice(A.COMPARISONS), self.expr(depth + 1))
        if k == 2:
            n = r.randint(2, 3)
            ops = tuple(r.choice(["<", "<=", ">", ">=", "="]) for _ in range(n))
            return A.Chain(tuple(self.expr(depth + 1) for _ in range(n + 1)), ops)
        if k == 3:
            return A.Not(self.constraint(depth + 1))
        if k == 4:
            return A.Group(self.constraint(depth + 1))
        if k == 5:
            args = tuple(
                tuple(self.expr(depth + 1) for _ in range(r.randint(1, 3))) for _ in range(r.randint(1, 2))
            )
            return A.Cei(r.choice(CEIS), args)
        if k == 6:
            return A.In(self.expr(depth + 1), tuple(self.expr(depth + 1) for _ in range(r.randint(1, 3))))
        if k == 7:
            return A.TypeAnn(self.expr(depth + 1), r.choice(TYPES))
        if k == 8:
            cases = [(self.lit(), self.primary(depth + 1)) for _ in range(r.randint(1, 3))]
            # only parentheses stop a nested match from swallowing later cases
            cases = tuple(
                (v, A.Group(b) if isinstance(b, A.Match) and n < len(cases) - 1 else b)
                for n, (v, b) in enumerate(cases)
            )
            return A.Match(self.expr(depth + 1), cases)
        if k == 9:
            return A.NestedRule(self.rule(depth + 1))
        return A.Atom(self.access(depth, nonempty=True))

    def conjunction(self, depth: int):
        items = [self.primary(depth) for _ in range(self.r.randint(1, 3))]
        return items[0] if len(items) == 1 else A.And(tuple(items))

    def constraint(self, depth: int = 0):
        if self.r.random() < 0.2 and depth < self.max_depth:
            return A.Or(tuple(self.conjunction(depth) for _ in range(self.r.randint(2, 3))))
        return self.conjunction(depth)

    def rule(self, depth: int = 0) -> A.Rule:
        r = self.r
        head = self.access(depth + 1)
        expr = self.expr(depth + 1) if r.random() < 0.4 else None
        return A.Rule(head, r.choice(A.ACTIONS), self.constraint(depth + 1), expr)

    def program(self) -> A.Program:
        stmts = []
        for _ in range(self.r.randint(1, 4)):
            if self.r.random() < 0.8:
                stmts.append(self.rule())
            else:
                stmts.append(A.Declaration(self.constraint()))
        return A.Program(tuple(stmts))


def random_relation(r: random.Random, arity: int, max_tuples: int = 50, max_key: int = 20) -> Relation:
    rows = {tuple(r.randint(0, max_key) for _ in range(arity)) for _ in range(r.randint(0, max_tuples))}
    return Relation((arity,), entries=[(row, True) for row in rows])


def random_join_db(seed: int, schema: dict[str, int], max_tuples: int = 50, max_key: int = 20) -> Database:
    r = random.Random(seed)
    db = Database()
    for name, arity in schema.items():
        db.put(name, random_relation(r, arity, max_tuples, max_key))
    return db


def random_digraph(r: random.Random, max_nodes: int = 12) -> tuple[int, set[tuple[int, int]]]:
    n = r.randint(1, max_nodes)
    p = r.random() * 0.4
    return n, {(i, j) for i in range(n) for j in range(n) if r.random() < p}


def random_sql_tables(seed: int, schema: dict[str, list[str]], max_rows: int = 12, max_key: int = 5):
    """Row lists for the SQL oracle plus the same data as a Database.

    Columns named ``v`` hold positive reals; everything else small ints.
    """
    r = random.Random(seed)
    tables: dict[str, list[tuple]] = {}
    db = Database()
    for name, cols in schema.items():
        rows = set()
        for _ in range(r.randint(0, max_rows)):
            rows.add(tuple(round(r.uniform(0.5, 10.0), 3) if c == "v" else r.randint(0, max_key) for c in cols))
        tables[name] = sorted(rows)
        db.put(name, Relation((len(cols),), entries=[(row, True) for row in rows]), cols)
    return tables, db
