"""A mini-SQL frontend: SELECT/FROM/WHERE/GROUP BY/ORDER BY/LIMIT.

Both translation directions interpret the same clause table, ``CLAUSES``:
each entry says how one SQL clause maps onto one part of a Hojabr rule.

Column variables are named after their column; a name already taken by
an earlier table is primed (``b'``), so a join ``R.b = S.b`` becomes the
atoms ``R(a,b), S(b',c)`` plus the equality ``(b = b')``.

Queries have set semantics (every result is distinct).  Aggregates range
over the joined rows, which correspond one-to-one to rule bindings since
every column gets its own variable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable

from .. import ast as A
from ..errors import FrontendError, error

AGGREGATES = ("sum", "avg", "min", "max")
_OPS = ("=", "!=", "<>", "<=", ">=", "<", ">")


@dataclass(frozen=True)
class Col:
    table: str | None
    column: str

    def __str__(self):
        return f"{self.table}.{self.column}" if self.table else self.column


@dataclass(frozen=True)
class SelectItem:
    col: Col
    agg: str | None = None

    def __str__(self):
        return f"{self.agg}({self.col})" if self.agg else str(self.col)


@dataclass(frozen=True)
class TableRef:
    name: str
    alias: str | None = None

    @property
    def ref(self) -> str:
        return self.alias or self.name

    def __str__(self):
        return f"{self.name} AS {self.alias}" if self.alias else self.name


@dataclass(frozen=True)
class Predicate:
    left: object
    op: str
    right: object

    def __str__(self):
        return f"{_operand(self.left)} {self.op} {_operand(self.right)}"


@dataclass
class SqlQuery:
    select: list[SelectItem]
    tables: list[TableRef]
    where: list[Predicate] = field(default_factory=list)
    group_by: list[Col] = field(default_factory=list)
    order_by: list[Col] = field(default_factory=list)
    limit: int | None = None

    def __str__(self):
        return print_sql(self)


def _operand(x) -> str:
    if isinstance(x, Col):
        return str(x)
    if isinstance(x, str):
        return "'" + x.replace("'", "''") + "'"
    return repr(x) if isinstance(x, float) else str(x)


def _outside(msg: str):
    raise FrontendError(error("outside-sql-core", msg))


# ---------------------------------------------------------------- text


_TOKEN = re.compile(
    r"\s*(?:(?P<num>-?\d+(?:\.\d+)?)|(?P<str>'(?:[^']|'')*')|(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<op><>|!=|<=|>=|[=<>(),.;*]))"
)
_KEYWORDS = {"select", "from", "where", "and", "group", "by", "order", "limit", "as", "asc"}
_UNSUPPORTED = {"join", "on", "or", "not", "having", "union", "desc", "distinct", "in", "like", "null", "is", "exists"}


def _tokens(text: str) -> list[tuple[str, str]]:
    out, pos = [], 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            _outside(f"unexpected character {text[pos]!r} at offset {pos}")
        pos = m.end()
        kind = m.lastgroup
        val = m.group(kind)
        if kind == "id" and val.lower() in _KEYWORDS:
            out.append(("kw", val.lower()))
        elif kind == "id" and val.lower() in _UNSUPPORTED:
            _outside(f"{val.upper()} is outside the supported SQL subset")
        else:
            out.append((kind, val))
    return out


class _SqlParser:
    def __init__(self, text):
        self.toks = _tokens(text)
        self.i = 0

    def peek(self, kind=None, val=None):
        if self.i >= len(self.toks):
            return False
        k, v = self.toks[self.i]
        return (kind is None or k == kind) and (val is None or v == val)

    def take(self, kind=None, val=None):
        if not self.peek(kind, val):
            got = self.toks[self.i][1] if self.i < len(self.toks) else "end of input"
            _outside(f"expected {val or kind}, got {got!r}")
        self.i += 1
        return self.toks[self.i - 1][1]

    def col(self) -> Col:
        a = self.take("id")
        if self.peek("op", "."):
            self.take()
            return Col(a, self.take("id"))
        return Col(None, a)

    def operand(self):
        if self.peek("num"):
            t = self.take()
            return float(t) if "." in t else int(t)
        if self.peek("str"):
            return self.take()[1:-1].replace("''", "'")
        return self.col()

    def query(self) -> SqlQuery:
        self.take("kw", "select")
        select = [self.select_item()]
        while self.peek("op", ","):
            self.take()
            select.append(self.select_item())
        self.take("kw", "from")
        tables = [self.table()]
        while self.peek("op", ","):
            self.take()
            tables.append(self.table())
        q = SqlQuery(select, tables)
        if self.peek("kw", "where"):
            self.take()
            q.where.append(self.predicate())
            while self.peek("kw", "and"):
                self.take()
                q.where.append(self.predicate())
        if self.peek("kw", "group"):
            self.take()
            self.take("kw", "by")
            q.group_by = self.cols()
        if self.peek("kw", "order"):
            self.take()
            self.take("kw", "by")
            q.order_by = self.cols()
            if self.peek("kw", "asc"):
                self.take()
        if self.peek("kw", "limit"):
            self.take()
            q.limit = int(self.take("num"))
        if self.peek("op", ";"):
            self.take()
        if self.i != len(self.toks):
            _outside(f"unexpected {self.toks[self.i][1]!r} after the query")
        return q

    def cols(self):
        out = [self.col()]
        while self.peek("op", ","):
            self.take()
            out.append(self.col())
        return out

    def select_item(self) -> SelectItem:
        if self.peek("op", "*"):
            _outside("SELECT * is not supported; list the columns")
        if self.peek("id") and self.toks[self.i][1].lower() in AGGREGATES and self.i + 1 < len(self.toks) and self.toks[self.i + 1] == ("op", "("):
            agg = self.take().lower()
            self.take("op", "(")
            c = self.col()
            self.take("op", ")")
            return SelectItem(c, agg)
        if self.peek("id") and self.i + 1 < len(self.toks) and self.toks[self.i + 1] == ("op", "("):
            _outside(f"function {self.toks[self.i][1]} is not a supported aggregate")
        return SelectItem(self.col())

    def table(self) -> TableRef:
        name = self.take("id")
        if self.peek("kw", "as"):
            self.take()
            return TableRef(name, self.take("id"))
        if self.peek("id"):
            return TableRef(name, self.take())
        return TableRef(name)

    def predicate(self) -> Predicate:
        left = self.operand()
        if not self.peek("op") or self.toks[self.i][1] not in _OPS:
            _outside("expected a comparison operator")
        op = self.take()
        op = "!=" if op == "<>" else op
        return Predicate(left, op, self.operand())


def parse_sql(text: str) -> SqlQuery:
    return _SqlParser(text).query()


def print_sql(q: SqlQuery) -> str:
    parts = ["SELECT " + ", ".join(map(str, q.select)), "FROM " + ", ".join(map(str, q.tables))]
    if q.where:
        parts.append("WHERE " + " AND ".join(map(str, q.where)))
    if q.group_by:
        parts.append("GROUP BY " + ", ".join(map(str, q.group_by)))
    if q.order_by:
        parts.append("ORDER BY " + ", ".join(map(str, q.order_by)))
    if q.limit is not None:
        parts.append(f"LIMIT {q.limit}")
    return " ".join(parts)


# ---------------------------------------------------------------- the clause table


@dataclass
class _Ctx:
    """Shared state: which variable names which (table ref, column)."""

    schema: dict[str, list[str]]
    name: str = "Q"
    var_of: dict[tuple[str, str], str] = field(default_factory=dict)
    col_of: dict[str, Col] = field(default_factory=dict)
    refs: list[TableRef] = field(default_factory=list)

    def resolve(self, c: Col) -> str:
        if c.table is not None:
            key = (c.table, c.column)
            if key not in self.var_of:
                _outside(f"unknown column {c}")
            return self.var_of[key]
        hits = [v for (t, col), v in self.var_of.items() if col == c.column]
        if not hits:
            _outside(f"unknown column {c}")
        if len(hits) > 1:
            _outside(f"ambiguous column {c}; qualify it with a table")
        return hits[0]


@dataclass(frozen=True)
class Clause:
    """One row of the mapping: SQL clause ↔ Hojabr construct."""

    sql: str
    hojabr: str
    to_hojabr: Callable
    from_hojabr: Callable


def _from_to(q: SqlQuery, ctx: _Ctx, out: dict):
    taken: set[str] = set()
    refs = [t.ref for t in q.tables]
    if len(set(refs)) != len(refs):
        _outside("a table appearing twice needs distinct aliases")
    for t in q.tables:
        if t.name not in ctx.schema:
            _outside(f"unknown table {t.name}; pass its columns in the schema")
        args = []
        for col in ctx.schema[t.name]:
            v = col
            while v in taken:
                v += "'"
            taken.add(v)
            ctx.var_of[(t.ref, col)] = v
            args.append(A.Var(v))
        out["body"].append(A.atom(t.name, args))


def _from_back(rule: A.Rule, ctx: _Ctx, q: SqlQuery):
    counts: dict[str, int] = {}
    atoms = [A.strip_group(c) for c in A.conjuncts(rule.constraint) if isinstance(A.strip_group(c), A.Atom)]
    if not atoms:
        _outside("a query needs at least one table")
    for atom in atoms:
        rel = atom.access.rel
        counts[rel] = counts.get(rel, 0) + 1
        alias = f"{rel}{counts[rel]}" if counts[rel] > 1 else None
        ref = TableRef(rel, alias)
        q.tables.append(ref)
        cols = ctx.schema.get(rel)
        args = atom.access.flat_args
        if cols is not None and len(cols) != len(args):
            _outside(f"{rel} has {len(cols)} columns but is used with {len(args)}")
        for k, a in enumerate(args):
            column = cols[k] if cols is not None else a.name.rstrip("'")
            ctx.col_of[a.name] = Col(ref.ref, column)
    if len(q.tables) == 1:
        ctx.col_of = {v: Col(None, c.column) for v, c in ctx.col_of.items()}


def _where_to(q: SqlQuery, ctx: _Ctx, out: dict):
    for p in q.where:
        side = lambda x: A.Var(ctx.resolve(x)) if isinstance(x, Col) else A.Lit(x)  # noqa: E731
        out["body"].append(A.Group(A.Compare(side(p.left), p.op, side(p.right))))


def _where_back(rule: A.Rule, ctx: _Ctx, q: SqlQuery):
    for c in A.conjuncts(rule.constraint):
        c = A.strip_group(c)
        if isinstance(c, A.Compare):
            side = lambda e: ctx.col_of[e.name] if isinstance(e, A.Var) else e.value  # noqa: E731
            q.where.append(Predicate(side(c.left), c.op, side(c.right)))


def _select_to(q: SqlQuery, ctx: _Ctx, out: dict):
    aggs = [s for s in q.select if s.agg]
    cols = [s for s in q.select if not s.agg]
    if len(aggs) > 1:
        _outside("at most one aggregate per query")
    keys = [ctx.resolve(s.col) for s in cols]
    if len(set(keys)) != len(keys):
        _outside("a column is selected twice")
    if aggs:
        groups = [ctx.resolve(c) for c in q.group_by]
        if set(groups) != set(keys):
            _outside("GROUP BY must list exactly the selected columns")
        if q.select[-1].agg is None:
            _outside("the aggregate must come last in the SELECT list")
        out["expr"] = A.Call(aggs[0].agg, (A.Var(ctx.resolve(aggs[0].col)),))
    elif q.group_by:
        _outside("GROUP BY without an aggregate")
    out["head"] = A.Access(ctx.name, (tuple(A.Var(k) for k in keys),))


def _select_back(rule: A.Rule, ctx: _Ctx, q: SqlQuery):
    keys = [a.name for a in rule.head.flat_args]
    q.select = [SelectItem(ctx.col_of[k]) for k in keys]
    if rule.expr is not None:
        call = rule.expr
        q.select.append(SelectItem(ctx.col_of[call.args[0].name], call.name))
        q.group_by = [ctx.col_of[k] for k in keys]


def _order_to(q: SqlQuery, ctx: _Ctx, out: dict):
    if q.order_by:
        head = {a.name for a in out["head"].flat_args}
        vs = [ctx.resolve(c) for c in q.order_by]
        if not set(vs) <= head:
            _outside("ORDER BY may only name selected columns")
        out["body"].append(A.Cei("order", (tuple(A.Var(v) for v in vs),)))


def _order_back(rule: A.Rule, ctx: _Ctx, q: SqlQuery):
    for c in A.conjuncts(rule.constraint):
        c = A.strip_group(c)
        if isinstance(c, A.Cei) and c.name == "order":
            q.order_by = [ctx.col_of[a.name] for a in c.flat_args]


def _limit_to(q: SqlQuery, ctx: _Ctx, out: dict):
    if q.limit is not None:
        out["body"].append(A.Cei("card", ((A.Var(ctx.name), A.Lit(q.limit)),)))


def _limit_back(rule: A.Rule, ctx: _Ctx, q: SqlQuery):
    for c in A.conjuncts(rule.constraint):
        c = A.strip_group(c)
        if isinstance(c, A.Cei) and c.name == "card":
            q.limit = int(A.cei_variable_args(c)[0].value)


CLAUSES: tuple[Clause, ...] = (
    Clause("FROM t1, t2, ...", "one body atom per table, a variable per column", _from_to, _from_back),
    Clause("WHERE p1 AND p2 ...", "one comparison per predicate", _where_to, _where_back),
    Clause("SELECT cols, agg(col) GROUP BY cols", "head keys, head aggregate", _select_to, _select_back),
    Clause("ORDER BY cols", "order(cols)", _order_to, _order_back),
    Clause("LIMIT k", "card(Q, k)", _limit_to, _limit_back),
)


def sql_to_hojabr(q: "SqlQuery | str", schema: dict[str, list[str]], name: str = "Q") -> A.Program:
    """Translate a query into a one-rule sql-core program defining `name`."""
    if isinstance(q, str):
        q = parse_sql(q)
    ctx = _Ctx({k: list(v) for k, v in schema.items()}, name)
    out: dict = {"body": [], "expr": None, "head": None}
    for clause in CLAUSES:
        clause.to_hojabr(q, ctx, out)
    # the head is built after FROM/WHERE, but order/card sit at the end of the body
    rule = A.Rule(out["head"], ":=", A.conj(out["body"]), out["expr"])
    return A.Program((rule,))


def hojabr_to_sql(program: A.Program, schema: dict[str, list[str]] | None = None) -> SqlQuery:
    """Inverse translation; rejects programs outside sql-core with their violations."""
    from ..slangs import validate

    res = validate(program, "sql-core")
    if not res.ok:
        raise FrontendError([error("outside-sql-core", v) for v in res.violations])
    rules = A.desugar(program).rules
    if len(rules) != 1:
        _outside(f"expected one rule, found {len(rules)}")
    rule = rules[0]
    ctx = _Ctx(dict(schema or {}), rule.head.rel)
    q = SqlQuery([], [])
    for clause in CLAUSES:
        clause.from_hojabr(rule, ctx, q)
    return q


# ---------------------------------------------------------------- oracle


def _cmp(a, op, b) -> bool:
    try:
        return {
            "=": a == b,
            "!=": a != b,
            "<": a < b,
            "<=": a <= b,
            ">": a > b,
            ">=": a >= b,
        }[op]
    except TypeError:
        return op == "!="


def _order_key(row) -> tuple:
    return tuple((1, v) if isinstance(v, str) else (0, v) for v in row)


def sql_oracle(q: "SqlQuery | str", tables: dict[str, list[tuple]], schema: dict[str, list[str]]) -> dict:
    """Evaluate a query by nested loops over row lists; returns key -> value.

    Set queries map each distinct key tuple to True; aggregate queries map
    each group to its aggregate.
    """
    if isinstance(q, str):
        q = parse_sql(q)
    refs = [t.ref for t in q.tables]

    def where(c: Col) -> tuple[int, int]:
        if c.table is not None:
            k = refs.index(c.table)
            return k, schema[q.tables[k].name].index(c.column)
        for k, t in enumerate(q.tables):
            if c.column in schema[t.name]:
                return k, schema[t.name].index(c.column)
        raise KeyError(c)

    def lookup(row, c: Col):
        k, j = where(c)
        return row[k][j]

    def val(row, x):
        return lookup(row, x) if isinstance(x, Col) else x

    rows = [()]
    for t in q.tables:
        rows = [r + (tuple(t_row),) for r in rows for t_row in tables.get(t.name, [])]
    rows = [r for r in rows if all(_cmp(val(r, p.left), p.op, val(r, p.right)) for p in q.where)]
    keys = [s.col for s in q.select if not s.agg]
    agg = next((s for s in q.select if s.agg), None)
    out: dict = {}
    if agg is None:
        for r in rows:
            out[tuple(lookup(r, c) for c in keys)] = True
    else:
        groups: dict = {}
        for r in rows:
            groups.setdefault(tuple(lookup(r, c) for c in keys), []).append(lookup(r, agg.col))
        for k, vs in groups.items():
            if agg.agg == "sum":
                out[k] = sum(vs)
            elif agg.agg == "avg":
                out[k] = sum(vs) / len(vs)
            elif agg.agg == "min":
                out[k] = min(vs)
            else:
                out[k] = max(vs)
    if q.limit is not None:
        key_cols = [where(c) for c in keys]
        pos = [key_cols.index(where(o)) for o in q.order_by]
        ranked = sorted(out, key=lambda k: (_order_key(tuple(k[p] for p in pos)), _order_key(k)))
        out = {k: out[k] for k in ranked[: q.limit]}
    return out
