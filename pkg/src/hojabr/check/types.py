"""Type inference over a union-find of variables, columns and payloads.

Scalar types are int, real, string and bool.  int and real belong to one
numeric family and unify to real; any other mix is a conflict.  Relation
payload semirings come from rule shape (set head -> boolean, valued head
-> real) unless `type(X, T)` declares otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .. import ast as A
from ..errors import CheckError, Diagnostic, error
from ..semiring import BOOLEAN, NATURAL, REAL, TYPE_SEMIRINGS, Semiring
from ..syntax import print_constraint

SCALAR_ALIASES = {
    "int": "int",
    "integer": "int",
    "real": "real",
    "float": "real",
    "double": "real",
    "string": "string",
    "str": "string",
    "bool": "bool",
    "boolean": "bool",
}
_FAMILY = {"int": "num", "real": "num", "number": "num", "string": "string", "bool": "bool"}
_PAYLOAD_TYPE = {"boolean": "bool", "natural": "int", "real": "real"}


@dataclass
class RelSchema:
    name: str
    levels: tuple[int, ...] | None
    semiring: Semiring
    defined: bool  # has at least one rule
    column_types: tuple[str | None, ...] = ()
    payload_type: str | None = None


@dataclass
class TypeEnv:
    var_types: dict[tuple[int, str], str] = field(default_factory=dict)
    rel_schemas: dict[str, RelSchema] = field(default_factory=dict)
    refinements: dict[tuple[int, str], list[A.Compare]] = field(default_factory=dict)

    def rule_types(self, index: int) -> dict[str, str]:
        return {v: t for (r, v), t in self.var_types.items() if r == index}


def lit_type(v) -> str:
    if isinstance(v, bool):
        return "bool"
    if isinstance(v, int):
        return "int"
    if isinstance(v, float):
        return "real"
    return "string"


# ---------------------------------------------------------------- semirings and shapes


def declared_semirings(program: A.Program) -> dict[str, tuple[Semiring, int]]:
    out: dict[str, tuple[Semiring, int]] = {}
    for stmt in program.statements:
        cons = stmt.constraint
        for node in A.walk_constraint(cons):
            if isinstance(node, A.Cei) and node.name == "type":
                rel = A.cei_relation_arg(node)
                flat = node.flat_args
                if rel and len(flat) == 2 and isinstance(flat[1], A.Var):
                    sr = TYPE_SEMIRINGS.get(flat[1].name)
                    if sr is not None:
                        out[rel] = (sr, stmt.line)
    return out


def relation_semirings(program: A.Program, db=None) -> tuple[dict[str, Semiring], list[Diagnostic]]:
    """Payload semiring of every relation the program defines or reads."""
    declared = declared_semirings(program)
    out: dict[str, Semiring] = {}
    diags: list[Diagnostic] = []
    if db is not None:
        for name, rel in db.relations.items():
            out[name] = rel.semiring
    for name, (sr, line) in declared.items():
        if db is not None and name in db.relations and db.relations[name].semiring is not sr:
            have = db.relations[name].semiring.name
            diags.append(
                error(
                    "type-conflict",
                    f"{name} is declared {sr.name} but stored data is {have}",
                    rule=name,
                    line=line,
                )
            )
        out[name] = sr
    shapes: dict[str, set[str]] = {}
    for r in program.rules:
        shapes.setdefault(r.head.rel, set()).add("valued" if r.is_valued else "set")
    for name, kinds in shapes.items():
        if name in declared:
            continue
        if db is not None and name in db.relations:
            continue
        if len(kinds) > 1:
            diags.append(
                error(
                    "semiring-mismatch",
                    f"{name} has both set-shaped and valued rules",
                    rule=name,
                )
            )
        out[name] = REAL if "valued" in kinds else BOOLEAN
    return out, diags


def relation_levels(program: A.Program, db=None) -> tuple[dict[str, tuple[int, ...]], list[Diagnostic]]:
    """Nesting and arity of every relation; reports inconsistent uses."""
    levels: dict[str, tuple[int, ...]] = {}
    diags: list[Diagnostic] = []
    if db is not None:
        for name, rel in db.relations.items():
            levels[name] = rel.levels
    for r in program.rules:
        have = levels.get(r.head.rel)
        if have is None:
            levels[r.head.rel] = r.head.levels
        elif have != r.head.levels:
            diags.append(
                error(
                    "kind",
                    f"{r.head.rel} is used with levels {r.head.levels} and {have}",
                    rule=r.head.rel,
                    line=r.line,
                )
            )
    for stmt in program.statements:
        relvars = A.relation_variables(stmt) if isinstance(stmt, A.Rule) else set()
        accs = A.rule_accesses(stmt) if isinstance(stmt, A.Rule) else A.accesses(stmt.constraint)
        label = stmt.head.rel if isinstance(stmt, A.Rule) else ""
        for acc in accs:
            if acc.rel in relvars:
                continue
            have = levels.get(acc.rel)
            if have is None:
                continue
            if len(acc.levels) > len(have) or tuple(have[: len(acc.levels)]) != acc.levels:
                diags.append(
                    error(
                        "kind",
                        f"{acc.rel} accessed with argument lists {acc.levels} but has levels {have}",
                        rule=label,
                        line=stmt.line,
                    )
                )
    return levels, diags


# ---------------------------------------------------------------- inference


class _UF:
    def __init__(self):
        self.parent: dict = {}
        self.facts: dict = {}  # root -> list[(type, source, declared)]

    def find(self, x):
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb
            self.facts.setdefault(rb, []).extend(self.facts.pop(ra, []))

    def add(self, x, t, source, declared=False):
        self.facts.setdefault(self.find(x), []).append((t, source, declared))


def _expr_kind(e) -> str | None:
    if isinstance(e, A.Lit):
        return lit_type(e.value)
    if isinstance(e, (A.Binary, A.Neg)):
        return "number"
    if isinstance(e, A.Call):
        return "real"
    return None


def infer_types(program: A.Program, db=None) -> TypeEnv:
    """Infer variable, column and payload types.  Raises CheckError on conflicts."""
    uf = _UF()
    semirings, diags = relation_semirings(program, db)
    levels, kdiags = relation_levels(program, db)
    diags.extend(kdiags)
    env = TypeEnv()
    declared_vars: dict[tuple[int, str], list] = {}

    if db is not None:
        for name, rel in db.relations.items():
            uf.add(("p", name), _PAYLOAD_TYPE[rel.semiring.name], f"stored {name}")
            for k, v in rel.items():
                for col, x in enumerate(k):
                    uf.add(("c", name, col), lit_type(x), f"stored {name}")
                break
        for name, v in db.params.items():
            uf.add(("param", name), lit_type(v), f"parameter {name}")

    for idx, stmt in enumerate(program.statements):
        scope = idx
        label = stmt.head.rel if isinstance(stmt, A.Rule) else "declaration"
        relvars = A.relation_variables(stmt) if isinstance(stmt, A.Rule) else set()
        params = set(db.params) if db is not None else set()

        def var(name):
            if name in params:
                return ("param", name)
            return ("v", scope, name)

        def where(c):
            return f"{print_constraint(c)} (line {stmt.line})"

        def visit_expr(e, source):
            for sub in A.walk_expr(e):
                if isinstance(sub, A.Var) and sub.name in relvars:
                    diags.append(
                        error(
                            "kind",
                            f"relation variable {sub.name} used as a scalar",
                            rule=label,
                            line=stmt.line,
                        )
                    )
                if isinstance(sub, A.Binary):
                    for side in (sub.left, sub.right):
                        if isinstance(side, A.Var):
                            uf.add(var(side.name), "number", source)
                if isinstance(sub, A.Neg) and isinstance(sub.operand, A.Var):
                    uf.add(var(sub.operand.name), "number", source)
                if isinstance(sub, A.Access) and sub.rel not in relvars:
                    for col, a in enumerate(sub.flat_args):
                        if isinstance(a, A.Var):
                            uf.union(var(a.name), ("c", sub.rel, col))
                        elif isinstance(a, A.Lit):
                            uf.add(("c", sub.rel, col), lit_type(a.value), source)

        def bind_value(v: A.Expr, other: A.Expr, source):
            if not isinstance(v, A.Var):
                return
            if isinstance(other, A.Var):
                uf.union(var(v.name), var(other.name))
            elif isinstance(other, A.Access) and other.rel not in relvars:
                if len(other.levels) == len(levels.get(other.rel, other.levels)):
                    uf.union(var(v.name), ("p", other.rel))
            else:
                k = _expr_kind(other)
                if k is not None:
                    uf.add(var(v.name), k, source)

        for node in A.walk_constraint(stmt.constraint):
            if isinstance(node, A.Compare):
                src = where(node)
                visit_expr(node.left, src)
                visit_expr(node.right, src)
                if node.op == "=":
                    bind_value(node.left, node.right, src)
                    bind_value(node.right, node.left, src)
                else:
                    for v, o in ((node.left, node.right), (node.right, node.left)):
                        if isinstance(v, A.Var) and isinstance(o, A.Lit):
                            uf.add(var(v.name), lit_type(o.value), src)
            elif isinstance(node, A.Atom):
                visit_expr(node.access, where(node))
            elif isinstance(node, A.Cei) and node.name == "type" and not A.cei_relation_arg(node):
                flat = node.flat_args
                if len(flat) == 2 and isinstance(flat[0], A.Var) and isinstance(flat[1], A.Var):
                    t = SCALAR_ALIASES.get(flat[1].name)
                    if t is None:
                        diags.append(
                            error(
                                "type",
                                f"unknown scalar type {flat[1].name}",
                                rule=label,
                                line=stmt.line,
                            )
                        )
                        continue
                    uf.add(var(flat[0].name), t, where(node), declared=True)
                    declared_vars.setdefault((scope, flat[0].name), []).append(t)
            elif isinstance(node, A.Cei) and node.name == "card":
                for a in A.cei_variable_args(node):
                    if isinstance(a, A.Var):
                        uf.add(var(a.name), "int", where(node))
        if isinstance(stmt, A.Rule):
            head_src = f"head of {label} (line {stmt.line})"
            visit_expr(stmt.head, head_src)
            if stmt.expr is not None:
                visit_expr(stmt.expr, head_src)
                if isinstance(stmt.expr, A.Var):
                    uf.union(var(stmt.expr.name), ("p", label))
                else:
                    k = _expr_kind(stmt.expr)
                    if k is not None:
                        uf.add(("p", label), k, head_src)
        # refinements: comparisons over type-declared variables
        for node in A.walk_constraint(stmt.constraint):
            if isinstance(node, A.Compare):
                for side in (node.left, node.right):
                    for v in A.expr_vars(side):
                        if (scope, v) in declared_vars:
                            env.refinements.setdefault((scope, v), []).append(node)

    # resolve every class
    resolved: dict = {}
    for root, facts in list(uf.facts.items()):
        fams = {}
        for t, src, decl in facts:
            fams.setdefault(_FAMILY[t], (t, src))
        if len(fams) > 1:
            (t1, s1), (t2, s2) = list(fams.values())[:2]
            diags.append(
                error(
                    "type-conflict",
                    f"conflicting types {t1} (from {s1}) and {t2} (from {s2})",
                    rule=_label_of(root, program),
                    line=_line_of(root, program),
                )
            )
            continue
        declared = [t for t, _, d in facts if d]
        types = {t for t, _, _ in facts}
        if declared:
            resolved[root] = declared[0]
        elif "string" in types:
            resolved[root] = "string"
        elif "bool" in types:
            resolved[root] = "bool"
        elif types == {"int"}:
            resolved[root] = "int"
        else:
            resolved[root] = "real"

    for node in list(uf.parent):
        t = resolved.get(uf.find(node))
        if t is not None and node[0] == "v":
            env.var_types[(node[1], node[2])] = t

    names = set(semirings) | set(levels)
    defined = {r.head.rel for r in program.rules}
    for name in sorted(names):
        sr = semirings.get(name, BOOLEAN)
        lv = levels.get(name)
        cols = ()
        if lv is not None:
            cols = tuple(resolved.get(uf.find(("c", name, k))) for k in range(sum(lv)))
        payload = resolved.get(uf.find(("p", name)), _PAYLOAD_TYPE[sr.name])
        if sr is BOOLEAN:
            payload = "bool"
        elif sr is NATURAL:
            payload = "int"
        env.rel_schemas[name] = RelSchema(name, lv, sr, name in defined, cols, payload)
    errors = [d for d in diags if d.severity == "error"]
    if errors:
        raise CheckError(errors)
    return env


def _label_of(root, program: A.Program) -> str:
    if root[0] == "v":
        stmt = program.statements[root[1]]
        return stmt.head.rel if isinstance(stmt, A.Rule) else "declaration"
    return root[1]


def _line_of(root, program: A.Program) -> int:
    if root[0] == "v":
        return program.statements[root[1]].line
    return 0
