"""Abstract syntax of Hojabr programs, desugaring, and variable analysis.

Nodes are frozen dataclasses: immutable, hashable, and compared
structurally.  Source locations on rules and declarations are excluded
from equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union

from .errors import CheckError, error

CEI_NAMES = frozenset({"type", "card", "deg", "order", "fdep", "pkey", "unique"})
AGGREGATES = frozenset({"avg", "sum", "min", "max", "median"})
MATH_FUNCTIONS = frozenset({"sin", "cos", "relu", "softmax"})
EEI_NAMES = AGGREGATES | MATH_FUNCTIONS
# softmax normalises over a group, so it is treated like an aggregate
GROUPING_EEIS = AGGREGATES | {"softmax"}

ACTIONS = (":=", "+=", "-=", "<-")
COMPARISONS = ("=", "!=", "<", "<=", ">", ">=")
BINARY_OPS = ("+", "-", "*", "/")

Scalar = Union[int, float, str, bool]


# ---------------------------------------------------------------- expressions


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Wildcard:
    """`_`: an anonymous variable, distinct at every occurrence."""


@dataclass(frozen=True, eq=False)
class Lit:
    value: Scalar

    def _key(self):
        return (type(self.value).__name__, self.value)

    def __eq__(self, other):
        return isinstance(other, Lit) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())


@dataclass(frozen=True)
class Access:
    """`X(e, ...)(e, ...)...`; `args` holds one tuple per argument list."""

    rel: str
    args: tuple[tuple["Expr", ...], ...] = ()

    @property
    def flat_args(self) -> tuple["Expr", ...]:
        return tuple(a for group in self.args for a in group)

    @property
    def levels(self) -> tuple[int, ...]:
        return tuple(len(group) for group in self.args)


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Call:
    """Expression extension (EEI) call."""

    name: str
    args: tuple["Expr", ...]


Expr = Union[Var, Wildcard, Lit, Access, Binary, Neg, Call]


# ---------------------------------------------------------------- constraints


@dataclass(frozen=True)
class And:
    items: tuple["Constraint", ...]


@dataclass(frozen=True)
class Or:
    items: tuple["Constraint", ...]


@dataclass(frozen=True)
class Not:
    body: "Constraint"


@dataclass(frozen=True)
class Group:
    """Parenthesised constraint.  Semantically transparent."""

    body: "Constraint"


@dataclass(frozen=True)
class Atom:
    access: Access


@dataclass(frozen=True)
class NestedRule:
    rule: "Rule"


@dataclass(frozen=True)
class Compare:
    left: Expr
    op: str
    right: Expr


@dataclass(frozen=True)
class Cei:
    """Constraint extension (CEI) call, e.g. `card(B, n, m)` or `fdep(a)(b)`."""

    name: str
    args: tuple[tuple[Expr, ...], ...]

    @property
    def flat_args(self) -> tuple[Expr, ...]:
        return tuple(a for group in self.args for a in group)


# sugar; removed by desugar()


@dataclass(frozen=True)
class Chain:
    """`n θ1 e θ2 m` with two or more comparison operators."""

    operands: tuple[Expr, ...]
    ops: tuple[str, ...]


@dataclass(frozen=True)
class In:
    expr: Expr
    options: tuple[Expr, ...]


@dataclass(frozen=True)
class Match:
    subject: Expr
    cases: tuple[tuple[Expr, "Constraint"], ...]


@dataclass(frozen=True)
class TypeAnn:
    """`x: T`."""

    expr: Expr
    type_name: str


Constraint = Union[And, Or, Not, Group, Atom, NestedRule, Compare, Cei, Chain, In, Match, TypeAnn]
SUGAR = (Chain, In, Match, TypeAnn)


# ---------------------------------------------------------------- rules


@dataclass(frozen=True)
class Rule:
    head: Access
    action: str
    constraint: Constraint
    expr: Expr | None = None
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)

    @property
    def is_valued(self) -> bool:
        return self.expr is not None

    @property
    def imperative(self) -> bool:
        return self.action != ":="


@dataclass(frozen=True)
class Declaration:
    """A standalone constraint statement carrying CEI facts."""

    constraint: Constraint
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


Statement = Union[Rule, Declaration]


@dataclass(frozen=True)
class Program:
    statements: tuple[Statement, ...] = ()

    @property
    def rules(self) -> tuple[Rule, ...]:
        return tuple(s for s in self.statements if isinstance(s, Rule))

    @property
    def declarations(self) -> tuple[Declaration, ...]:
        return tuple(s for s in self.statements if isinstance(s, Declaration))

    @classmethod
    def of(cls, *statements: Statement) -> "Program":
        return cls(tuple(statements))


# ---------------------------------------------------------------- constructors


def conj(items) -> Constraint:
    """Conjunction, flattened; disjunctions are wrapped in a Group."""
    out: list[Constraint] = []
    for c in items:
        if isinstance(c, And):
            out.extend(c.items)
        elif isinstance(c, Or):
            out.append(Group(c))
        else:
            out.append(c)
    if not out:
        raise ValueError("empty conjunction")
    return out[0] if len(out) == 1 else And(tuple(out))


def disj(items) -> Constraint:
    out: list[Constraint] = []
    for c in items:
        out.extend(c.items if isinstance(c, Or) else [c])
    if not out:
        raise ValueError("empty disjunction")
    return out[0] if len(out) == 1 else Or(tuple(out))


def atom(rel: str, *arglists) -> Atom:
    return Atom(access(rel, *arglists))


def access(rel: str, *arglists) -> Access:
    return Access(rel, tuple(tuple(_as_expr(a) for a in group) for group in arglists))


def _as_expr(x) -> Expr:
    if isinstance(x, (Var, Wildcard, Lit, Access, Binary, Neg, Call)):
        return x
    if isinstance(x, str):
        return Wildcard() if x == "_" else Var(x)
    return Lit(x)


# ---------------------------------------------------------------- traversal


def conjuncts(c: Constraint) -> list[Constraint]:
    """Top-level conjuncts, looking through groups."""
    if isinstance(c, Group):
        return conjuncts(c.body)
    if isinstance(c, And):
        out: list[Constraint] = []
        for item in c.items:
            out.extend(conjuncts(item))
        return out
    return [c]


def strip_group(c: Constraint) -> Constraint:
    while isinstance(c, Group):
        c = c.body
    return c


def expr_children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, Access):
        return e.flat_args
    if isinstance(e, Binary):
        return (e.left, e.right)
    if isinstance(e, Neg):
        return (e.operand,)
    if isinstance(e, Call):
        return e.args
    return ()


def walk_expr(e: Expr) -> Iterator[Expr]:
    yield e
    for child in expr_children(e):
        yield from walk_expr(child)


def constraint_children(c: Constraint) -> tuple[Constraint, ...]:
    if isinstance(c, (And, Or)):
        return c.items
    if isinstance(c, (Not, Group)):
        return (c.body,)
    if isinstance(c, NestedRule):
        return (c.rule.constraint,)
    if isinstance(c, Match):
        return tuple(body for _, body in c.cases)
    return ()


def constraint_exprs(c: Constraint) -> tuple[Expr, ...]:
    """Expressions directly owned by a constraint node (not by sub-constraints)."""
    if isinstance(c, Atom):
        return (c.access,)
    if isinstance(c, Compare):
        return (c.left, c.right)
    if isinstance(c, Cei):
        return c.flat_args
    if isinstance(c, Chain):
        return c.operands
    if isinstance(c, In):
        return (c.expr, *c.options)
    if isinstance(c, Match):
        return (c.subject, *(v for v, _ in c.cases))
    if isinstance(c, TypeAnn):
        return (c.expr,)
    if isinstance(c, NestedRule):
        return (c.rule.head,)
    return ()


def walk_constraint(c: Constraint) -> Iterator[Constraint]:
    yield c
    for child in constraint_children(c):
        yield from walk_constraint(child)


def accesses(c: Constraint) -> Iterator[Access]:
    """Every relation access in a constraint, including inside expressions."""
    for node in walk_constraint(c):
        if isinstance(node, NestedRule):
            continue  # its head is a binder, not an access
        for e in constraint_exprs(node):
            for sub in walk_expr(e):
                if isinstance(sub, Access):
                    yield sub


def rule_accesses(rule: Rule) -> Iterator[Access]:
    yield from accesses(rule.constraint)
    if rule.expr is not None:
        for sub in walk_expr(rule.expr):
            if isinstance(sub, Access):
                yield sub


# ---------------------------------------------------------------- CEI argument roles


def cei_relation_arg(c: Cei) -> str | None:
    """Name of the relation a CEI talks about, if its first argument is one."""
    flat = c.flat_args
    if not flat or not isinstance(flat[0], Var):
        return None
    if c.name == "card":
        return flat[0].name
    if c.name == "type" and flat[0].name[:1].isupper():
        return flat[0].name
    return None


def cei_variable_args(c: Cei) -> tuple[Expr, ...]:
    """Arguments of a CEI that range over rule variables."""
    flat = c.flat_args
    if c.name == "card":
        return flat[1:]
    if c.name == "type":
        return () if cei_relation_arg(c) else flat[:1]
    return flat


# ---------------------------------------------------------------- free variables


def expr_vars(e: Expr) -> set[str]:
    return {sub.name for sub in walk_expr(e) if isinstance(sub, Var)}


def _constraint_vars(c: Constraint, relvars: set[str]) -> set[str]:
    out: set[str] = set()
    for node in walk_constraint(c):
        if isinstance(node, NestedRule):
            relvars.add(node.rule.head.rel)
            continue
        if isinstance(node, Cei):
            for e in cei_variable_args(node):
                out |= expr_vars(e)
            continue
        for e in constraint_exprs(node):
            out |= expr_vars(e)
    return out


def constraint_vars(c: Constraint) -> set[str]:
    """Variables a constraint mentions, excluding CEI relation arguments."""
    return _constraint_vars(c, set())


def free_variables(rule: Rule) -> set[str]:
    """Variables of a rule, excluding relation-variables bound by nested rules."""
    relvars: set[str] = set()
    out = _constraint_vars(rule.constraint, relvars)
    out |= expr_vars(rule.head)
    if rule.expr is not None:
        out |= expr_vars(rule.expr)
    return out - relvars


def relation_variables(rule: Rule) -> set[str]:
    return {
        node.rule.head.rel
        for node in walk_constraint(rule.constraint)
        if isinstance(node, NestedRule)
    }


# ---------------------------------------------------------------- desugaring


def desugar(program: Program) -> Program:
    """Rewrite `in`, chained comparisons, `match`, and `x: T` into core forms."""
    out = []
    for stmt in program.statements:
        if isinstance(stmt, Rule):
            out.append(desugar_rule(stmt))
        else:
            out.append(Declaration(_desugar(stmt.constraint, stmt.line, ""), stmt.line, stmt.column))
    return Program(tuple(out))


def desugar_rule(rule: Rule) -> Rule:
    label = rule.head.rel
    return Rule(
        rule.head,
        rule.action,
        _desugar(rule.constraint, rule.line, label),
        rule.expr,
        rule.line,
        rule.column,
    )


def _desugar(c: Constraint, line: int, label: str) -> Constraint:
    if isinstance(c, And):
        return conj(_desugar(i, line, label) for i in c.items)
    if isinstance(c, Or):
        return disj(_desugar(i, line, label) for i in c.items)
    if isinstance(c, Not):
        return Not(_desugar(c.body, line, label))
    if isinstance(c, Group):
        inner = _desugar(c.body, line, label)
        return inner if isinstance(inner, Group) else Group(inner)
    if isinstance(c, NestedRule):
        return NestedRule(desugar_rule(c.rule))
    if isinstance(c, Chain):
        parts = [
            Compare(c.operands[k], op, c.operands[k + 1]) for k, op in enumerate(c.ops)
        ]
        return conj(parts)
    if isinstance(c, In):
        return disj(Compare(c.expr, "=", opt) for opt in c.options)
    if isinstance(c, Match):
        seen: set = set()
        for value, _ in c.cases:
            if isinstance(value, Lit):
                if value in seen:
                    raise CheckError(
                        error(
                            "duplicate-case",
                            f"match has more than one case for {value.value!r}",
                            line=line,
                            rule=label,
                        )
                    )
                seen.add(value)
        branches = [
            Group(conj([Compare(c.subject, "=", value), _desugar(body, line, label)]))
            for value, body in c.cases
        ]
        return disj(branches)
    if isinstance(c, TypeAnn):
        return Cei("type", ((c.expr, Var(c.type_name)),))
    return c


def is_desugared(program: Program) -> bool:
    for stmt in program.statements:
        cons = [stmt.constraint]
        for node in (n for c in cons for n in walk_constraint(c)):
            if isinstance(node, SUGAR):
                return False
    return True


def desugar_constraint(c: Constraint) -> Constraint:
    return _desugar(c, 0, "")


# ---------------------------------------------------------------- rewriting


def map_expr(e: Expr, fn) -> Expr:
    """Bottom-up rewrite of an expression; `fn` sees every rebuilt node."""
    if isinstance(e, Access):
        e = Access(e.rel, tuple(tuple(map_expr(a, fn) for a in g) for g in e.args))
    elif isinstance(e, Binary):
        e = Binary(e.op, map_expr(e.left, fn), map_expr(e.right, fn))
    elif isinstance(e, Neg):
        e = Neg(map_expr(e.operand, fn))
    elif isinstance(e, Call):
        e = Call(e.name, tuple(map_expr(a, fn) for a in e.args))
    return fn(e)


def map_constraint(c: Constraint, expr_fn=None, node_fn=None) -> Constraint:
    """Rebuild a constraint tree, rewriting owned expressions with `expr_fn`
    and then each rebuilt node with `node_fn`.  Nested-rule heads are binders
    and are left alone."""
    ef = (lambda e: map_expr(e, expr_fn)) if expr_fn else (lambda e: e)
    if isinstance(c, And):
        out = And(tuple(map_constraint(i, expr_fn, node_fn) for i in c.items))
    elif isinstance(c, Or):
        out = Or(tuple(map_constraint(i, expr_fn, node_fn) for i in c.items))
    elif isinstance(c, Not):
        out = Not(map_constraint(c.body, expr_fn, node_fn))
    elif isinstance(c, Group):
        out = Group(map_constraint(c.body, expr_fn, node_fn))
    elif isinstance(c, Atom):
        acc = ef(c.access)
        out = Atom(acc) if isinstance(acc, Access) else c
    elif isinstance(c, Compare):
        out = Compare(ef(c.left), c.op, ef(c.right))
    elif isinstance(c, Cei):
        out = Cei(c.name, tuple(tuple(ef(a) for a in g) for g in c.args))
    elif isinstance(c, NestedRule):
        r = c.rule
        out = NestedRule(
            Rule(r.head, r.action, map_constraint(r.constraint, expr_fn, node_fn), r.expr, r.line, r.column)
        )
    elif isinstance(c, Chain):
        out = Chain(tuple(ef(o) for o in c.operands), c.ops)
    elif isinstance(c, In):
        out = In(ef(c.expr), tuple(ef(o) for o in c.options))
    elif isinstance(c, Match):
        out = Match(ef(c.subject), tuple((ef(v), map_constraint(b, expr_fn, node_fn)) for v, b in c.cases))
    elif isinstance(c, TypeAnn):
        out = TypeAnn(ef(c.expr), c.type_name)
    else:
        out = c
    return node_fn(out) if node_fn else out


def map_rule(rule: Rule, expr_fn=None, node_fn=None, head: bool = False) -> Rule:
    """Rewrite a rule body and expression (and the head when `head` is set)."""
    new_head = map_expr(rule.head, expr_fn) if (head and expr_fn) else rule.head
    new_expr = map_expr(rule.expr, expr_fn) if (rule.expr is not None and expr_fn) else rule.expr
    return Rule(
        new_head,
        rule.action,
        map_constraint(rule.constraint, expr_fn, node_fn),
        new_expr,
        rule.line,
        rule.column,
    )


def rename_relations(rule: Rule, mapping: dict[str, str], head: bool = True) -> Rule:
    def fn(e):
        if isinstance(e, Access) and e.rel in mapping:
            return Access(mapping[e.rel], e.args)
        return e

    out = map_rule(rule, fn, head=False)
    if head and rule.head.rel in mapping:
        out = Rule(Access(mapping[rule.head.rel], rule.head.args), out.action, out.constraint, out.expr, out.line, out.column)
    return out
