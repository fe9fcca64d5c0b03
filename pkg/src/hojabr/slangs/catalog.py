"""Slangs: sub-languages of Hojabr given as syntactic predicates.

Each slang lists the constraint forms, CEIs, expression forms and EEIs it
admits, plus structural predicates over whole rules.  Validation is a
single traversal per rule and reports each offending construct once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .. import ast as A
from ..syntax import print_expr

# constraint form names
AND, OR, NOT, ATOM, NESTED, COMPARE = "conjunction", "disjunction", "negation", "atom", "nested rule", "comparison"
# expression form names
VAR, LIT, ACCESS, BINARY, NEG, CALL = "variable", "literal", "access", "arithmetic", "negation", "call"

_CONSTRAINT_NOUN = {
    OR: "disjunction",
    NOT: "negation",
    NESTED: "nested rule",
    ATOM: "relation atom",
    COMPARE: "comparison",
    AND: "conjunction",
}


@dataclass(frozen=True)
class Structural:
    description: str
    check: Callable[[A.Rule], str | None]


@dataclass(frozen=True)
class SlangSpec:
    name: str
    summary: str
    constraints: frozenset[str]
    ceis: frozenset[str]
    expressions: frozenset[str]
    eeis: frozenset[str]
    comparisons: frozenset[str] = frozenset(A.COMPARISONS)
    actions: frozenset[str] = frozenset({":="})
    structural: tuple[Structural, ...] = ()

    def describe(self) -> str:
        lines = [f"{self.name}: {self.summary}"]
        lines.append(f"  constraints: {', '.join(sorted(self.constraints)) or 'none'}")
        lines.append(f"  CEIs: {', '.join(sorted(self.ceis)) or 'none'}")
        lines.append(f"  expressions: {', '.join(sorted(self.expressions)) or 'none'}")
        lines.append(f"  EEIs: {', '.join(sorted(self.eeis)) or 'none'}")
        lines.append(f"  comparison operators: {' '.join(c for c in A.COMPARISONS if c in self.comparisons)}")
        lines.append(f"  actions: {' '.join(a for a in A.ACTIONS if a in self.actions)}")
        for s in self.structural:
            lines.append(f"  rule: {s.description}")
        return "\n".join(lines)


@dataclass
class Validation:
    slang: str
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def _rule_violations(rule: A.Rule, s: SlangSpec) -> list[str]:
    found: list[str] = []

    def note(msg):
        if msg not in found:
            found.append(msg)

    if rule.action not in s.actions:
        note(f"action {rule.action} not allowed")

    def visit_expr(e):
        for sub in A.walk_expr(e):
            kind = {
                A.Var: VAR,
                A.Wildcard: VAR,
                A.Lit: LIT,
                A.Access: ACCESS,
                A.Binary: BINARY,
                A.Neg: NEG,
                A.Call: CALL,
            }[type(sub)]
            if kind not in s.expressions:
                note(f"{kind} expression {print_expr(sub)} not allowed")
            if isinstance(sub, A.Call) and sub.name not in s.eeis:
                note(f"EEI {sub.name} not allowed")

    def visit(c):
        c0 = c
        if isinstance(c, A.Group):
            visit(c.body)
            return
        kind = None
        if isinstance(c, A.And):
            kind = AND
        elif isinstance(c, A.Or):
            kind = OR
        elif isinstance(c, A.Not):
            kind = NOT
        elif isinstance(c, A.Atom):
            kind = ATOM
        elif isinstance(c, A.NestedRule):
            kind = NESTED
        elif isinstance(c, A.Compare):
            kind = COMPARE
            if c.op not in s.comparisons:
                note(f"comparison {c.op} not allowed")
        elif isinstance(c, A.Cei):
            if c.name not in s.ceis:
                note(f"CEI {c.name} not allowed")
        else:
            note(f"sugar {type(c).__name__} must be desugared first")
        if kind is not None and kind not in s.constraints:
            note(f"{_CONSTRAINT_NOUN[kind]} not allowed")
        if isinstance(c0, A.NestedRule):
            visit(c0.rule.constraint)
            return
        if isinstance(c0, A.Atom):
            for e in c0.access.flat_args:
                visit_expr(e)
        elif not isinstance(c0, A.Cei):
            for e in A.constraint_exprs(c0):
                visit_expr(e)
        for child in A.constraint_children(c0):
            visit(child)

    visit(rule.constraint)
    if rule.expr is not None:
        visit_expr(rule.expr)
    for st in s.structural:
        msg = st.check(rule)
        if msg:
            note(msg)
    return found


def validate(program: A.Program, slang: "SlangSpec | str") -> Validation:
    """Membership test; violations name the rule and the offending construct."""
    s = get(slang) if isinstance(slang, str) else slang
    out = Validation(s.name)
    prog = A.desugar(program)
    for k, rule in enumerate(prog.rules):
        for msg in _rule_violations(rule, s):
            out.violations.append(f"rule {k + 1} ({rule.head.rel}): {msg}")
    return out


# ---------------------------------------------------------------- structural predicates


def _set_head(rule):
    return "valued head not allowed (set relations only)" if rule.is_valued else None


def _valued_head(rule):
    return None if rule.is_valued else "set-shaped head not allowed (tensor rules carry a value)"


def _flat_accesses(rule):
    for acc in A.rule_accesses(rule):
        if len(acc.args) != 1:
            return f"nested access {acc.rel}{acc.levels} not allowed"
    if len(rule.head.args) != 1:
        return "nested head not allowed"
    return None


def _variable_args(rule):
    for acc in A.rule_accesses(rule):
        for a in acc.flat_args:
            if not isinstance(a, A.Var):
                return f"argument {print_expr(a)} of {acc.rel} must be a variable"
    return None


def _var_equalities(rule):
    for c in A.walk_constraint(rule.constraint):
        if isinstance(c, A.Compare) and not (isinstance(c.left, A.Var) and isinstance(c.right, A.Var)):
            return "only variable equalities allowed"
    return None


def _sql_atoms(rule):
    seen = set()
    atoms = [c for c in A.walk_constraint(rule.constraint) if isinstance(c, A.Atom)]
    for atom in atoms:
        for a in atom.access.flat_args:
            if not isinstance(a, A.Var):
                return f"argument {print_expr(a)} must be a column variable"
            if a.name in seen:
                return f"column variable {a.name} occurs in more than one position"
            seen.add(a.name)
    for a in rule.head.flat_args:
        if not isinstance(a, A.Var):
            return "head keys must be column variables"
    return None


def _sql_expr(rule):
    e = rule.expr
    if e is None:
        return None
    if isinstance(e, A.Call) and e.name in ("sum", "avg", "min", "max") and len(e.args) == 1 and isinstance(e.args[0], A.Var):
        return None
    return "head expression must be one aggregate over a column"


def _sql_head_ceis(rule):
    for c in A.conjuncts(rule.constraint):
        c = A.strip_group(c)
        if isinstance(c, A.Cei) and c.name == "card":
            args = A.cei_variable_args(c)
            if A.cei_relation_arg(c) != rule.head.rel or len(args) != 1 or not isinstance(args[0], A.Lit):
                return "card is only allowed as a LIMIT on the head"
    return None


def _einsum_shape(rule):
    value_vars = set()
    for c in A.conjuncts(rule.constraint):
        c = A.strip_group(c)
        if isinstance(c, A.Compare) and c.op == "=" and isinstance(c.left, A.Var) and isinstance(c.right, A.Access):
            value_vars.add(c.left.name)
            if any(len(g) != 1 for g in c.right.args):
                return "operands must be accessed one index per level"
    if rule.expr is None:
        return "einsum rules carry a value"
    for sub in A.walk_expr(rule.expr):
        if isinstance(sub, A.Var) and sub.name not in value_vars:
            return f"{sub.name} in the head expression is not an operand value"
        if isinstance(sub, A.Binary) and sub.op not in ("+", "*"):
            return f"operator {sub.op} is not an einsum operator"
        if isinstance(sub, (A.Lit, A.Access, A.Call, A.Neg)):
            return "head expression must combine operand values with + and *"
    return None


_ALL_CONSTRAINTS = frozenset({AND, OR, NOT, ATOM, NESTED, COMPARE})
_ALL_EXPRS = frozenset({VAR, LIT, ACCESS, BINARY, NEG, CALL})

CATALOG: dict[str, SlangSpec] = {}


def _register(spec: SlangSpec) -> SlangSpec:
    CATALOG[spec.name] = spec
    return spec


LOGICAL_DECLARATIVE = _register(
    SlangSpec(
        "logical-declarative",
        "the full declarative core without imperative actions",
        _ALL_CONSTRAINTS,
        A.CEI_NAMES,
        _ALL_EXPRS,
        A.EEI_NAMES,
    )
)
LOGICAL_JOIN = _register(
    SlangSpec(
        "logical-join",
        "flat conjunctive rules over set relations",
        frozenset({AND, ATOM, COMPARE}),
        frozenset(),
        frozenset({VAR, ACCESS}),
        frozenset(),
        comparisons=frozenset({"="}),
        structural=(
            Structural("heads are sets", _set_head),
            Structural("accesses take one argument list", _flat_accesses),
            Structural("access arguments are variables", _variable_args),
            Structural("comparisons equate two variables", _var_equalities),
        ),
    )
)
PHYSICAL_JOIN = _register(
    SlangSpec(
        "physical-join",
        "join plans over hash tables, sorted runs and tries",
        frozenset({AND, ATOM, NESTED, COMPARE}),
        frozenset({"order"}),
        frozenset({VAR, ACCESS}),
        frozenset(),
        comparisons=frozenset({"="}),
        structural=(
            Structural("heads are sets", _set_head),
            Structural("access arguments are variables", _variable_args),
            Structural("comparisons equate two variables", _var_equalities),
        ),
    )
)
DENSE_TENSOR = _register(
    SlangSpec(
        "dense-tensor",
        "dense tensor algebra: card-declared shapes, index ranges and element access",
        frozenset({AND, COMPARE}),
        frozenset({"card"}),
        frozenset({VAR, LIT, ACCESS, BINARY, NEG, CALL}),
        frozenset({"sum", "relu", "sin", "cos"}),
        structural=(Structural("heads carry a value", _valued_head),),
    )
)
SPARSE_TENSOR = _register(
    SlangSpec(
        "sparse-tensor",
        "sparse tensors as coordinate relations or compressed-row decodings",
        frozenset({AND, ATOM, COMPARE}),
        frozenset({"card"}),
        frozenset({VAR, LIT, ACCESS, BINARY, NEG, CALL}),
        frozenset({"sum", "relu", "sin", "cos"}),
        structural=(Structural("heads carry a value", _valued_head),),
    )
)
SQL_CORE = _register(
    SlangSpec(
        "sql-core",
        "select-from-where-group-by queries with order and limit",
        frozenset({AND, ATOM, COMPARE}),
        frozenset({"order", "card"}),
        frozenset({VAR, LIT, CALL}),
        frozenset({"sum", "avg", "min", "max"}),
        structural=(
            Structural("accesses take one argument list", _flat_accesses),
            Structural("each column variable occurs in one atom position", _sql_atoms),
            Structural("at most one aggregate, over a column", _sql_expr),
            Structural("card only limits the head", _sql_head_ceis),
        ),
    )
)
EINSUM_CORE = _register(
    SlangSpec(
        "einsum-core",
        "index-notation contractions: operand values combined with + and *",
        frozenset({AND, COMPARE}),
        frozenset({"card"}),
        frozenset({VAR, LIT, ACCESS, BINARY}),
        frozenset(),
        comparisons=frozenset({"=", "<", "<="}),
        structural=(Structural("head combines operand values with + and *", _einsum_shape),),
    )
)


def get(name: str) -> SlangSpec:
    try:
        return CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown slang {name!r}; known: {', '.join(CATALOG)}") from None
