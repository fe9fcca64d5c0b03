"""Lowering dense tensor rules to sparse storage formats.

``coo`` turns an order-n operand ``B`` into the set relation ``B_coo`` with
n+1 columns, the value last.  ``csr`` replaces a matrix operand ``B`` by
``B_CSR``, defined by a decoding rule over the arrays ``(n, P, I, V)``.
``dense`` leaves the program alone after checking that every operand has
a declared shape.

Sparse lowering drops the zero entries of an operand, so it is only sound
when the head value is zero whenever that operand's value is; rules where
this cannot be shown syntactically are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass

from .. import ast as A
from ..errors import LoweringError, error
from ..relation import Database, DenseRelation, csr_relations, to_coo, to_csr

FORMATS = ("dense", "coo", "csr")

_ORDERING = {"<", "<=", ">", ">="}
# EEIs f with f(0) = 0, applied elementwise
_ZERO_PRESERVING = {"relu", "sin", "sum"}


def _fail(code: str, message: str, rule: A.Rule | None = None):
    kw = {"rule": rule.head.rel, "line": rule.line} if rule is not None else {}
    raise LoweringError(error(code, message, **kw))


def tensor_orders(program: A.Program) -> dict[str, int]:
    """Input tensors read by valued rules, with their order."""
    heads = {r.head.rel for r in program.rules}
    out: dict[str, int] = {}
    for r in program.rules:
        for acc in A.rule_accesses(r):
            if acc.rel in heads:
                continue
            order = len(acc.flat_args)
            if out.setdefault(acc.rel, order) != order:
                _fail("kind", f"{acc.rel} is accessed with {out[acc.rel]} and {order} indices", r)
    return out


def select_operands(program: A.Program, fmt: str, operands=None) -> dict[str, int]:
    orders = tensor_orders(program)
    if operands is None:
        chosen = {k: v for k, v in orders.items() if v >= 1 and (fmt != "csr" or v == 2)}
    else:
        chosen = {}
        for name in operands:
            if name not in orders:
                _fail("unknown-operand", f"{name} is not an input tensor of the program")
            chosen[name] = orders[name]
    if fmt == "csr":
        for name, order in chosen.items():
            if order != 2:
                _fail("csr-order", f"CSR needs an order-2 tensor; {name} has order {order}")
        if not chosen:
            _fail("csr-order", "CSR lowering found no order-2 input tensor")
    return chosen


@dataclass(frozen=True)
class CsrNames:
    rel: str
    n: str
    P: str
    I: str
    V: str


def csr_names(operands: dict[str, int], prefix: str = "") -> dict[str, CsrNames]:
    """The conventional names n, P, I, V for one matrix; suffixed per matrix otherwise."""
    single = len(operands) == 1
    out = {}
    for name in operands:
        sfx = "" if single else f"_{name}"
        out[name] = CsrNames(f"{prefix}{name}_CSR", f"n{sfx}", f"P{sfx}", f"I{sfx}", f"V{sfx}")
    return out


def coo_name(name: str, prefix: str = "") -> str:
    return f"{prefix}{name}_coo"


def decode_rule(names: CsrNames) -> A.Rule:
    """`B_CSR(i)(j) := V(p) if (0<=i<n),(p1=P(i)),(p2=P(i+1)),(p1<=p<p2),(j=I(p))`."""
    i, j, p, p1, p2 = (A.Var(v) for v in ("i", "j", "p", "p1", "p2"))
    n = A.Var(names.n)
    body = [
        A.Group(A.Chain((A.Lit(0), i, n), ("<=", "<"))),
        A.Group(A.Compare(p1, "=", A.access(names.P, [i]))),
        A.Group(A.Compare(p2, "=", A.access(names.P, [A.Binary("+", i, A.Lit(1))]))),
        A.Group(A.Chain((p1, p, p2), ("<=", "<"))),
        A.Group(A.Compare(j, "=", A.access(names.I, [p]))),
    ]
    return A.Rule(A.access(names.rel, [i], [j]), ":=", A.conj(body), A.access(names.V, [p]))


def annihilates(e: A.Expr | None, var: str) -> bool:
    """Whether `e` is syntactically zero whenever `var` is zero."""
    if e is None:
        return False
    if isinstance(e, A.Var):
        return e.name == var
    if isinstance(e, A.Lit):
        return e.value == 0 and not isinstance(e.value, (bool, str))
    if isinstance(e, A.Binary):
        if e.op == "*":
            return annihilates(e.left, var) or annihilates(e.right, var)
        if e.op == "/":
            return annihilates(e.left, var)
        return annihilates(e.left, var) and annihilates(e.right, var)
    if isinstance(e, A.Neg):
        return annihilates(e.operand, var)
    if isinstance(e, A.Call) and e.name in _ZERO_PRESERVING and len(e.args) == 1:
        return annihilates(e.args[0], var)
    return False


def _value_var(acc: A.Access, used: set[str]) -> str:
    base = acc.rel.lower()
    name, k = base, 1
    while name in used or not name[:1].isalpha():
        k += 1
        name = f"{base}{k}" if base[:1].isalpha() else f"v{k}"
    used.add(name)
    return name


def _lift_accesses(rule: A.Rule) -> tuple[list[A.Constraint], list[A.Constraint], A.Expr | None]:
    """Bind every access in the head expression to a value variable."""
    used = set(A.free_variables(rule))
    bound: dict[A.Access, str] = {}
    bindings: list[A.Constraint] = []

    def fn(e):
        if isinstance(e, A.Access):
            if e not in bound:
                bound[e] = _value_var(e, used)
                bindings.append(A.Compare(A.Var(bound[e]), "=", e))
            return A.Var(bound[e])
        return e

    expr = A.map_expr(rule.expr, fn) if rule.expr is not None else None
    return bindings, A.conjuncts(rule.constraint), expr


def _operand_binding(c: A.Constraint, ops) -> tuple[str, A.Access] | None:
    c = A.strip_group(c)
    if isinstance(c, A.Compare) and c.op == "=":
        for val, acc in ((c.left, c.right), (c.right, c.left)):
            if isinstance(val, A.Var) and isinstance(acc, A.Access) and acc.rel in ops:
                return val.name, acc
    return None


def _shape_of(body, name) -> list[A.Expr] | None:
    for c in body:
        c = A.strip_group(c)
        if isinstance(c, A.Cei) and c.name == "card" and A.cei_relation_arg(c) == name:
            return list(A.cei_variable_args(c))
    return None


def _implied_range(c: A.Compare, dims: dict[str, list[A.Expr]]) -> bool:
    """`0 <= i`, `i >= 0`, `i < d` or `d > i` where d is i's declared extent."""
    left, op, right = c.left, c.op, c.right
    if op in (">", ">="):
        left, right = right, left
        op = {">": "<", ">=": "<="}[op]
    if op == "<=" and isinstance(left, A.Lit) and left.value == 0 and isinstance(right, A.Var):
        return right.name in dims
    if op == "<" and isinstance(left, A.Var) and left.name in dims:
        return any(right == d for d in dims[left.name])
    return False


def _lower_rule(rule: A.Rule, fmt: str, ops: dict[str, int], names, prefix: str) -> A.Rule:
    bindings, body, expr = _lift_accesses(rule)
    body = bindings + body
    touched = {acc.rel for acc in A.rule_accesses(rule) if acc.rel in ops}
    if not touched:
        return rule
    if not rule.is_valued:
        _fail("unsupported", f"{rule.head.rel}: sparse lowering needs a valued head", rule)
    head_vars = A.expr_vars(rule.head)
    dims: dict[str, list[A.Expr]] = {}  # index var -> extents it ranges over
    value_vars: dict[str, str] = {}
    out: list[A.Constraint] = []
    for c in body:
        hit = _operand_binding(c, ops)
        if hit is None:
            out.append(c)
            continue
        var, acc = hit
        if any(not isinstance(a, A.Var) for a in acc.flat_args):
            _fail("unsupported", f"{acc.rel} must be indexed by variables", rule)
        if var in head_vars:
            _fail("unsupported", f"value {var} of {acc.rel} is used as a head key", rule)
        value_vars[var] = acc.rel
        shape = _shape_of(body, acc.rel) or []
        for k, a in enumerate(acc.flat_args):
            dims.setdefault(a.name, [])
            if k < len(shape):
                dims[a.name].append(shape[k])
        if fmt == "csr":
            out.append(A.Compare(A.Var(var), "=", A.Access(names[acc.rel].rel, acc.args)))
        else:
            out.append(A.atom(coo_name(acc.rel, prefix), [*acc.flat_args, A.Var(var)]))
    for var, rel in value_vars.items():
        if not annihilates(expr, var):
            _fail("non-annihilating", f"{rule.head.rel}: the head value need not vanish when {rel} is zero", rule)
    leftover = [a.rel for c in out for a in A.accesses(c) if a.rel in ops]
    if leftover:
        _fail("unsupported", f"{leftover[0]} is accessed outside a value binding", rule)

    kept = []
    for c in out:
        s = A.strip_group(c)
        if isinstance(s, A.Cei) and s.name == "card":
            rel = A.cei_relation_arg(s)
            args = A.cei_variable_args(s)
            # shapes of converted operands are implied; multi-dimensional head shapes would densify
            if rel in ops or (rel == rule.head.rel and len(args) != 1):
                continue
        if isinstance(s, A.Compare) and s.op in _ORDERING and _implied_range(s, dims):
            continue
        kept.append(c)

    # shape-only cards whose variables nothing else reads
    def others_use(idx, names_):
        rest = set(A.expr_vars(rule.head)) | (A.expr_vars(expr) if expr is not None else set())
        for k, c in enumerate(kept):
            if k != idx:
                rest |= A.constraint_vars(c)
        return bool(names_ & rest)

    final = []
    for k, c in enumerate(kept):
        s = A.strip_group(c)
        if isinstance(s, A.Cei) and s.name == "card" and A.cei_relation_arg(s) != rule.head.rel:
            vs = [a for a in A.cei_variable_args(s)]
            if vs and all(isinstance(a, A.Var) for a in vs) and not others_use(k, {a.name for a in vs}):
                continue
        final.append(c)
    return A.Rule(rule.head, rule.action, A.conj(final), expr, rule.line, rule.column)


def check_shapes(program: A.Program) -> None:
    orders = tensor_orders(program)
    for r in program.rules:
        body = A.conjuncts(r.constraint)
        for acc in A.rule_accesses(r):
            if acc.rel in orders and orders[acc.rel] >= 1 and _shape_of(body, acc.rel) is None:
                _fail("shape-incomplete", f"{r.head.rel}: no card(...) declares the shape of {acc.rel}", r)


def lower_tensor(program: A.Program, fmt: str, operands=None, prefix: str = "") -> A.Program:
    """Rewrite dense tensor rules for the storage format `fmt`."""
    if fmt not in FORMATS:
        raise LoweringError(error("usage", f"unknown tensor format {fmt!r}; choose from {', '.join(FORMATS)}"))
    if fmt == "dense":
        check_shapes(A.desugar(program))
        return program
    program = A.desugar(program)
    ops = select_operands(program, fmt, operands)
    names = csr_names(ops, prefix) if fmt == "csr" else {}
    out: list[A.Statement] = []
    decoded: set[str] = set()
    for st in program.statements:
        if isinstance(st, A.Declaration):
            out.append(st)
            continue
        lowered = _lower_rule(st, fmt, ops, names, prefix)
        if fmt == "csr":
            for acc in A.rule_accesses(st):
                if acc.rel in ops and acc.rel not in decoded:
                    decoded.add(acc.rel)
                    out.append(decode_rule(names[acc.rel]))
        out.append(lowered)
    return A.Program(tuple(out))


def convert_database(db: Database, program: A.Program, fmt: str, operands=None, prefix: str = "") -> Database:
    """Add the storage-format relations a lowered program reads."""
    if fmt == "dense":
        return db
    ops = select_operands(A.desugar(program), fmt, operands)
    out = db.copy()
    for name in ops:
        if name not in db:
            raise LoweringError(error("data", f"operand {name} is missing from the database"))
        rel = db[name]
        if fmt == "coo":
            out.put(coo_name(name, prefix), to_coo(rel))
            continue
        nrows = rel.shape[0] if isinstance(rel, DenseRelation) else None
        n, P, I, V = to_csr(rel, nrows)
        rels, params = csr_relations(n, P, I, V)
        nm = csr_names(ops, prefix)[name]
        for key, r in rels.items():
            out.put(getattr(nm, key), r)
        out.params[nm.n] = params["n"]
    return out
