"""Safety analysis: order a rule body into generators and filters.

The planner is greedy.  After every generator it places each filter whose
inputs have become ground.  Generators are tried in priority order:
relation atoms and `card` shape lookups, then bounded integer ranges, then
equalities with a ground side, then value scans `v = X(...)` with unbound
key arguments, then disjunctions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

from .. import ast as A
from ..errors import CheckError, error
from ..syntax import print_constraint, print_expr

GENERATE = "generate"
FILTER = "filter"

_LOWER = {"<=": (False, True), "<": (True, True), ">=": (False, False), ">": (True, False)}
_FLIP = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "=": "=", "!=": "!="}


@dataclass(frozen=True)
class Step:
    kind: str  # generate | filter
    method: str  # atom scan lookup range card or nested not compare atom-check type card-check
    node: A.Constraint
    binds: tuple[str, ...] = ()
    var: str | None = None
    value: A.Expr | None = None  # lookup: the ground side; scan: the value side
    access: A.Access | None = None
    lower: tuple[tuple[A.Expr, bool], ...] = ()  # (bound, strict)
    upper: tuple[tuple[A.Expr, bool], ...] = ()
    branches: tuple["BindingPlan", ...] = ()
    refinement: bool = False

    def describe(self) -> str:
        if self.method == "range":
            lo = ", ".join(print_expr(e) + ("+" if s else "") for e, s in self.lower)
            hi = ", ".join(print_expr(e) + ("" if s else "+") for e, s in self.upper)
            lo = lo if len(self.lower) == 1 else f"max({lo})"
            hi = hi if len(self.upper) == 1 else f"min({hi})"
            return f"Gen {self.var} in [{lo}, {hi})"
        if self.method == "lookup":
            return f"Gen {self.var}={print_expr(self.value)}"
        verb = "Gen" if self.kind == GENERATE else "Filter"
        return f"{verb} {print_constraint(self.node)}"


@dataclass(frozen=True)
class BindingPlan:
    steps: tuple[Step, ...]
    bound_in: frozenset[str] = frozenset()
    binds: frozenset[str] = frozenset()

    def describe(self) -> list[str]:
        return [s.describe() for s in self.steps]

    def __str__(self) -> str:
        return "; ".join(self.describe())


@dataclass(frozen=True)
class HeadInfo:
    order: tuple[int, ...] = ()  # head key columns
    cap: int | None = None
    shape: tuple[A.Expr, ...] | None = None
    grouping: str | None = None  # outermost grouping EEI of the head expr


@dataclass(frozen=True)
class RulePlan:
    rule: A.Rule  # wildcard-free, desugared
    body: BindingPlan
    head: HeadInfo
    relvars: frozenset[str]


@dataclass
class PlanContext:
    relvars: frozenset[str] = frozenset()
    card_hints: dict[str, int] = field(default_factory=dict)
    head_rel: str | None = None
    label: str = ""
    line: int = 0
    outer: frozenset[str] = frozenset()  # variables used outside the constraint being planned


# ---------------------------------------------------------------- wildcard freshening


def freshen_wildcards(rule: A.Rule) -> A.Rule:
    """Replace every `_` in the body by a distinct fresh variable."""
    counter = itertools.count()

    def fresh_expr(e):
        if isinstance(e, A.Wildcard):
            return A.Var(f"_{next(counter)}")
        if isinstance(e, A.Access):
            return A.Access(e.rel, tuple(tuple(fresh_expr(a) for a in g) for g in e.args))
        if isinstance(e, A.Binary):
            return A.Binary(e.op, fresh_expr(e.left), fresh_expr(e.right))
        if isinstance(e, A.Neg):
            return A.Neg(fresh_expr(e.operand))
        if isinstance(e, A.Call):
            return A.Call(e.name, tuple(fresh_expr(a) for a in e.args))
        return e

    def fresh(c):
        if isinstance(c, A.And):
            return A.And(tuple(fresh(i) for i in c.items))
        if isinstance(c, A.Or):
            return A.Or(tuple(fresh(i) for i in c.items))
        if isinstance(c, A.Not):
            return A.Not(fresh(c.body))
        if isinstance(c, A.Group):
            return A.Group(fresh(c.body))
        if isinstance(c, A.Atom):
            return A.Atom(fresh_expr(c.access))
        if isinstance(c, A.Compare):
            return A.Compare(fresh_expr(c.left), c.op, fresh_expr(c.right))
        if isinstance(c, A.Cei):
            return A.Cei(c.name, tuple(tuple(fresh_expr(a) for a in g) for g in c.args))
        if isinstance(c, A.NestedRule):
            r = c.rule
            return A.NestedRule(A.Rule(r.head, r.action, fresh(r.constraint), r.expr, r.line, r.column))
        return c

    return A.Rule(rule.head, rule.action, fresh(rule.constraint), rule.expr, rule.line, rule.column)


def is_fresh(name: str) -> bool:
    return name.startswith("_")


# ---------------------------------------------------------------- helpers


def _needs(e: A.Expr, relvars) -> set[str]:
    """Names that must be bound before `e` can be evaluated."""
    out = set()
    for sub in A.walk_expr(e):
        if isinstance(sub, A.Var):
            out.add(sub.name)
        elif isinstance(sub, A.Access) and sub.rel in relvars:
            out.add(sub.rel)
    return out


def constraint_needs(c: A.Constraint, relvars) -> set[str]:
    out: set[str] = set()
    for node in A.walk_constraint(c):
        if isinstance(node, A.NestedRule):
            out.add(node.rule.head.rel)
            continue
        for e in A.constraint_exprs(node):
            if isinstance(node, A.Cei) and e not in A.cei_variable_args(node):
                continue
            out |= _needs(e, relvars)
    return out


def _ground(e: A.Expr, bound, relvars) -> bool:
    return _needs(e, relvars) <= bound


def _safety(code: str, message: str, ctx: PlanContext) -> CheckError:
    return CheckError(error(code, message, rule=ctx.label, line=ctx.line))


def head_constraint(c: A.Constraint, head_rel: str | None) -> bool:
    """`order(...)` and `card(Head, ...)` describe the head, not the body."""
    if not isinstance(c, A.Cei):
        return False
    if c.name == "order":
        return True
    return c.name == "card" and head_rel is not None and A.cei_relation_arg(c) == head_rel


def metadata_constraint(c: A.Constraint) -> bool:
    if not isinstance(c, A.Cei):
        return False
    if c.name in ("fdep", "pkey", "unique", "deg"):
        return True
    return c.name == "type" and A.cei_relation_arg(c) is not None


# ---------------------------------------------------------------- planning


def plan_constraint(c: A.Constraint, bound: frozenset[str], ctx: PlanContext) -> BindingPlan:
    items = [i for i in A.conjuncts(c) if not metadata_constraint(i)]
    return _plan(items, frozenset(bound), ctx)


def _plan(items: list[A.Constraint], bound: frozenset[str], ctx: PlanContext) -> BindingPlan:
    relvars = ctx.relvars
    bound_in = bound
    bound = set(bound)
    remaining = list(enumerate(items))
    steps: list[Step] = []
    all_needs = [constraint_needs(c, relvars) for c in items]

    def others(idx: int) -> set[str]:
        out = set(ctx.outer)
        for k, n in enumerate(all_needs):
            if k != idx:
                out |= n
        return out

    while True:
        progress = True
        while progress:
            progress = False
            for pos, (idx, c) in enumerate(remaining):
                step = _filter_step(c, bound, ctx, others(idx))
                if step is not None:
                    steps.append(step)
                    bound |= set(step.binds)
                    del remaining[pos]
                    progress = True
                    break
        if not remaining:
            break
        choice = _choose_generator(remaining, bound, ctx, others)
        if choice is None:
            _unsafe(remaining, bound, ctx)
        step, consumed = choice
        steps.append(step)
        bound |= set(step.binds)
        remaining = [(i, c) for i, c in remaining if i not in consumed]
    return BindingPlan(tuple(steps), bound_in, frozenset(bound) - bound_in)


def _unsafe(remaining, bound, ctx: PlanContext):
    relvars = ctx.relvars
    for _, c in remaining:
        c = A.strip_group(c)
        if isinstance(c, A.Not):
            missing = sorted(v for v in constraint_needs(c, relvars) - bound if not is_fresh(v))
            if missing:
                raise _safety(
                    "unsafe-negation",
                    f"negation over non-ground variable(s) {', '.join(missing)}",
                    ctx,
                )
    for _, c in remaining:
        if isinstance(A.strip_group(c), A.NestedRule):
            _nested_form(A.strip_group(c), ctx)
    missing = set()
    for _, c in remaining:
        missing |= constraint_needs(c, relvars) - bound
    names = sorted(v for v in missing if not is_fresh(v)) or sorted(missing)
    raise _safety(
        "unsafe-variable",
        f"variable(s) {', '.join(names)} cannot be grounded by any relation access, "
        "bounded range, or equality",
        ctx,
    )


def _nested_form(c: A.NestedRule, ctx: PlanContext) -> A.Access:
    r = c.rule
    body = A.strip_group(r.constraint)
    if (
        r.head.args
        or r.action != ":="
        or r.expr is not None
        or not isinstance(body, A.Atom)
    ):
        raise _safety(
            "unsupported",
            "unsupported nested rule form; expected (Rv := X(args))",
            ctx,
        )
    return body.access


def _filter_step(c, bound, ctx: PlanContext, outside: set[str]) -> Step | None:
    relvars = ctx.relvars
    node = c
    c = A.strip_group(c)
    if isinstance(c, A.NestedRule):
        acc = _nested_form(c, ctx)
        if acc.rel in relvars and acc.rel not in bound:
            return None
        if all(_ground(a, bound, relvars) for a in acc.flat_args):
            return Step(FILTER, "nested", node, binds=(c.rule.head.rel,), access=acc)
        return None
    needs = constraint_needs(c, relvars)
    if isinstance(c, A.Or):
        if not needs <= bound:
            return None
        branches = tuple(_try_plan(b, bound, ctx) for b in c.items)
        if any(b is None for b in branches):
            return None
        return Step(FILTER, "or", node, branches=branches)
    if isinstance(c, A.Not):
        if not {v for v in needs if not is_fresh(v)} <= bound:
            return None
        sub = _try_plan(c.body, bound, ctx)
        if sub is None:
            return None
        return Step(FILTER, "not", node, branches=(sub,))
    if not needs <= bound:
        return None
    if isinstance(c, A.Atom):
        if c.access.rel in relvars and c.access.rel not in bound:
            return None
        return Step(FILTER, "atom-check", node, access=c.access)
    if isinstance(c, A.Compare):
        return Step(FILTER, "compare", node)
    if isinstance(c, A.Cei):
        if c.name == "card":
            rel = A.cei_relation_arg(c)
            if rel in relvars and rel not in bound:
                return None
            return Step(FILTER, "card-check", node)
        if c.name == "type":
            return Step(FILTER, "type", node)
        return None
    return None


def _try_plan(c, bound, ctx: PlanContext) -> BindingPlan | None:
    try:
        return plan_constraint(c, frozenset(bound), _inner(ctx, c, bound))
    except CheckError:
        return None


def _inner(ctx: PlanContext, c, bound) -> PlanContext:
    return PlanContext(ctx.relvars, ctx.card_hints, ctx.head_rel, ctx.label, ctx.line, frozenset())


def _choose_generator(remaining, bound, ctx: PlanContext, others):
    relvars = ctx.relvars
    # 1. atoms and card shape lookups
    tier = []
    for idx, c in remaining:
        s = A.strip_group(c)
        step = None
        if isinstance(s, A.Atom):
            step = _atom_gen(s, c, bound, relvars)
            rel = s.access.rel
        elif isinstance(s, A.Cei) and s.name == "card":
            step = _card_gen(s, c, bound, relvars)
            rel = A.cei_relation_arg(s)
        if step is not None:
            tier.append((ctx.card_hints.get(rel, math.inf), idx, step))
    if tier:
        _, idx, step = min(tier, key=lambda t: (t[0], t[1]))
        return step, {idx}
    # 2. ranges
    rng = _range_gen(remaining, bound, relvars)
    if rng is not None:
        return rng
    # 3. equalities with a ground side
    for idx, c in remaining:
        s = A.strip_group(c)
        if isinstance(s, A.Compare) and s.op == "=":
            for var, other in ((s.left, s.right), (s.right, s.left)):
                if (
                    isinstance(var, A.Var)
                    and var.name not in bound
                    and _ground(other, bound, relvars)
                ):
                    return Step(GENERATE, "lookup", c, (var.name,), var.name, other), {idx}
    # 4. value scans
    for idx, c in remaining:
        s = A.strip_group(c)
        if isinstance(s, A.Compare) and s.op == "=":
            step = _scan_gen(s, c, bound, relvars)
            if step is not None:
                return step, {idx}
    # 5. disjunctions
    for idx, c in remaining:
        s = A.strip_group(c)
        if isinstance(s, A.Or):
            step = _or_gen(s, c, bound, ctx, others(idx))
            if step is not None:
                return step, {idx}
    return None


def _key_args_ok(acc: A.Access, bound, relvars) -> bool:
    if acc.rel in relvars and acc.rel not in bound:
        return False
    return all(isinstance(a, A.Var) or _ground(a, bound, relvars) for a in acc.flat_args)


def _unbound_args(acc: A.Access, bound) -> tuple[str, ...]:
    out = []
    for a in acc.flat_args:
        if isinstance(a, A.Var) and a.name not in bound and a.name not in out:
            out.append(a.name)
    return tuple(out)


def _atom_gen(s: A.Atom, node, bound, relvars) -> Step | None:
    acc = s.access
    if not _key_args_ok(acc, bound, relvars):
        return None
    binds = _unbound_args(acc, bound)
    if not binds:
        return None
    return Step(GENERATE, "atom", node, binds, access=acc)


def _card_gen(s: A.Cei, node, bound, relvars) -> Step | None:
    rel = A.cei_relation_arg(s)
    if rel is None or (rel in relvars and rel not in bound):
        return None
    args = A.cei_variable_args(s)
    if not all(isinstance(a, A.Var) or _ground(a, bound, relvars) for a in args):
        return None
    binds = []
    for a in args:
        if isinstance(a, A.Var) and a.name not in bound and a.name not in binds:
            binds.append(a.name)
    if not binds:
        return None
    return Step(GENERATE, "card", node, tuple(binds))


def _scan_gen(s: A.Compare, node, bound, relvars) -> Step | None:
    for value, acc in ((s.left, s.right), (s.right, s.left)):
        if not isinstance(acc, A.Access) or not _key_args_ok(acc, bound, relvars):
            continue
        if not (isinstance(value, A.Var) or _ground(value, bound, relvars)):
            continue
        binds = list(_unbound_args(acc, bound))
        if not binds:
            continue
        if isinstance(value, A.Var) and value.name not in bound and value.name not in binds:
            binds.append(value.name)
        return Step(GENERATE, "scan", node, tuple(binds), value=value, access=acc)
    return None


def _bound_of(s: A.Compare, var: str):
    """If `s` bounds `var` with its other side, return (other, strict, is_lower)."""
    if s.op not in _LOWER:
        return None
    if isinstance(s.right, A.Var) and s.right.name == var:
        strict, lower = _LOWER[s.op]
        return s.left, strict, lower
    if isinstance(s.left, A.Var) and s.left.name == var:
        strict, lower = _LOWER[_FLIP[s.op]]
        return s.right, strict, lower
    return None


def _range_gen(remaining, bound, relvars):
    candidates = []
    seen = set()
    for idx, c in remaining:
        s = A.strip_group(c)
        if not isinstance(s, A.Compare):
            continue
        for side in (s.left, s.right):
            if isinstance(side, A.Var) and side.name not in bound and side.name not in seen:
                seen.add(side.name)
                candidates.append(side.name)
    for var in candidates:
        lower, upper, used = [], [], set()
        for idx, c in remaining:
            s = A.strip_group(c)
            if not isinstance(s, A.Compare):
                continue
            b = _bound_of(s, var)
            if b is None:
                continue
            other, strict, is_lower = b
            if var in _needs(other, relvars) or not _ground(other, bound, relvars):
                continue
            (lower if is_lower else upper).append((other, strict))
            used.add(idx)
        if lower and upper:
            first = min(used)
            node = dict(remaining)[first]
            return (
                Step(GENERATE, "range", node, (var,), var, lower=tuple(lower), upper=tuple(upper)),
                used,
            )
    return None


def _or_gen(s: A.Or, node, bound, ctx: PlanContext, outside: set[str]) -> Step | None:
    relvars = ctx.relvars
    branches = []
    common = None
    for b in s.items:
        plan = _try_plan(b, bound, ctx)
        if plan is None:
            return None
        branches.append(plan)
        vs = constraint_needs(b, relvars) - bound
        common = vs if common is None else common & vs
    needs = constraint_needs(s, relvars) - bound
    # a variable bound in only some branches must not leak to the rest of the rule
    if (needs - common) & outside:
        return None
    binds = tuple(sorted(v for v in common if not is_fresh(v)))
    if not binds:
        return None
    return Step(GENERATE, "or", node, binds, branches=tuple(branches))


# ---------------------------------------------------------------- rules


def head_info(rule: A.Rule, head_items: list[A.Constraint]) -> HeadInfo:
    key_pos = {}
    for k, a in enumerate(rule.head.flat_args):
        if isinstance(a, A.Var):
            key_pos.setdefault(a.name, k)
    order: list[int] = []
    cap = None
    shape = None
    for c in head_items:
        if c.name == "order":
            for a in c.flat_args:
                if not isinstance(a, A.Var) or a.name not in key_pos:
                    raise CheckError(
                        error(
                            "order-column",
                            f"order({print_expr(a)}) must name a head key variable",
                            rule=rule.head.rel,
                            line=rule.line,
                        )
                    )
                order.append(key_pos[a.name])
        else:
            args = A.cei_variable_args(c)
            if len(args) == 1 and isinstance(args[0], A.Lit) and isinstance(args[0].value, int):
                cap = args[0].value
            else:
                shape = tuple(args)
    grouping = None
    if isinstance(rule.expr, A.Call) and rule.expr.name in A.GROUPING_EEIS:
        grouping = rule.expr.name
    return HeadInfo(tuple(order), cap, shape, grouping)


def plan_rule(
    rule: A.Rule,
    params=frozenset(),
    card_hints: dict[str, int] | None = None,
) -> RulePlan:
    """Plan a desugared rule.  Raises CheckError with a safety diagnostic."""
    rule = freshen_wildcards(rule)
    relvars = frozenset(A.relation_variables(rule))
    ctx = PlanContext(relvars, dict(card_hints or {}), rule.head.rel, rule.head.rel, rule.line)
    items = A.conjuncts(rule.constraint)
    head_items = [c for c in items if head_constraint(c, rule.head.rel)]
    body_items = [c for c in items if not head_constraint(c, rule.head.rel)]
    head_needs = _needs(rule.head, relvars)
    if rule.expr is not None:
        head_needs |= _needs(rule.expr, relvars)
    for c in head_items:
        for a in A.cei_variable_args(c):
            head_needs |= _needs(a, relvars)
    ctx.outer = frozenset(head_needs)
    body_items = [c for c in body_items if not metadata_constraint(c)]
    bound = frozenset(params) - _shadowed(rule)
    plan = _plan(body_items, bound, ctx)
    reach = set(plan.bound_in) | set(plan.binds)
    missing = sorted(v for v in head_needs - reach)
    if missing:
        raise _safety(
            "unsafe-variable",
            f"head variable(s) {', '.join(missing)} are not bound by the body",
            ctx,
        )
    return RulePlan(rule, plan, head_info(rule, head_items), relvars)


def _shadowed(rule: A.Rule) -> set[str]:
    return set(A.relation_variables(rule))
