"""Evaluation of checked programs.

Rule bodies run as their binding plans: each step extends or filters a
stream of bindings (dicts from variable to scalar, or to a sub-relation
for relation variables).  Head keys and expressions are evaluated per
binding and merged with the head semiring's addition, except when the
head expression is an aggregate, which groups by the full head key.

Strata run in order.  Within one, the `:=` rules are iterated to a
fixpoint (naively or semi-naively) and the imperative rules then run
once each in textual order.
"""

from __future__ import annotations

import math
import os
import statistics
import time
from dataclasses import dataclass, field
from typing import Iterator

from . import ast as A
from .check import check_program, plan_rule
from .check.integrity import relation_card
from .check.planner import (
    FILTER,
    BindingPlan,
    PlanContext,
    RulePlan,
    Step,
    freshen_wildcards,
    plan_constraint,
)
from .check.types import relation_semirings
from .errors import Diagnostic, EvalError, KindError, ShapeError, error, warning
from .relation import FLAT, Database, DenseRelation, Relation, build_layout, dense, ordered
from .semiring import BOOLEAN, REAL, Semiring

DELTA = "Δ"  # prefix of per-round delta relations; cannot occur in source names
DEFAULT_MAX_ITERATIONS = 10_000

_MATH = {
    "sin": math.sin,
    "cos": math.cos,
    "relu": lambda x: x if x > 0 else 0.0 * x,
}


@dataclass
class EvalConfig:
    mode: str = "semi-naive"  # or "naive"
    strict: bool = False
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    count: bool = True
    check_monotone: bool = False

    def __post_init__(self):
        if self.mode not in ("naive", "semi-naive"):
            raise ValueError(f"unknown evaluation mode {self.mode!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")

    @classmethod
    def from_env(cls, **kw) -> "EvalConfig":
        env = os.environ.get("HOJABR_MAX_ITERS")
        if env and "max_iterations" not in kw:
            kw["max_iterations"] = int(env)
        return cls(**kw)


@dataclass
class RuleStats:
    derivations: int = 0
    enumerations: int = 0
    output_size: int = 0

    def to_json(self) -> dict:
        return {
            "derivations": self.derivations,
            "enumerations": self.enumerations,
            "outputSize": self.output_size,
        }


@dataclass
class RunReport:
    rules: dict[str, RuleStats] = field(default_factory=dict)
    iterations: list[int] = field(default_factory=list)
    wall_time: float = 0.0
    warnings: list[Diagnostic] = field(default_factory=list)

    @property
    def derivations(self) -> int:
        return sum(s.derivations for s in self.rules.values())

    @property
    def enumerations(self) -> int:
        return sum(s.enumerations for s in self.rules.values())

    def to_json(self, timing: bool = True) -> dict:
        out = {
            "rules": {k: v.to_json() for k, v in self.rules.items()},
            "iterations": list(self.iterations),
            "derivations": self.derivations,
            "enumerations": self.enumerations,
        }
        if timing:
            out["wallTime"] = round(self.wall_time, 6)
        if self.warnings:
            out["warnings"] = [str(w) for w in self.warnings]
        return out


# ---------------------------------------------------------------- scalar helpers


def _compare(op: str, a, b) -> bool:
    try:
        if op == "=":
            return a == b
        if op == "!=":
            return a != b
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        return a >= b
    except TypeError:
        return False


def _type_ok(value, tname: str) -> bool:
    t = {"integer": "int", "float": "real", "double": "real", "str": "string", "boolean": "bool"}.get(tname, tname)
    if t == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if t == "real":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if t == "string":
        return isinstance(value, str)
    if t == "bool":
        return isinstance(value, bool)
    return True


def _int_bounds(lower, upper):
    lo = -math.inf
    for v, strict in lower:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return None
        lo = max(lo, math.floor(v) + 1 if strict else math.ceil(v))
    hi = math.inf
    for v, strict in upper:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return None
        hi = min(hi, math.ceil(v) - 1 if strict else math.floor(v))
    return int(lo), int(hi)


def eval_eei(name: str, args):
    """Apply an expression extension.  Aggregates take the grouped values."""
    if name in _MATH:
        (x,) = args
        return _MATH[name](x)
    values = list(args)
    if name == "sum":
        return sum(values)
    if name == "avg":
        if not values:
            raise EvalError(error("empty-group", "avg of an empty group"))
        return sum(values) / len(values)
    if name == "min":
        return min(values)
    if name == "max":
        return max(values)
    if name == "median":
        if not values:
            raise EvalError(error("empty-group", "median of an empty group"))
        return statistics.median(values)
    if name == "softmax":
        if not values:
            return []
        m = max(values)
        exps = [math.exp(v - m) for v in values]
        total = sum(exps)
        return [e / total for e in exps]
    raise EvalError(error("unknown-eei", f"unknown expression extension {name}"))


# ---------------------------------------------------------------- executor


class Executor:
    """Runs binding plans against a database (plus per-round overlays)."""

    def __init__(
        self,
        db: Database,
        cfg: EvalConfig | None = None,
        label: str = "",
        overlays: dict | None = None,
        refinements: frozenset = frozenset(),
        stats: RuleStats | None = None,
        warnings: list | None = None,
    ):
        self.db = db
        self.cfg = cfg or EvalConfig()
        self.label = label
        self.overlays = overlays or {}
        self.refinements = refinements
        self.stats = stats if stats is not None else RuleStats()
        self.warnings = warnings if warnings is not None else []
        self._warned_overlap = False

    # -- names

    def resolve(self, name: str, b: dict):
        v = b.get(name)
        if isinstance(v, (Relation, DenseRelation)):
            return v
        rel = self.overlays.get(name)
        if rel is not None:
            return rel
        rel = self.db.relations.get(name)
        if rel is None:
            raise EvalError(
                error("undeclared", f"access to undeclared relation {name}", rule=self.label)
            )
        return rel

    def _fail(self, code: str, message: str):
        raise EvalError(error(code, message, rule=self.label))

    # -- expressions

    def value(self, e: A.Expr, b: dict):
        if isinstance(e, A.Var):
            if e.name in b:
                v = b[e.name]
                if isinstance(v, (Relation, DenseRelation)):
                    raise KindError(error("kind", f"relation variable {e.name} used as a scalar", rule=self.label))
                return v
            if e.name in self.db.params:
                return self.db.params[e.name]
            self._fail("unbound", f"variable {e.name} is not bound")
        if isinstance(e, A.Lit):
            return e.value
        if isinstance(e, A.Access):
            rel = self.resolve(e.rel, b)
            if e.levels != rel.levels:
                if len(e.levels) < rel.depth and e.levels == rel.levels[: len(e.levels)]:
                    raise KindError(
                        error("kind", f"{e.rel} applied to {len(e.levels)} argument list(s) yields a relation, not a scalar", rule=self.label)
                    )
                raise KindError(
                    error("kind", f"{e.rel} has levels {rel.levels}, accessed as {e.levels}", rule=self.label)
                )
            return rel.get(tuple(self.value(a, b) for a in e.flat_args))
        if isinstance(e, A.Binary):
            x, y = self.value(e.left, b), self.value(e.right, b)
            try:
                if e.op == "+":
                    return x + y
                if e.op == "-":
                    return x - y
                if e.op == "*":
                    return x * y
                if y == 0:
                    self._fail("division-by-zero", f"division by zero in rule {self.label}")
                return x / y
            except TypeError:
                self._fail("type", f"cannot apply {e.op} to {x!r} and {y!r}")
        if isinstance(e, A.Neg):
            x = self.value(e.operand, b)
            try:
                return -x
            except TypeError:
                self._fail("type", f"cannot negate {x!r}")
        if isinstance(e, A.Call):
            if e.name not in _MATH:
                self._fail("aggregate-position", f"{e.name} may only be the outermost head expression")
            if len(e.args) != 1:
                self._fail("arity", f"{e.name} takes one argument")
            x = self.value(e.args[0], b)
            try:
                return _MATH[e.name](x)
            except TypeError:
                self._fail("type", f"{e.name} of non-number {x!r}")
        raise EvalError(error("eval", f"cannot evaluate {e!r}", rule=self.label))

    # -- plans

    def run(self, plan: BindingPlan, b: dict) -> Iterator[dict]:
        steps = plan.steps
        n = len(steps)
        stats = self.stats

        def rec(i, b):
            if i == n:
                yield b
                return
            for b2 in self.step(steps[i], b):
                stats.enumerations += 1
                yield from rec(i + 1, b2)

        return rec(0, b)

    def step(self, s: Step, b: dict) -> Iterator[dict]:
        m = s.method
        if m == "atom":
            return self._atom(s, b)
        if m == "scan":
            return self._scan(s, b)
        if m == "lookup":
            return iter(({**b, s.var: self.value(s.value, b)},))
        if m == "range":
            return self._range(s, b)
        if m == "card":
            return self._card(s, b)
        if m == "or":
            return self._or(s, b) if s.kind != FILTER else self._or_filter(s, b)
        if m == "nested":
            return self._nested(s, b)
        return self._filter(s, b)

    def _prefix_pattern(self, acc: A.Access, rel, b):
        if acc.levels != rel.levels[: len(acc.levels)] or len(acc.levels) > rel.depth:
            raise KindError(
                error("kind", f"{acc.rel} has levels {rel.levels}, accessed as {acc.levels}", rule=self.label)
            )
        bound, free = [], []
        for k, a in enumerate(acc.flat_args):
            if isinstance(a, A.Var) and a.name not in b and a.name not in self.db.params:
                free.append((k, a.name))
            else:
                bound.append((k, self.value(a, b)))
        return sum(acc.levels), tuple(bound), free

    def _extend(self, b, free, key):
        out = dict(b)
        for k, name in free:
            v = key[k]
            if name in out and out[name] != v:
                return None
            out[name] = v
        return out

    def _atom(self, s: Step, b):
        acc = s.access
        rel = self.resolve(acc.rel, b)
        npos, bound, free = self._prefix_pattern(acc, rel, b)
        for key in rel.select(npos, bound):
            out = self._extend(b, free, key)
            if out is not None:
                yield out

    def _scan(self, s: Step, b):
        acc = s.access
        rel = self.resolve(acc.rel, b)
        if acc.levels != rel.levels:
            raise KindError(
                error("kind", f"{acc.rel} has levels {rel.levels}, accessed as {acc.levels}", rule=self.label)
            )
        npos, bound, free = self._prefix_pattern(acc, rel, b)
        val = s.value
        for key in rel.select(npos, bound):
            out = self._extend(b, free, key)
            if out is None:
                continue
            payload = rel.get(key)
            if isinstance(val, A.Var) and val.name not in out and val.name not in self.db.params:
                out[val.name] = payload
            elif self.value(val, out) != payload:
                continue
            yield out

    def _range(self, s: Step, b):
        lower = [(self.value(e, b), strict) for e, strict in s.lower]
        upper = [(self.value(e, b), strict) for e, strict in s.upper]
        bounds = _int_bounds(lower, upper)
        if bounds is None:
            return
        lo, hi = bounds
        for v in range(lo, hi + 1):
            yield {**b, s.var: v}

    def _card_values(self, node: A.Cei, b):
        rel = self.resolve(A.cei_relation_arg(node), b)
        args = A.cei_variable_args(node)
        dims = relation_card(rel, len(args))
        return args, dims

    def _card(self, s: Step, b):
        args, dims = self._card_values(A.strip_group(s.node), b)
        if len(dims) != len(args):
            return
        out = dict(b)
        for a, d in zip(args, dims):
            if isinstance(a, A.Var) and a.name not in out and a.name not in self.db.params:
                out[a.name] = d
            elif self.value(a, out) != d:
                return
        yield out

    def _or(self, s: Step, b):
        seen: dict = {}
        for k, branch in enumerate(s.branches):
            for out in self.run(branch, b):
                proj = tuple(out[v] for v in s.binds)
                if proj in seen:
                    if self.cfg.strict and seen[proj] != k and not self._warned_overlap:
                        self._warned_overlap = True
                        self.warnings.append(
                            warning(
                                "overlapping-disjuncts",
                                f"disjunction branches {seen[proj] + 1} and {k + 1} both produce {proj}",
                                rule=self.label,
                            )
                        )
                    continue
                seen[proj] = k
                new = dict(b)
                new.update(zip(s.binds, proj))
                yield new

    def _or_filter(self, s: Step, b):
        for branch in s.branches:
            for _ in self.run(branch, b):
                yield b
                return

    def _nested(self, s: Step, b):
        acc = s.access
        rel = self.resolve(acc.rel, b)
        if len(acc.levels) >= rel.depth or acc.levels != rel.levels[: len(acc.levels)]:
            raise KindError(
                error("kind", f"nested rule over {acc.rel}{acc.levels} binds a payload, not a relation", rule=self.label)
            )
        cur = rel
        for group in acc.args:
            cur = cur.lookup(tuple(self.value(a, b) for a in group))
        if cur.is_empty():
            return
        yield {**b, s.binds[0]: cur}

    def _filter(self, s: Step, b):
        node = A.strip_group(s.node)
        m = s.method
        if m == "compare":
            ok = _compare(node.op, self.value(node.left, b), self.value(node.right, b))
            if not ok and self.cfg.strict and node in self.refinements:
                self._fail("refinement", f"refinement {node.left} {node.op} {node.right} violated by binding {b}")
            if ok:
                yield b
            return
        if m == "atom-check":
            acc = node.access
            rel = self.resolve(acc.rel, b)
            npos, bound, free = self._prefix_pattern(acc, rel, b)
            if npos == rel.arity:
                if tuple(v for _, v in bound) in rel:
                    yield b
            elif rel.select(npos, bound):
                yield b
            return
        if m == "not":
            for _ in self.run(s.branches[0], b):
                return
            yield b
            return
        if m == "card-check":
            for out in self._card(s, b):
                yield b
                return
            return
        if m == "type":
            flat = node.flat_args
            if _type_ok(self.value(flat[0], b), flat[1].name):
                yield b
            return
        raise EvalError(error("eval", f"unknown plan step {m}", rule=self.label))


# ---------------------------------------------------------------- rules


def _layout_for(plan: RulePlan):
    if plan.head.order:
        return ordered(*plan.head.order)
    return FLAT


def produce_head(
    plan: RulePlan,
    ex: Executor,
    semiring: Semiring,
    initial: dict | None = None,
) -> Relation | DenseRelation:
    """Run a rule body and build the head relation it derives."""
    rule = plan.rule
    head = rule.head
    stats = ex.stats
    head_args = head.flat_args
    expr = rule.expr
    info = plan.head
    out = Relation(head.levels, semiring, _layout_for(plan))
    groups: dict = {}
    shape = None
    value = ex.value
    for b in ex.run(plan.body, dict(initial or {})):
        stats.derivations += 1
        key = tuple(value(a, b) for a in head_args)
        if info.shape is not None and shape is None:
            shape = tuple(value(a, b) for a in info.shape)
        if info.grouping is not None:
            groups.setdefault(key, []).append(value(expr.args[0], b))
            continue
        v = True if expr is None else value(expr, b)
        try:
            out.merge(key, v)
        except TypeError as exc:
            ex._fail("type", f"head payload {v!r} does not fit the {semiring.name} semiring ({exc})")
    if info.grouping == "softmax":
        by_prefix: dict = {}
        for key, vals in groups.items():
            for v in vals:
                by_prefix.setdefault(key[:-1], []).append((key, v))
        for members in by_prefix.values():
            weights = eval_eei("softmax", [v for _, v in members])
            for (key, _), w in zip(members, weights):
                out.merge(key, w)
    elif info.grouping is not None:
        for key, vals in groups.items():
            out.merge(key, eval_eei(info.grouping, vals))
    if shape is not None and semiring is REAL:
        try:
            dims = tuple(int(d) for d in shape)
        except (TypeError, ValueError):
            raise ShapeError(error("shape", f"shape {shape} of {head.rel} is not integral", rule=ex.label)) from None
        out = build_layout(out, dense(*dims))
    if info.cap is not None:
        out = _cap(out, info.cap, plan)
    return out


def _cap(rel, k: int, plan: RulePlan):
    if rel.layout.kind == "ordered":
        items = list(rel.items())
    else:
        items = rel.sorted_items()
    keep = items[: max(k, 0)]
    if isinstance(rel, DenseRelation):
        out = DenseRelation(rel.levels, rel.shape)
    else:
        out = Relation(rel.levels, rel.semiring, rel.layout)
    for key, v in keep:
        out.merge(key, v)
    return out


def eval_constraint(c: A.Constraint, b: dict, db: Database, cfg: EvalConfig | None = None) -> Iterator[dict]:
    """Satisfying extensions of binding `b` for constraint `c`."""
    c = A.desugar_constraint(c)
    dummy = freshen_wildcards(A.Rule(A.Access("_"), ":=", c))
    relvars = frozenset(A.relation_variables(dummy))
    bound = frozenset(b) | frozenset(db.params)
    plan = plan_constraint(dummy.constraint, bound, PlanContext(relvars=relvars))
    ex = Executor(db, cfg)
    for out in ex.run(plan, dict(b)):
        yield {k: v for k, v in out.items() if not k.startswith("_")}


def rule_semiring(rule: A.Rule, db: Database, semirings: dict | None = None) -> Semiring:
    if semirings and rule.head.rel in semirings:
        return semirings[rule.head.rel]
    if rule.head.rel in db.relations:
        return db.relations[rule.head.rel].semiring
    return REAL if rule.is_valued else BOOLEAN


def eval_rule(rule: A.Rule, db: Database, cfg: EvalConfig | None = None, semiring: Semiring | None = None):
    """The relation a single rule derives for its head (its delta)."""
    rule = A.desugar_rule(rule)
    plan = plan_rule(rule, frozenset(db.params))
    sr = semiring or rule_semiring(rule, db)
    return produce_head(plan, Executor(db, cfg, label=rule.head.rel), sr)


# ---------------------------------------------------------------- actions


def _empty_like(rel):
    if isinstance(rel, DenseRelation):
        return DenseRelation(rel.levels, rel.shape)
    return Relation(rel.levels, rel.semiring, rel.layout)


def _copy(rel):
    return rel.copy()


def apply_action(db: Database, head: str, delta, action: str) -> Database:
    """Install `delta` into relation `head` according to the rule action."""
    out = db.copy()
    cur = db.relations.get(head)
    if action == "<-":
        out.relations[head] = _copy(delta)
        return out
    target = _copy(cur) if cur is not None else _empty_like(delta)
    if action in (":=", "+="):
        for key, v in delta.items():
            target.merge(key, v)
    elif action == "-=":
        if target.semiring is REAL:
            for key, v in delta.items():
                target.merge(key, -v)
        else:
            for key, _ in delta.items():
                target.discard(key)
    else:
        raise EvalError(error("action", f"unknown action {action}"))
    out.relations[head] = target
    return out


# ---------------------------------------------------------------- programs


def _rule_labels(rules) -> list[str]:
    counts: dict[str, int] = {}
    for r in rules:
        counts[r.head.rel] = counts.get(r.head.rel, 0) + 1
    seen: dict[str, int] = {}
    out = []
    for r in rules:
        name = r.head.rel
        if counts[name] > 1:
            seen[name] = seen.get(name, 0) + 1
            name = f"{name}#{seen[name]}"
        out.append(name)
    return out


def _same(a, b) -> bool:
    return a.to_dict() == b.to_dict()


class _Run:
    def __init__(self, program: A.Program, db: Database, cfg: EvalConfig, check):
        self.program = program
        self.cfg = cfg
        self.db = db.copy()
        self.rules = program.rules
        self.labels = _rule_labels(self.rules)
        self.report = RunReport({lab: RuleStats() for lab in self.labels})
        self.plans = {k: p for k, p in enumerate(check.plans)}
        self.semirings, _ = relation_semirings(program, db)
        self.refinements = self._refinements(check)
        self.params = frozenset(db.params)
        self.inputs = set(db.relations)
        self._delta_plans: dict = {}

    def _refinements(self, check):
        per_rule: dict[int, set] = {}
        if check.types is None:
            return per_rule
        stmt_to_rule = {}
        k = 0
        for idx, s in enumerate(self.program.statements):
            if isinstance(s, A.Rule):
                stmt_to_rule[idx] = k
                k += 1
        for (idx, _), nodes in check.types.refinements.items():
            if idx in stmt_to_rule:
                per_rule.setdefault(stmt_to_rule[idx], set()).update(nodes)
        return per_rule

    def executor(self, k: int, overlays=None) -> Executor:
        return Executor(
            self.db,
            self.cfg,
            label=self.labels[k],
            overlays=overlays,
            refinements=frozenset(self.refinements.get(k, ())),
            stats=self.report.rules[self.labels[k]],
            warnings=self.report.warnings,
        )

    def semiring(self, rule: A.Rule) -> Semiring:
        return rule_semiring(rule, self.db, self.semirings)

    def derive(self, k: int, overlays=None, plan: RulePlan | None = None):
        rule = self.rules[k]
        return produce_head(plan or self.plans[k], self.executor(k, overlays), self.semiring(rule))

    def run(self, strata) -> tuple[Database, RunReport]:
        start = time.perf_counter()
        for st in strata.strata:
            if not st.rules:
                continue
            decl = [k for k in st.rules if not self.rules[k].imperative]
            its = self.fixpoint(decl, st.recursive) if decl else 0
            for k in st.rules:
                if self.rules[k].imperative:
                    delta = self.derive(k)
                    self.db = apply_action(self.db, self.rules[k].head.rel, delta, self.rules[k].action)
            self.report.iterations.append(max(its, 1))
        for k, r in enumerate(self.rules):
            rel = self.db.relations.get(r.head.rel)
            self.report.rules[self.labels[k]].output_size = len(rel) if rel is not None else 0
        self.report.wall_time = time.perf_counter() - start
        return self.db, self.report

    # -- fixpoints

    def _heads(self, ks) -> list[str]:
        out = []
        for k in ks:
            h = self.rules[k].head.rel
            if h not in out:
                out.append(h)
        return out

    def _base(self, head: str, k: int):
        cur = self.db.relations.get(head)
        if cur is not None:
            return _copy(cur)
        r = self.rules[k]
        return Relation(r.head.levels, self.semiring(r), _layout_for(self.plans[k]))

    def _accumulate(self, acc, part):
        if acc is None:
            return part
        if isinstance(part, DenseRelation) and not isinstance(acc, DenseRelation):
            part, acc = acc, _copy(part)
            for key, v in part.items():
                acc.merge(key, v)
            return acc
        for key, v in part.items():
            acc.merge(key, v)
        return acc

    def fixpoint(self, ks: list[int], recursive: bool) -> int:
        heads = self._heads(ks)
        first = {h: next(k for k in ks if self.rules[k].head.rel == h) for h in heads}
        base = {h: self._base(h, first[h]) for h in heads}
        if not recursive:
            results = {h: None for h in heads}
            for k in ks:
                h = self.rules[k].head.rel
                results[h] = self._accumulate(results[h], self.derive(k))
            for h in heads:
                self.db.relations[h] = self._combine(base[h], results[h], h in self.inputs)
            return 1
        if self.cfg.mode == "naive" or any(b.semiring is not BOOLEAN for b in base.values()):
            return self._naive(ks, heads, base)
        return self._semi_naive(ks, heads, base)

    def _combine(self, base, result, is_input: bool):
        if result is None:
            return base
        if not is_input:
            return result
        return self._accumulate(_copy(base), result)

    def _limit(self):
        raise EvalError(
            error(
                "non-termination",
                f"fixpoint did not converge within {self.cfg.max_iterations} iterations",
            )
        )

    def _naive(self, ks, heads, base) -> int:
        for h in heads:
            self.db.relations[h] = _copy(base[h])
        it = 0
        while True:
            it += 1
            if it > self.cfg.max_iterations:
                self._limit()
            new = {h: _copy(base[h]) for h in heads}
            for k in ks:
                h = self.rules[k].head.rel
                new[h] = self._accumulate(new[h], self.derive(k))
            if self.cfg.check_monotone:
                for h in heads:
                    if new[h].semiring is BOOLEAN:
                        old = self.db.relations[h]
                        if any(key not in new[h] for key, _ in old.items()):
                            raise EvalError(error("non-monotone", f"{h} lost tuples during fixpoint"))
            done = all(_same(new[h], self.db.relations[h]) for h in heads)
            for h in heads:
                self.db.relations[h] = new[h]
            if done:
                return it

    def _delta_variants(self, k: int, recursive: set[str]) -> list[tuple[str, RulePlan]]:
        cached = self._delta_plans.get(k)
        if cached is not None:
            return cached
        rule = self.plans[k].rule
        total = sum(1 for acc in A.rule_accesses(rule) if acc.rel in recursive)
        out = []
        for target in range(total):
            counter = [0]
            hit = [None]

            def fn(e, target=target, counter=counter, hit=hit):
                if isinstance(e, A.Access) and e.rel in recursive:
                    idx = counter[0]
                    counter[0] += 1
                    if idx == target:
                        hit[0] = e.rel
                        return A.Access(DELTA + e.rel, e.args)
                return e

            variant = A.map_rule(rule, fn)
            if hit[0] is None:
                continue
            plan = plan_rule(variant, self.params)
            out.append((hit[0], plan))
        self._delta_plans[k] = out
        return out

    def _semi_naive(self, ks, heads, base) -> int:
        recursive = set(heads)
        for h in heads:
            self.db.relations[h] = _copy(base[h])
        # first round: every rule over the initial contents
        new = {h: None for h in heads}
        for k in ks:
            h = self.rules[k].head.rel
            new[h] = self._accumulate(new[h], self.derive(k))
        delta = {}
        for h in heads:
            cur = self.db.relations[h]
            d = _empty_like(cur)
            if new[h] is not None:
                for key, v in new[h].items():
                    if key not in cur:
                        d.merge(key, v)
            delta[h] = d
            for key, v in d.items():
                cur.merge(key, v)
        it = 1
        while any(not d.is_empty() for d in delta.values()):
            it += 1
            if it > self.cfg.max_iterations:
                self._limit()
            overlays = {DELTA + h: d for h, d in delta.items()}
            found = {h: _empty_like(self.db.relations[h]) for h in heads}
            for k in ks:
                h = self.rules[k].head.rel
                for _, plan in self._delta_variants(k, recursive):
                    part = produce_head(plan, self.executor(k, overlays), self.semiring(self.rules[k]))
                    cur = self.db.relations[h]
                    for key, v in part.items():
                        if key not in cur:
                            found[h].merge(key, v)
            for h in heads:
                cur = self.db.relations[h]
                for key, v in found[h].items():
                    cur.merge(key, v)
            delta = found
        return it


def run_program(
    program: A.Program,
    db: Database,
    cfg: EvalConfig | None = None,
) -> tuple[Database, RunReport]:
    """Check and evaluate a program; returns the final database and a report."""
    cfg = cfg or EvalConfig()
    result = check_program(program, db, strict=cfg.strict)
    result.raise_on_error()
    run = _Run(result.program, db, cfg, result)
    run.report.warnings.extend(result.warnings)
    return run.run(result.strata)
