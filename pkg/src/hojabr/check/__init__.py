"""Static checks: types, binding plans, stratification, data integrity."""

from __future__ import annotations

from dataclasses import dataclass, field

from .. import ast as A
from ..errors import CheckError, Diagnostic, HojabrError, error
from ..syntax import print_expr
from .integrity import Violation, check_integrity
from .planner import BindingPlan, RulePlan, Step, plan_constraint, plan_rule
from .strata import Stratification, stratify
from .types import RelSchema, TypeEnv, infer_types, relation_semirings

__all__ = [
    "BindingPlan",
    "CheckResult",
    "RelSchema",
    "RulePlan",
    "Step",
    "Stratification",
    "TypeEnv",
    "Violation",
    "card_hints",
    "check_integrity",
    "check_program",
    "infer_types",
    "plan_constraint",
    "plan_rule",
    "relation_semirings",
    "stratify",
]


@dataclass
class CheckResult:
    program: A.Program  # desugared
    diagnostics: list[Diagnostic] = field(default_factory=list)
    types: TypeEnv | None = None
    plans: list[RulePlan] = field(default_factory=list)
    strata: Stratification | None = None
    violations: list[Violation] = field(default_factory=list)

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "error"]

    @property
    def warnings(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def raise_on_error(self) -> "CheckResult":
        if self.errors:
            raise CheckError(self.errors)
        return self


def card_hints(program: A.Program) -> dict[str, int]:
    """Declared single-number cardinalities, used to order generators."""
    out = {}
    for stmt in program.declarations:
        for c in A.conjuncts(stmt.constraint):
            c = A.strip_group(c)
            if isinstance(c, A.Cei) and c.name == "card":
                rel = A.cei_relation_arg(c)
                args = A.cei_variable_args(c)
                if rel and len(args) == 1 and isinstance(args[0], A.Lit) and isinstance(args[0].value, int):
                    out[rel] = args[0].value
    return out


def _names_check(program: A.Program, db) -> list[Diagnostic]:
    defined = {r.head.rel for r in program.rules}
    known = set(defined) | (set(db.relations) if db is not None else set())
    out = []
    for r in program.rules:
        relvars = A.relation_variables(r)
        for acc in A.rule_accesses(r):
            if acc.rel in relvars or acc.rel in known:
                continue
            if acc.rel[:1].islower():
                out.append(
                    error("unknown-cei", f"unknown constraint or relation {acc.rel}", rule=r.head.rel, line=r.line)
                )
            elif db is not None:
                out.append(
                    error("undeclared", f"relation {acc.rel} is neither stored nor defined", rule=r.head.rel, line=r.line)
                )
        for node in A.walk_constraint(r.constraint):
            for e in A.constraint_exprs(node):
                for sub in A.walk_expr(e):
                    if isinstance(sub, A.Call) and sub.name in A.GROUPING_EEIS:
                        out.append(
                            error(
                                "aggregate-position",
                                f"{sub.name} may only appear as the outermost head expression",
                                rule=r.head.rel,
                                line=r.line,
                            )
                        )
        if r.expr is not None:
            inner = A.expr_children(r.expr) if isinstance(r.expr, A.Call) else (r.expr,)
            for e in inner:
                for sub in A.walk_expr(e):
                    if isinstance(sub, A.Call) and sub.name in A.GROUPING_EEIS:
                        out.append(
                            error(
                                "aggregate-position",
                                f"{sub.name} inside {print_expr(r.expr)} is not at the outermost head position",
                                rule=r.head.rel,
                                line=r.line,
                            )
                        )
    return out


def check_program(program: A.Program, db=None, strict: bool = False, data: bool = True) -> CheckResult:
    """Run every static check; diagnostics are collected, not raised."""
    try:
        program = A.desugar(program)
    except HojabrError as exc:
        return CheckResult(program, list(exc.diagnostics))
    result = CheckResult(program)
    diags = result.diagnostics
    diags.extend(_names_check(program, db))
    try:
        result.types = infer_types(program, db)
    except HojabrError as exc:
        diags.extend(exc.diagnostics)
    params = frozenset(db.params) if db is not None else frozenset()
    hints = card_hints(program)
    for r in program.rules:
        try:
            result.plans.append(plan_rule(r, params, hints))
        except HojabrError as exc:
            diags.extend(exc.diagnostics)
    semirings, _ = relation_semirings(program, db)
    try:
        result.strata = stratify(program, semirings)
    except HojabrError as exc:
        diags.extend(exc.diagnostics)
    if db is not None and data:
        decls = list(program.declarations) + list(db.declarations)
        result.violations = check_integrity(db, decls)
        diags.extend(v.to_diagnostic(strict) for v in result.violations)
    return result
