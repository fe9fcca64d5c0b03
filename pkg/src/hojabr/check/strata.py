"""Stratification of negation, aggregation and recursion.

A relation with no rules sits at level 0.  A defined relation sits one
level above the highest level among its dependencies outside its own
strongly connected component; members of a component share a level.
Strongly connected components are read off the transitive closure of the
dependency graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import ast as A
from .. import kernels
from ..errors import CheckError, error
from ..semiring import REAL

POSITIVE, NEGATIVE, AGGREGATE = "positive", "negative", "aggregate"


@dataclass(frozen=True)
class Edge:
    source: str  # the relation read
    target: str  # the head relation
    polarity: str
    rule: int  # index into Program.rules


@dataclass
class Stratum:
    level: int
    relations: list[str]
    rules: list[int]  # indices into Program.rules, textual order
    recursive: bool = False


@dataclass
class Stratification:
    strata: list[Stratum]
    edges: list[Edge]
    levels: dict[str, int] = field(default_factory=dict)

    def stratum_of(self, rel: str) -> int:
        return self.levels[rel]


def rule_edges(rule: A.Rule, index: int) -> list[Edge]:
    relvars = A.relation_variables(rule)
    grouping = isinstance(rule.expr, A.Call) and rule.expr.name in A.GROUPING_EEIS
    out: list[Edge] = []

    def add(rel: str, negated: bool):
        if rel in relvars:
            return
        if rule.imperative and rel == rule.head.rel:
            return  # an update reads the previous version of its target
        pol = NEGATIVE if negated else (AGGREGATE if grouping else POSITIVE)
        out.append(Edge(rel, rule.head.rel, pol, index))

    def visit(c: A.Constraint, negated: bool):
        if isinstance(c, A.Not):
            visit(c.body, True)
            return
        if isinstance(c, A.NestedRule):
            inner = A.strip_group(c.rule.constraint)
            visit(inner, negated)
            return
        if isinstance(c, A.Cei):
            rel = A.cei_relation_arg(c)
            if c.name == "card" and rel and rel != rule.head.rel:
                add(rel, negated)
            return
        for e in A.constraint_exprs(c):
            for sub in A.walk_expr(e):
                if isinstance(sub, A.Access):
                    add(sub.rel, negated)
        for child in A.constraint_children(c):
            visit(child, negated)

    visit(rule.constraint, False)
    for e in (rule.expr, *rule.head.flat_args) if rule.expr is not None else rule.head.flat_args:
        for sub in A.walk_expr(e):
            if isinstance(sub, A.Access):
                add(sub.rel, False)
    return out


def stratify(program: A.Program, semirings=None) -> Stratification:
    """Partition rules into strata.  Raises CheckError("unstratifiable")."""
    rules = program.rules
    edges = [e for k, r in enumerate(rules) for e in rule_edges(r, k)]
    names: list[str] = []
    for r in rules:
        if r.head.rel not in names:
            names.append(r.head.rel)
    for e in edges:
        if e.source not in names:
            names.append(e.source)
    pos = {n: k for k, n in enumerate(names)}
    n = len(names)
    adj = np.zeros((n, n), np.bool_)
    for e in edges:
        adj[pos[e.source], pos[e.target]] = True
    reach = kernels.transitive_closure(adj)

    def same_scc(a: str, b: str) -> bool:
        i, j = pos[a], pos[b]
        return i == j or (reach[i, j] and reach[j, i])

    diags = []
    for e in edges:
        if e.polarity != POSITIVE and same_scc(e.source, e.target) and reach[pos[e.target], pos[e.source]]:
            cycle = sorted(m for m in names if same_scc(m, e.target))
            what = "negation" if e.polarity == NEGATIVE else "aggregation"
            diags.append(
                error(
                    "unstratifiable",
                    f"{what} of {e.source} inside the recursive cycle {{{', '.join(cycle)}}}",
                    rule=e.target,
                    line=rules[e.rule].line,
                )
            )
    if semirings is not None:
        for name in names:
            i = pos[name]
            if reach[i, i] and semirings.get(name) is REAL:
                diags.append(
                    error(
                        "real-recursion",
                        f"{name} is recursive over the real semiring; no fixpoint is guaranteed",
                        rule=name,
                    )
                )
    if diags:
        raise CheckError(diags)

    defined = {r.head.rel for r in rules}
    deps: dict[str, set[str]] = {m: set() for m in names}
    for e in edges:
        deps[e.target].add(e.source)
    levels: dict[str, int] = {}

    # components in an order where dependencies come first
    comps: list[list[str]] = []
    seen: set[str] = set()
    for m in names:
        if m in seen:
            continue
        comp = [x for x in names if same_scc(m, x)]
        seen.update(comp)
        comps.append(comp)

    def comp_level(comp: list[str], stack=()) -> int:
        key = comp[0]
        if key in levels:
            return levels[key]
        if not any(x in defined for x in comp):
            lv = 0
        else:
            outside = {d for x in comp for d in deps[x]} - set(comp)
            lv = 1 + max((comp_level(_comp_of(d, comps)) for d in outside), default=0)
        for x in comp:
            levels[x] = lv
        return lv

    for comp in comps:
        comp_level(comp)

    top = max(levels.values(), default=-1)
    strata = [Stratum(lv, [], []) for lv in range(top + 1)]
    for m in names:
        strata[levels[m]].relations.append(m)
    for k, r in enumerate(rules):
        st = strata[levels[r.head.rel]]
        st.rules.append(k)
        i = pos[r.head.rel]
        if reach[i, i]:
            st.recursive = True
    return Stratification(strata, edges, levels)


def _comp_of(name: str, comps: list[list[str]]) -> list[str]:
    for c in comps:
        if name in c:
            return c
    raise KeyError(name)
