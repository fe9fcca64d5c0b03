"""Lowering flat conjunctive rules into physical join plans, and back.

Every strategy starts from the natural-join form of a rule: variable
equalities ``b = b'`` are merged so that shared variables express the
join.  Strategies then differ in which auxiliary relations they build:

* ``nlj``: none; each repeated variable occurrence is renamed apart and
  re-joined by an explicit equality.
* ``hash`` / ``sort-merge``: one two-level table per relation, keyed by the
  join variables (``Rh(b)(a) := R(a,b)``); sort-merge adds ``order(b)``.
* ``generic``: a trie per relation with one level per variable, probed
  variable by variable through nested rule bindings.
* ``free``: like generic, but the first relation is scanned flat.
* ``diamond``: the first relation is scanned flat; the others are looked up
  by the variables they share with it and then expanded.

Lowering is rule-at-a-time.  Build rules are shared across rules when they
coincide, and fresh names avoid every name already used by the program.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .. import ast as A
from ..errors import LoweringError, error
from ..syntax import print_rule

STRATEGIES = ("nlj", "hash", "sort-merge", "generic", "free", "diamond")


@dataclass(frozen=True)
class NaturalJoin:
    head: A.Access
    atoms: tuple[tuple[str, tuple[str, ...]], ...]

    def rule(self) -> A.Rule:
        body = [A.atom(rel, [A.Var(v) for v in args]) for rel, args in self.atoms]
        return A.Rule(self.head, ":=", A.conj(body))


def _fail(rule: A.Rule, message: str):
    raise LoweringError(error("inapplicable", message, rule=rule.head.rel, line=rule.line))


class _UnionFind:
    def __init__(self):
        self.parent: dict[str, str] = {}

    def find(self, v: str) -> str:
        self.parent.setdefault(v, v)
        while self.parent[v] != v:
            self.parent[v] = self.parent[self.parent[v]]
            v = self.parent[v]
        return v

    def union(self, a: str, b: str, rank: dict[str, int]):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        # the earlier-seen variable names the class
        if rank.get(rb, 1 << 30) < rank.get(ra, 1 << 30):
            ra, rb = rb, ra
        self.parent[rb] = ra


def natural_form(rule: A.Rule) -> NaturalJoin:
    """Merge variable equalities into shared variables; reject anything else."""
    if rule.action != ":=" or rule.is_valued:
        _fail(rule, f"{rule.head.rel}: join lowering needs a set-valued := rule")
    if len(rule.head.args) != 1 or not all(isinstance(a, A.Var) for a in rule.head.flat_args):
        _fail(rule, f"{rule.head.rel}: join lowering needs a flat head over variables")
    atoms: list[tuple[str, tuple[str, ...]]] = []
    eqs: list[tuple[str, str]] = []
    for c in A.conjuncts(rule.constraint):
        c = A.strip_group(c)
        if isinstance(c, A.Atom):
            acc = c.access
            if len(acc.args) != 1 or not all(isinstance(a, A.Var) for a in acc.flat_args):
                _fail(rule, f"{rule.head.rel}: access to {acc.rel} is not a flat atom over variables")
            atoms.append((acc.rel, tuple(a.name for a in acc.flat_args)))
        elif isinstance(c, A.Compare) and c.op == "=" and isinstance(c.left, A.Var) and isinstance(c.right, A.Var):
            eqs.append((c.left.name, c.right.name))
        else:
            _fail(rule, f"{rule.head.rel}: constraint outside the logical-join slang")
    if not atoms:
        _fail(rule, f"{rule.head.rel}: no relation atoms to join")
    rank: dict[str, int] = {}
    for _, args in atoms:
        for v in args:
            rank.setdefault(v, len(rank))
    uf = _UnionFind()
    for a, b in eqs:
        uf.union(a, b, rank)
    atoms = [(rel, tuple(uf.find(v) for v in args)) for rel, args in atoms]
    bound = {v for _, args in atoms for v in args}
    head_args = []
    for a in rule.head.flat_args:
        v = uf.find(a.name)
        if v not in bound:
            _fail(rule, f"{rule.head.rel}: head variable {a.name} is not bound by any atom")
        head_args.append(A.Var(v))
    return NaturalJoin(A.Access(rule.head.rel, (tuple(head_args),)), tuple(atoms))


def _distinct(seq):
    return list(dict.fromkeys(seq))


def _program_names(program: A.Program) -> set[str]:
    names: set[str] = set()
    for st in program.statements:
        rule_like = st if isinstance(st, A.Rule) else None
        c = st.constraint
        for node in A.walk_constraint(c):
            if isinstance(node, A.NestedRule):
                names.add(node.rule.head.rel)
            if isinstance(node, A.Cei) and A.cei_relation_arg(node):
                names.add(A.cei_relation_arg(node))
            for e in A.constraint_exprs(node):
                for sub in A.walk_expr(e):
                    if isinstance(sub, A.Var):
                        names.add(sub.name)
                    elif isinstance(sub, A.Access):
                        names.add(sub.rel)
        if rule_like is not None:
            names.add(rule_like.head.rel)
            for acc in A.rule_accesses(rule_like):
                names.add(acc.rel)
            names |= A.free_variables(rule_like)
    return names


@dataclass
class _Namer:
    prefix: str
    taken: set[str]

    def fresh(self, base: str) -> str:
        name = self.prefix + base
        if name not in self.taken:
            self.taken.add(name)
            return name
        k = 2
        while f"{name}_{k}" in self.taken:
            k += 1
        self.taken.add(f"{name}_{k}")
        return f"{name}_{k}"


@dataclass
class _Builds:
    namer: _Namer
    by_key: dict = field(default_factory=dict)
    emitted: list[A.Rule] = field(default_factory=list)
    seen: set[str] = field(default_factory=set)

    def build(self, rel: str, args: tuple[str, ...], levels: list[list[str]], suffix: str, order: bool) -> str:
        """Name of `X(levels...) := rel(args)[, order(first level)]`, built once."""
        canon = {v: f"v{k}" for k, v in enumerate(_distinct(args))}
        key = (rel, tuple(canon[v] for v in args), tuple(tuple(canon[v] for v in lv) for lv in levels), order)
        name = self.by_key.get(key)
        if name is None:
            name = self.namer.fresh(rel + suffix)
            self.by_key[key] = name
        if name not in self.seen:
            self.seen.add(name)
            head = A.Access(name, tuple(tuple(A.Var(v) for v in lv) for lv in levels))
            body = [A.atom(rel, [A.Var(v) for v in args])]
            if order:
                body.append(A.Cei("order", (tuple(A.Var(v) for v in levels[0]),)))
            self.emitted.append(A.Rule(head, ":=", A.conj(body)))
        return name


def _atom(rel, args):
    return A.atom(rel, [A.Var(v) for v in args])


def _lower_nlj(nj: NaturalJoin, namer: _Namer, builds: _Builds) -> list[A.Constraint]:
    # primed names only need to avoid the rule's own variables and relations
    taken = {v for _, args in nj.atoms for v in args} | {rel for rel, _ in nj.atoms} | {nj.head.rel}
    seen: set[str] = set()
    body: list[A.Constraint] = []
    eqs: list[A.Constraint] = []
    for rel, args in nj.atoms:
        out = []
        for v in args:
            if v in seen:
                fresh = v + "'"
                while fresh in taken:
                    fresh += "'"
                taken.add(fresh)
                out.append(fresh)
                eqs.append(A.Group(A.Compare(A.Var(v), "=", A.Var(fresh))))
            else:
                seen.add(v)
                out.append(v)
        body.append(_atom(rel, out))
    return body + eqs


def _shared_vars(nj: NaturalJoin) -> set[str]:
    count: dict[str, int] = {}
    for _, args in nj.atoms:
        for v in set(args):
            count[v] = count.get(v, 0) + 1
    return {v for v, k in count.items() if k > 1}


def _lower_hash(nj: NaturalJoin, namer: _Namer, builds: _Builds, sort: bool) -> list[A.Constraint]:
    shared = _shared_vars(nj)
    body = []
    for rel, args in nj.atoms:
        keys = [v for v in _distinct(args) if v in shared]
        rest = [v for v in _distinct(args) if v not in shared]
        if not rest and len(keys) > 1:
            # every column joins: key on all but the last one
            rest = [keys.pop()]
        if not keys or not rest:
            body.append(_atom(rel, args))
            continue
        name = builds.build(rel, args, [keys, rest], "o" if sort else "h", sort)
        body.append(A.Atom(A.Access(name, (tuple(map(A.Var, keys)), tuple(map(A.Var, rest))))))
    return body


def _variable_order(nj: NaturalJoin) -> list[str]:
    return _distinct(v for _, args in nj.atoms for v in args)


def _trie_probe(nj: NaturalJoin, namer: _Namer, builds: _Builds, cover: int | None) -> list[A.Constraint]:
    order = _variable_order(nj)
    rank = {v: k for k, v in enumerate(order)}
    body: list[A.Constraint] = []
    bound: set[str] = set()
    tries: dict[int, tuple[list[str], str]] = {}  # atom index -> (trie levels, current name)
    if cover is not None:
        rel, args = nj.atoms[cover]
        body.append(_atom(rel, args))
        bound |= set(args)
    for k, (rel, args) in enumerate(nj.atoms):
        if k == cover:
            continue
        levels = sorted(_distinct(args), key=rank.__getitem__)
        if len(levels) > 1:
            name = builds.build(rel, args, [[v] for v in levels], "h", False)
            tries[k] = (levels, name)
    prefix: dict[int, list[str]] = {k: [] for k in tries}
    for v in order:
        inner, last = [], []
        for k, (rel, args) in enumerate(nj.atoms):
            if k == cover or v not in args:
                continue
            if k not in tries:
                last.append((k, _atom(rel, args)))
                continue
            levels, cur = tries[k]
            if levels.index(v) == len(levels) - 1:
                last.append((k, A.Atom(A.Access(cur, ((A.Var(v),),)))))
            else:
                inner.append(k)
        if v not in bound and inner and (not last or inner[0] < last[0][0]):
            # the first relation mentioning v enumerates it
            _, cur = tries[inner[0]]
            body.append(A.Atom(A.Access(cur, ((A.Var(v),),))))
        for k in inner:
            levels, cur = tries[k]
            prefix[k].append(v)
            relvar = namer.fresh(nj.atoms[k][0] + "".join(prefix[k]))
            body.append(A.NestedRule(A.Rule(A.Access(relvar, ()), ":=", A.Atom(A.Access(cur, ((A.Var(v),),))))))
            tries[k] = (levels, relvar)
        body.extend(c for _, c in last)
        bound.add(v)
    return body


def _lower_diamond(nj: NaturalJoin, namer: _Namer, builds: _Builds) -> list[A.Constraint]:
    first_rel, first_args = nj.atoms[0]
    probe = set(first_args)
    lookups, expands = [], []
    for rel, args in nj.atoms[1:]:
        keys = [v for v in _distinct(args) if v in probe]
        rest = [v for v in _distinct(args) if v not in probe]
        if not keys or not rest:
            expands.append(_atom(rel, args))
            continue
        name = builds.build(rel, args, [keys, rest], "h", False)
        relvar = namer.fresh(rel + "".join(keys))
        lookups.append(
            A.NestedRule(A.Rule(A.Access(relvar, ()), ":=", A.Atom(A.Access(name, (tuple(map(A.Var, keys)),)))))
        )
        expands.append(A.Atom(A.Access(relvar, (tuple(map(A.Var, rest)),))))
    return [_atom(first_rel, first_args), *lookups, *expands]


def lower_rule(rule: A.Rule, strategy: str, namer: _Namer, builds: _Builds) -> A.Rule:
    nj = natural_form(rule)
    if strategy == "diamond" and len(nj.atoms) < 3:
        _fail(rule, f"{rule.head.rel}: diamond join needs at least three relations, found {len(nj.atoms)}")
    if strategy == "nlj":
        body = _lower_nlj(nj, namer, builds)
    elif len(nj.atoms) == 1:
        body = [_atom(*nj.atoms[0])]
    elif strategy in ("hash", "sort-merge"):
        body = _lower_hash(nj, namer, builds, strategy == "sort-merge")
    elif strategy == "generic":
        body = _trie_probe(nj, namer, builds, None)
    elif strategy == "free":
        body = _trie_probe(nj, namer, builds, 0)
    elif strategy == "diamond":
        body = _lower_diamond(nj, namer, builds)
    else:
        raise LoweringError(error("usage", f"unknown join strategy {strategy!r}; choose from {', '.join(STRATEGIES)}"))
    return A.Rule(nj.head, ":=", A.conj(body), None, rule.line, rule.column)


def lower_join(program: A.Program, strategy: str, prefix: str = "") -> A.Program:
    """Rewrite every rule of a logical-join program with one join strategy."""
    if strategy not in STRATEGIES:
        raise LoweringError(error("usage", f"unknown join strategy {strategy!r}; choose from {', '.join(STRATEGIES)}"))
    program = A.desugar(program)
    namer = _Namer(prefix, _program_names(program))
    builds = _Builds(namer)
    out: list[A.Statement] = []
    for st in program.statements:
        if isinstance(st, A.Declaration):
            out.append(st)
            continue
        probe = lower_rule(st, strategy, namer, builds)
        out.extend(builds.emitted)
        builds.emitted.clear()
        out.append(probe)
    return A.Program(tuple(out))


# ---------------------------------------------------------------- lifting


@dataclass(frozen=True)
class _Build:
    rel: str
    args: tuple[str, ...]
    levels: tuple[tuple[str, ...], ...]


def _as_build(rule: A.Rule) -> _Build | None:
    if rule.action != ":=" or rule.is_valued or len(rule.head.args) < 2:
        return None
    if not all(isinstance(a, A.Var) for a in rule.head.flat_args):
        return None
    atoms, orders = [], []
    for c in A.conjuncts(rule.constraint):
        c = A.strip_group(c)
        if isinstance(c, A.Atom):
            atoms.append(c)
        elif isinstance(c, A.Cei) and c.name == "order":
            orders.append(c)
        else:
            return None
    if len(atoms) != 1:
        return None
    acc = atoms[0].access
    if len(acc.args) != 1 or not all(isinstance(a, A.Var) for a in acc.flat_args):
        return None
    args = tuple(a.name for a in acc.flat_args)
    head = [a.name for a in rule.head.flat_args]
    if len(set(head)) != len(head) or set(head) != set(args):
        return None
    return _Build(acc.rel, args, tuple(tuple(a.name for a in lv) for lv in rule.head.args))


def _lift_rule(rule: A.Rule, builds: dict[str, _Build]) -> tuple[A.Rule, set[str]] | None:
    """The natural-join rule a probe rule encodes, plus the builds it used."""
    chains: dict[str, tuple[str, list[tuple[A.Expr, ...]]]] = {name: (name, []) for name in builds}
    roots: dict[str, int] = {}
    atoms: list[tuple[tuple[int, int], str, tuple[str, ...]]] = []
    eqs: list[tuple[str, str]] = []
    used: set[str] = set()
    physical = False
    for pos, c in enumerate(A.conjuncts(rule.constraint)):
        c = A.strip_group(c)
        if isinstance(c, A.NestedRule):
            inner = c.rule
            src = A.strip_group(inner.constraint)
            if inner.head.args or inner.expr is not None or not isinstance(src, A.Atom):
                return None
            acc = src.access
            if acc.rel not in chains:
                return None
            root, prefix = chains[acc.rel]
            chains[inner.head.rel] = (root, prefix + list(acc.args))
            roots.setdefault(root, pos)
            physical = True
        elif isinstance(c, A.Atom):
            acc = c.access
            if not all(isinstance(a, A.Var) for a in acc.flat_args):
                return None
            if acc.rel not in chains:
                if len(acc.args) != 1:
                    return None
                atoms.append(((pos, pos), acc.rel, tuple(a.name for a in acc.flat_args)))
                continue
            physical = True
            root, prefix = chains[acc.rel]
            roots.setdefault(root, pos)
            b = builds[root]
            levels = prefix + list(acc.args)
            if len(levels) < len(b.levels):
                continue  # a generator over a prefix; implied by the full access
            if [len(lv) for lv in levels] != [len(lv) for lv in b.levels]:
                return None
            sigma = {}
            for formal, actual in zip(b.levels, levels):
                for f, a in zip(formal, actual):
                    if not isinstance(a, A.Var):
                        return None
                    if sigma.setdefault(f, a.name) != a.name:
                        eqs.append((sigma[f], a.name))
            atoms.append(((roots[root], pos), b.rel, tuple(sigma[v] for v in b.args)))
            used.add(root)
        elif isinstance(c, A.Compare) and c.op == "=" and isinstance(c.left, A.Var) and isinstance(c.right, A.Var):
            eqs.append((c.left.name, c.right.name))
            physical = True
        else:
            return None
    if not physical:
        return None
    for root in roots:
        if root not in used:
            return None  # a table that is probed but never fully expanded
    atoms.sort(key=lambda t: t[0])
    body = [A.atom(rel, [A.Var(v) for v in args]) for _, rel, args in atoms]
    body += [A.Group(A.Compare(A.Var(a), "=", A.Var(b))) for a, b in eqs]
    flat = A.Rule(rule.head, ":=", A.conj(body), None, rule.line, rule.column)
    return natural_form(flat).rule(), used


def lift(program: A.Program) -> A.Program:
    """Invert the join lowerings: inline build tables and merge renamed variables."""
    program = A.desugar(program)
    rules = program.rules
    defined: dict[str, int] = {}
    for r in rules:
        defined[r.head.rel] = defined.get(r.head.rel, 0) + 1
    builds = {}
    for r in rules:
        b = _as_build(r)
        if b is not None and defined[r.head.rel] == 1:
            builds[r.head.rel] = b
    lifted: dict[int, A.Rule] = {}
    consumed: set[str] = set()
    for k, r in enumerate(rules):
        if r.head.rel in builds:
            continue
        mentions = {acc.rel for acc in A.rule_accesses(r)} & set(builds)
        has_nested = any(isinstance(n, A.NestedRule) for n in A.walk_constraint(r.constraint))
        try:
            res = _lift_rule(r, builds)
        except LoweringError:
            res = None
        if res is None:
            if mentions or has_nested:
                raise LoweringError(
                    error("unrecognized", f"no known join encoding matches: {print_rule(r)}", rule=r.head.rel, line=r.line)
                )
            continue
        lifted[k] = res[0]
        consumed |= res[1]
    # a build table also read by a rule we kept as-is must stay
    for k, r in enumerate(rules):
        if k not in lifted and r.head.rel not in builds:
            consumed -= {acc.rel for acc in A.rule_accesses(r)}
    out: list[A.Statement] = []
    k = 0
    for st in program.statements:
        if isinstance(st, A.Declaration):
            out.append(st)
            continue
        if st.head.rel in consumed and st.head.rel in builds:
            k += 1
            continue
        out.append(lifted.get(k, st))
        k += 1
    return A.Program(tuple(out))
