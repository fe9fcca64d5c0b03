"""An einsum frontend: index-notation contractions as dense tensor rules.

Two surface forms are accepted, one expression per line of an ``.ein`` file::

    A[i] = B[i,j] * C[j]      ; B=2x2 C=2
    ij,j->i                   ; 2x2 2

The second is numpy's notation; its operands are named B, C, D, ... and its
output A.  ``+`` and ``*`` combine operands, and the whole expression is
summed over every index missing from the output.  A term that lacks some
summed index is therefore counted once per value of that index.

An operand ``B[i,j]`` becomes the binding ``b = B(i)(j)``, every index gets a
range ``0 <= i < n`` from the operand shapes, and summation falls out of
the real semiring adding up derivations with the same head key.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass

import numpy as np

from .. import ast as A
from ..errors import FrontendError, error


@dataclass(frozen=True)
class EinsumExpr:
    """``output[out] = Σ_terms Π operands``; ``terms`` index into ``operands``."""

    output: str
    out_indices: tuple[str, ...]
    operands: tuple[tuple[str, tuple[str, ...]], ...]
    terms: tuple[tuple[int, ...], ...]
    shapes: tuple[tuple[str, tuple[int, ...]], ...]

    @property
    def shape_map(self) -> dict[str, tuple[int, ...]]:
        return dict(self.shapes)

    def index_extents(self) -> dict[str, int]:
        shapes = self.shape_map
        out: dict[str, int] = {}
        for name, idx in self.operands:
            if name not in shapes:
                _fail(f"no shape bound for operand {name}")
            shp = shapes[name]
            if len(shp) != len(idx):
                _fail(f"{name} has shape {shp} but {len(idx)} indices")
            for i, n in zip(idx, shp):
                if out.setdefault(i, n) != n:
                    _fail(f"index {i} ranges over both {out[i]} and {n}")
        for i in self.out_indices:
            if i not in out:
                _fail(f"output index {i} has no shape: it appears in no operand")
        return out

    def __str__(self):
        return print_einsum(self)


def _fail(msg: str):
    raise FrontendError(error("einsum", msg))


# ---------------------------------------------------------------- text


_NAMED = re.compile(r"^\s*([A-Za-z]\w*)\s*\[([^\]]*)\]\s*=(.*)$")
_OPERAND = re.compile(r"\s*([A-Za-z]\w*)\s*\[([^\]]*)\]\s*")


def _indices(text: str) -> tuple[str, ...]:
    idx = tuple(t.strip() for t in text.split(",") if t.strip())
    for i in idx:
        if not re.fullmatch(r"[a-z]\w*", i):
            _fail(f"bad index name {i!r}")
    return idx


def _shape(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(d) for d in text.lower().split("x"))
    except ValueError:
        _fail(f"bad shape {text!r}")


def parse_einsum(line: str) -> EinsumExpr:
    expr, _, binds = line.partition(";")
    if "->" in expr:
        return _parse_numpy(expr, binds)
    m = _NAMED.match(expr)
    if not m:
        _fail(f"cannot read {expr.strip()!r}; expected `A[i] = B[i,j] * C[j]` or `ij,j->i`")
    out, out_idx, rhs = m.group(1), _indices(m.group(2)), m.group(3)
    operands: list[tuple[str, tuple[str, ...]]] = []
    terms = []
    for term in rhs.split("+"):
        factors = []
        for f in term.split("*"):
            fm = _OPERAND.fullmatch(f)
            if not fm:
                _fail(f"cannot read operand {f.strip()!r}")
            operands.append((fm.group(1), _indices(fm.group(2))))
            factors.append(len(operands) - 1)
        terms.append(tuple(factors))
    shapes = []
    for b in binds.split():
        name, eq, shp = b.partition("=")
        if not eq:
            _fail(f"shape binding {b!r} should read NAME=DIMS")
        shapes.append((name, _shape(shp)))
    return EinsumExpr(out, out_idx, tuple(operands), tuple(terms), tuple(shapes))


def _parse_numpy(expr: str, binds: str) -> EinsumExpr:
    lhs, rhs = (s.strip() for s in expr.split("->"))
    specs = [s.strip() for s in lhs.split(",")]
    names = _numpy_names(len(specs))
    for s in specs + [rhs]:
        if not re.fullmatch(r"[a-z]*", s):
            _fail(f"numpy-style subscripts are lowercase letters, got {s!r}")
    dims = binds.split()
    if len(dims) != len(specs):
        _fail(f"{len(specs)} operands but {len(dims)} shapes")
    operands = tuple((n, tuple(s)) for n, s in zip(names, specs))
    shapes = tuple((n, _shape(d)) for n, d in zip(names, dims))
    return EinsumExpr("A", tuple(rhs), operands, (tuple(range(len(specs))),), shapes)


def _numpy_names(k: int) -> list[str]:
    letters = [c for c in string.ascii_uppercase if c != "A"]
    if k > len(letters):
        _fail("too many operands")
    return letters[:k]


def print_einsum(e: EinsumExpr) -> str:
    ops = [f"{n}[{','.join(idx)}]" for n, idx in e.operands]
    rhs = " + ".join(" * ".join(ops[k] for k in term) for term in e.terms)
    shapes = " ".join(f"{n}={'x'.join(map(str, s))}" for n, s in e.shapes)
    return f"{e.output}[{','.join(e.out_indices)}] = {rhs} ; {shapes}"


def parse_ein_file(text: str) -> list[EinsumExpr]:
    out = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            out.append(parse_einsum(line))
    return out


# ---------------------------------------------------------------- translation


def _value_names(operands, indices) -> list[str]:
    used: set[str] = set(indices)
    out = []
    for name, _ in operands:
        base = name.lower()
        v, k = base, 1
        while v in used:
            k += 1
            v = f"{base}{k}"
        used.add(v)
        out.append(v)
    return out


def einsum_to_hojabr(e: "EinsumExpr | str") -> A.Program:
    """`A(i) := b*c if b=B(i)(j), c=C(j), card(B,2,2), card(C,2), 0<=i<2, 0<=j<2`."""
    if isinstance(e, str):
        e = parse_einsum(e)
    extents = e.index_extents()
    values = _value_names(e.operands, _index_order(e))
    body: list[A.Constraint] = []
    for v, (name, idx) in zip(values, e.operands):
        body.append(A.Compare(A.Var(v), "=", A.access(name, *[[A.Var(i)] for i in idx])))
    for name, shp in e.shapes:
        body.append(A.Cei("card", ((A.Var(name), *(A.Lit(d) for d in shp)),)))
    for i in _index_order(e):
        body.append(A.Chain((A.Lit(0), A.Var(i), A.Lit(extents[i])), ("<=", "<")))
    expr = None
    for term in e.terms:
        prod = None
        for k in term:
            v = A.Var(values[k])
            prod = v if prod is None else A.Binary("*", prod, v)
        expr = prod if expr is None else A.Binary("+", expr, prod)
    head = A.access(e.output, *([[A.Var(i)] for i in e.out_indices] or [[]]))
    return A.Program((A.Rule(head, ":=", A.conj(body), expr),))


def _index_order(e: EinsumExpr) -> list[str]:
    return list(dict.fromkeys([i for _, idx in e.operands for i in idx] + list(e.out_indices)))


def _flatten(e: A.Expr, op: str) -> list[A.Expr]:
    if isinstance(e, A.Binary) and e.op == op:
        return _flatten(e.left, op) + _flatten(e.right, op)
    return [e]


def hojabr_to_einsum(program: A.Program) -> EinsumExpr:
    """Read an einsum back out of a one-rule dense-tensor program."""
    from ..slangs import validate

    res = validate(program, "einsum-core")
    if not res.ok:
        raise FrontendError([error("einsum", v) for v in res.violations])
    rules = A.desugar(program).rules
    if len(rules) != 1:
        _fail(f"expected one rule, found {len(rules)}")
    rule = rules[0]
    out_idx = []
    groups = rule.head.args if rule.head.levels != (0,) else ()
    for group in groups:
        if len(group) != 1 or not isinstance(group[0], A.Var):
            _fail("the head must take one index variable per level")
        out_idx.append(group[0].name)
    binding: dict[str, tuple[str, tuple[str, ...]]] = {}
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for c in A.conjuncts(rule.constraint):
        c = A.strip_group(c)
        if isinstance(c, A.Compare) and c.op == "=" and isinstance(c.right, A.Access):
            idx = []
            for g in c.right.args:
                if not isinstance(g[0], A.Var):
                    _fail(f"operand {c.right.rel} must be indexed by variables")
                idx.append(g[0].name)
            binding[c.left.name] = (c.right.rel, tuple(idx))
        elif isinstance(c, A.Cei) and c.name == "card":
            dims = A.cei_variable_args(c)
            if not all(isinstance(d, A.Lit) and isinstance(d.value, int) for d in dims):
                _fail("shapes must be integer literals")
            shapes.append((A.cei_relation_arg(c), tuple(d.value for d in dims)))
    operands: list[tuple[str, tuple[str, ...]]] = []
    terms = []
    for term in _flatten(rule.expr, "+"):
        factors = []
        for f in _flatten(term, "*"):
            if not isinstance(f, A.Var) or f.name not in binding:
                _fail("the head expression must combine bound operand values")
            operands.append(binding[f.name])
            factors.append(len(operands) - 1)
        terms.append(tuple(factors))
    e = EinsumExpr(rule.head.rel, tuple(out_idx), tuple(operands), tuple(terms), tuple(shapes))
    e.index_extents()
    return e


# ---------------------------------------------------------------- oracle


def einsum_oracle(e: "EinsumExpr | str", tensors: dict[str, np.ndarray]) -> np.ndarray:
    """Dense reference result via numpy.einsum, one call per product term."""
    if isinstance(e, str):
        e = parse_einsum(e)
    letters = {}
    for i in _index_order(e):
        letters[i] = string.ascii_letters[len(letters)]
    out_sub = "".join(letters[i] for i in e.out_indices)
    extents = e.index_extents()
    total = np.zeros(tuple(extents[i] for i in e.out_indices))
    summed = [i for i in letters if i not in e.out_indices]
    for term in e.terms:
        subs = ",".join("".join(letters[i] for i in e.operands[k][1]) for k in term)
        arrays = [np.asarray(tensors[e.operands[k][0]], float) for k in term]
        present = {i for k in term for i in e.operands[k][1]}
        repeat = int(np.prod([extents[i] for i in summed if i not in present]))
        total = total + repeat * np.einsum(f"{subs}->{out_sub}", *arrays)
    return total
