"""Concrete syntax: a recursive-descent parser and its inverse printer.

Operator precedence, loosest first: `or`, `,`, `not`, comparisons,
`+ -`, `* /`, unary minus.  Parentheses around constraints are kept as
`Group` nodes so printed programs preserve the author's grouping.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import ast as A
from .errors import Diagnostic, HojabrSyntaxError, error

KEYWORDS = frozenset({"if", "or", "not", "in", "match", "case", "true", "false"})
# listed by the language but without a production
RESERVED = frozenset({"while", "limit", "top", "UID", "round", "and"})
MAX_DEPTH = 200

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<linecomment>//[^\n]*)
  | (?P<blockcomment>\{[^}]*\})
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<ident>[A-Za-z][A-Za-z0-9_']*)
  | (?P<wild>_(?![A-Za-z0-9_']))
  | (?P<op>:=|\+=|-=|<-|->|<=|>=|!=|≠|≤|≥|[-+*/<>=(),\[\];:])
    """,
    re.VERBOSE,
)

_UNICODE_OPS = {"≠": "!=", "≤": "<=", "≥": ">="}
_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}


@dataclass(frozen=True)
class Token:
    kind: str  # ident, number, string, wild, op, eof
    text: str
    line: int
    column: int
    nl_before: bool = False


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    newline = False
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            col = pos - line_start + 1
            raise HojabrSyntaxError(_diag(text, line, col, f"unexpected character {text[pos]!r}"))
        kind = m.lastgroup
        chunk = m.group()
        if kind in ("ws", "linecomment", "blockcomment"):
            if "\n" in chunk:
                newline = True
        else:
            if kind == "op":
                chunk = _UNICODE_OPS.get(chunk, chunk)
            tokens.append(Token(kind, chunk, line, pos - line_start + 1, newline))
            newline = False
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = m.start() + chunk.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1, newline))
    return tokens


def _diag(text: str, line: int, col: int, message: str, code: str = "syntax") -> Diagnostic:
    lines = text.split("\n")
    excerpt = lines[line - 1] if 0 < line <= len(lines) else ""
    return error(code, message, line=line, column=col, excerpt=excerpt)


class _Backtrack(Exception):
    pass


class _TooDeep(HojabrSyntaxError):
    """Not caught by backtracking."""


class Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0
        self.depth = 0
        self.memo: dict = {}

    # -- token helpers

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.pos + k, len(self.tokens) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("op", "ident") and t.text == text

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.pos += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(f"expected {text!r}")
        return self.advance()

    def fail(self, message: str, tok: Token | None = None, code: str = "syntax"):
        t = tok or self.tok
        found = "end of input" if t.kind == "eof" else repr(t.text)
        if code == "syntax":
            message = f"{message}, found {found}"
        raise HojabrSyntaxError(_diag(self.text, t.line, t.column, message, code))

    def enter(self):
        self.depth += 1
        if self.depth > MAX_DEPTH:
            t = self.tok
            raise _TooDeep(_diag(self.text, t.line, t.column, "nesting too deep"))

    def leave(self):
        self.depth -= 1

    def attempt(self, fn, memo: str | None = None):
        saved, depth = self.pos, self.depth
        key = (memo, saved)
        if memo is not None and key in self.memo:
            node, end = self.memo[key]
            if node is not None:
                self.pos = end
            return node
        try:
            node = fn()
        except _TooDeep:
            raise
        except (HojabrSyntaxError, _Backtrack):
            self.pos, self.depth = saved, depth
            node = None
        if memo is not None:
            self.memo[key] = (node, self.pos)
        return node

    def ident(self) -> Token:
        t = self.tok
        if t.kind != "ident":
            self.fail("expected identifier")
        if t.text in RESERVED:
            self.fail(f"'{t.text}' is reserved but not implemented", t, code="unimplemented")
        if t.text in KEYWORDS:
            self.fail(f"keyword '{t.text}' cannot be used as a name", t)
        return self.advance()

    # -- program

    def program(self) -> A.Program:
        stmts = []
        while self.tok.kind != "eof":
            if self.at(";"):
                self.advance()
                continue
            stmts.append(self.statement())
        return A.Program(tuple(stmts))

    def statement(self) -> A.Statement:
        t = self.tok
        if t.kind == "ident" and t.text in RESERVED:
            self.fail(f"'{t.text}' is reserved but not implemented", t, code="unimplemented")
        rule = self.attempt(self.rule_header)
        if rule is not None:
            head, action = rule
            return self.rule_rest(head, action, t)
        c = self.constraint()
        return A.Declaration(c, t.line, t.column)

    def rule_header(self, nested: bool = False):
        name = self.ident()
        if name.text in A.CEI_NAMES or name.text in A.EEI_NAMES:
            raise _Backtrack()
        args = []
        while self.at("(") and not self.tok.nl_before:
            args.append(self.arglist())
        if not args and not nested:
            raise _Backtrack()
        if self.tok.kind != "op" or self.tok.text not in A.ACTIONS:
            raise _Backtrack()
        action = self.advance().text
        return A.Access(name.text, tuple(args)), action

    def rule_rest(self, head: A.Access, action: str, start: Token) -> A.Rule:
        def valued():
            e = self.expr()
            if not self.at("if"):
                raise _Backtrack()
            self.advance()
            return e

        e = self.attempt(valued)
        c = self.constraint()
        return A.Rule(head, action, c, e, start.line, start.column)

    # -- constraints

    def constraint(self) -> A.Constraint:
        self.enter()
        items = [self.conjunction()]
        while self.at("or"):
            self.advance()
            items.append(self.conjunction())
        self.leave()
        return items[0] if len(items) == 1 else A.Or(tuple(items))

    def conjunction(self) -> A.Constraint:
        items = [self.primary_constraint()]
        while self.at(","):
            self.advance()
            items.append(self.primary_constraint())
        return items[0] if len(items) == 1 else A.And(tuple(items))

    def primary_constraint(self) -> A.Constraint:
        self.enter()
        try:
            return self._primary_constraint()
        finally:
            self.leave()

    def _primary_constraint(self) -> A.Constraint:
        t = self.tok
        if self.at("not") and self.peek().text == "(":
            self.advance()
            self.expect("(")
            body = self.constraint()
            self.expect(")")
            return A.Not(body)
        if self.at("match"):
            return self.match()
        if self.at("("):
            nested = self.attempt(self.nested_rule, memo="nested")
            if nested is not None:
                return nested
            group = self.attempt(self.group, memo="group")
            if group is not None:
                return group
        if t.kind == "ident" and t.text in A.CEI_NAMES and self.peek().text == "(":
            return self.cei()
        if t.kind == "ident" and t.text in RESERVED:
            self.fail(f"'{t.text}' is reserved but not implemented", t, code="unimplemented")
        left = self.expr()
        if self.at(":") and self.peek().kind == "ident":
            self.advance()
            name = self.ident()
            return A.TypeAnn(left, name.text)
        if self.at("in"):
            self.advance()
            self.expect("[")
            opts = [] if self.at("]") else self.expr_list("]")
            self.expect("]")
            return A.In(left, tuple(opts))
        if self.tok.kind == "op" and self.tok.text in A.COMPARISONS:
            operands, ops = [left], []
            while self.tok.kind == "op" and self.tok.text in A.COMPARISONS:
                ops.append(self.advance().text)
                operands.append(self.expr())
            if len(ops) == 1:
                return A.Compare(operands[0], ops[0], operands[1])
            return A.Chain(tuple(operands), tuple(ops))
        if isinstance(left, A.Access):
            return A.Atom(left)
        self.fail("expected a constraint", t)

    def nested_rule(self) -> A.NestedRule:
        open_tok = self.expect("(")
        head, action = self.rule_header(nested=True)
        rule = self.rule_rest(head, action, open_tok)
        self.expect(")")
        return A.NestedRule(rule)

    def group(self) -> A.Group:
        self.expect("(")
        body = self.constraint()
        self.expect(")")
        # `(a + b) * c = d` starts with a parenthesised expression instead
        nxt = self.tok
        if nxt.kind == "op" and (nxt.text in A.COMPARISONS or nxt.text in A.BINARY_OPS):
            raise _Backtrack()
        if nxt.text in (":", "in") and nxt.kind in ("op", "ident"):
            raise _Backtrack()
        return A.Group(body)

    def match(self) -> A.Match:
        self.expect("match")
        subject = self.expr()
        cases = []
        while self.at("case"):
            self.advance()
            value = self.expr()
            self.expect("->")
            body = self.primary_constraint()
            if self.at(";"):
                self.advance()
            cases.append((value, body))
        if not cases:
            self.fail("match needs at least one case")
        return A.Match(subject, tuple(cases))

    def cei(self) -> A.Cei:
        name = self.advance().text
        groups = []
        while self.at("(") and not self.tok.nl_before:
            groups.append(self.arglist())
        return A.Cei(name, tuple(groups))

    # -- expressions

    def arglist(self) -> tuple[A.Expr, ...]:
        self.expect("(")
        if self.at(")"):
            self.advance()
            return ()
        items = self.expr_list(")")
        self.expect(")")
        return tuple(items)

    def expr_list(self, closer: str) -> list[A.Expr]:
        items = [self.expr()]
        while self.at(","):
            self.advance()
            items.append(self.expr())
        return items

    def expr(self) -> A.Expr:
        self.enter()
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            op = self.advance().text
            left = A.Binary(op, left, self.term())
        self.leave()
        return left

    def term(self) -> A.Expr:
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            op = self.advance().text
            left = A.Binary(op, left, self.unary())
        return left

    def unary(self) -> A.Expr:
        if self.at("-"):
            self.advance()
            if self.tok.kind == "number":
                return A.Lit(-_number(self.advance().text))
            self.enter()
            operand = self.unary()
            self.leave()
            return A.Neg(operand)
        return self.primary()

    def primary(self) -> A.Expr:
        t = self.tok
        if t.kind == "number":
            self.advance()
            return A.Lit(_number(t.text))
        if t.kind == "string":
            self.advance()
            return A.Lit(_unquote(t.text))
        if t.kind == "wild":
            self.advance()
            return A.Wildcard()
        if self.at("true") or self.at("false"):
            self.advance()
            return A.Lit(t.text == "true")
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            if t.text in A.EEI_NAMES and self.peek().text == "(":
                self.advance()
                return A.Call(t.text, self.arglist())
            name = self.ident()
            groups = []
            while self.at("(") and not self.tok.nl_before:
                groups.append(self.arglist())
            if groups:
                return A.Access(name.text, tuple(groups))
            return A.Var(name.text)
        self.fail("expected an expression")


def _number(text: str) -> int | float:
    if re.fullmatch(r"\d+", text):
        return int(text)
    return float(text)


def _unquote(text: str) -> str:
    body = text[1:-1]
    return re.sub(r"\\(.)", lambda m: _ESCAPES.get(m.group(1), m.group(1)), body)


def parse(text: str | bytes) -> A.Program:
    """Parse program text.  Raises HojabrSyntaxError carrying a Diagnostic."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise HojabrSyntaxError(
                error("syntax", f"input is not valid UTF-8 (byte {exc.start})", line=1, column=1)
            ) from None
    try:
        return Parser(text).program()
    except RecursionError:
        raise HojabrSyntaxError(error("syntax", "nesting too deep", line=1, column=1)) from None


def parse_rule(text: str) -> A.Rule:
    prog = parse(text)
    if len(prog.statements) != 1 or not isinstance(prog.statements[0], A.Rule):
        raise HojabrSyntaxError(error("syntax", "expected exactly one rule", line=1, column=1))
    return prog.statements[0]


def parse_constraint(text: str) -> A.Constraint:
    p = Parser(text)
    c = p.constraint()
    if p.tok.kind != "eof":
        p.fail("unexpected trailing input")
    return c


def parse_expr(text: str) -> A.Expr:
    p = Parser(text)
    e = p.expr()
    if p.tok.kind != "eof":
        p.fail("unexpected trailing input")
    return e


# ---------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def print_program(program: A.Program) -> str:
    """Canonical text, one statement per line."""
    lines = [print_statement(s) for s in program.statements]
    for k in range(len(lines) - 1):
        # a leading `-` or `(` would otherwise continue the previous line
        if lines[k + 1][:1] in "-(":
            lines[k] += ";"
    return "".join(line + "\n" for line in lines)


def print_statement(stmt: A.Statement) -> str:
    if isinstance(stmt, A.Rule):
        return print_rule(stmt)
    return print_constraint(stmt.constraint)


def print_rule(rule: A.Rule) -> str:
    head = print_access(rule.head)
    body = print_constraint(rule.constraint)
    if rule.expr is None:
        return f"{head} {rule.action} {body}"
    return f"{head} {rule.action} {print_expr(rule.expr)} if {body}"


def print_constraint(c: A.Constraint, level: int = 0) -> str:
    """`level`: 0 = any, 1 = inside a disjunction, 2 = primary required."""
    if isinstance(c, A.Or):
        text = " or ".join(print_constraint(i, 1) for i in c.items)
        return f"({text})" if level >= 1 else text
    if isinstance(c, A.And):
        text = ", ".join(print_constraint(i, 2) for i in c.items)
        return f"({text})" if level >= 2 else text
    if isinstance(c, A.Group):
        return f"({print_constraint(c.body)})"
    if isinstance(c, A.Not):
        return f"not({print_constraint(c.body)})"
    if isinstance(c, A.Atom):
        return print_access(c.access)
    if isinstance(c, A.NestedRule):
        return f"({print_rule(c.rule)})"
    if isinstance(c, A.Compare):
        return f"{print_expr(c.left)} {c.op} {print_expr(c.right)}"
    if isinstance(c, A.Chain):
        parts = [print_expr(c.operands[0])]
        for op, operand in zip(c.ops, c.operands[1:]):
            parts.append(f"{op} {print_expr(operand)}")
        return " ".join(parts)
    if isinstance(c, A.Cei):
        return c.name + "".join(_arglist(g) for g in c.args)
    if isinstance(c, A.In):
        opts = ", ".join(print_expr(o) for o in c.options)
        return f"{print_expr(c.expr)} in [{opts}]"
    if isinstance(c, A.TypeAnn):
        return f"{print_expr(c.expr)}: {c.type_name}"
    if isinstance(c, A.Match):
        parts = [f"match {print_expr(c.subject)}"]
        for k, (value, body) in enumerate(c.cases):
            inner = print_constraint(body, 2)
            if isinstance(body, A.Match) and k < len(c.cases) - 1:
                inner = f"({inner})"  # later cases would otherwise attach to it
            parts.append(f"case {print_expr(value)} -> {inner}")
        return " ".join(parts)
    raise TypeError(f"not a constraint: {c!r}")


def _arglist(group) -> str:
    return "(" + ", ".join(print_expr(a) for a in group) + ")"


def print_access(a: A.Access) -> str:
    return a.rel + "".join(_arglist(g) for g in a.args)


def print_expr(e: A.Expr, prec: int = 0) -> str:
    if isinstance(e, A.Var):
        return e.name
    if isinstance(e, A.Wildcard):
        return "_"
    if isinstance(e, A.Lit):
        return _print_lit(e.value)
    if isinstance(e, A.Access):
        return print_access(e)
    if isinstance(e, A.Call):
        return e.name + "(" + ", ".join(print_expr(a) for a in e.args) + ")"
    if isinstance(e, A.Neg):
        inner = e.operand
        if isinstance(inner, A.Lit) and not isinstance(inner.value, (str, bool)) and inner.value >= 0:
            return f"-({print_expr(inner)})"
        return "-" + print_expr(inner, 3)
    if isinstance(e, A.Binary):
        p = _PREC[e.op]
        text = f"{print_expr(e.left, p)} {e.op} {print_expr(e.right, p + 1)}"
        return f"({text})" if p < prec else text
    raise TypeError(f"not an expression: {e!r}")


def _print_lit(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        out = v.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
        return f'"{out}"'
    if isinstance(v, float):
        text = repr(v)
        return text if any(ch in text for ch in ".en") else text + ".0"
    return str(v)
