"""Diagnostics and the exception hierarchy shared by every pipeline stage."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    message: str
    line: int = 0
    column: int = 0
    excerpt: str = ""
    rule: str = ""

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(
            {
                "severity": d["severity"],
                "code": d["code"],
                "message": d["message"],
                "rule": d["rule"],
                "line": d["line"],
                "col": d["column"],
            },
            sort_keys=True,
        )

    def __str__(self) -> str:
        loc = f"{self.line}:{self.column}: " if self.line else ""
        where = f" [{self.rule}]" if self.rule else ""
        return f"{loc}{self.severity}[{self.code}]{where}: {self.message}"


def error(code: str, message: str, **kw) -> Diagnostic:
    return Diagnostic("error", code, message, **kw)


def warning(code: str, message: str, **kw) -> Diagnostic:
    return Diagnostic("warning", code, message, **kw)


class HojabrError(Exception):
    """Base class; carries one or more diagnostics."""

    def __init__(self, diagnostics: Diagnostic | list[Diagnostic] | str, code: str = "error"):
        if isinstance(diagnostics, str):
            diagnostics = [error(code, diagnostics)]
        elif isinstance(diagnostics, Diagnostic):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))

    @property
    def code(self) -> str:
        return self.diagnostics[0].code if self.diagnostics else "error"


class HojabrSyntaxError(HojabrError):
    pass


class CheckError(HojabrError):
    pass


class KindError(HojabrError):
    pass


class ShapeError(HojabrError):
    pass


class EvalError(HojabrError):
    pass


class LoweringError(HojabrError):
    pass


class FrontendError(HojabrError):
    pass
