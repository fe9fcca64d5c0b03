"""The three payload semirings: sets, bags, and real-valued tensors."""

from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Any, Callable


@dataclass(frozen=True)
class Semiring:
    name: str
    zero: Any
    one: Any
    add: Callable[[Any, Any], Any]
    mul: Callable[[Any, Any], Any]
    coerce: Callable[[Any], Any]

    def is_zero(self, value) -> bool:
        # exact comparison: near-zero floats are kept
        return value == self.zero

    def sum(self, values):
        acc = self.zero
        for v in values:
            acc = self.add(acc, v)
        return acc

    def __repr__(self) -> str:
        return f"Semiring({self.name})"


def _to_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    if isinstance(v, (int, float)) and v in (0, 1):
        return bool(v)
    raise TypeError(f"boolean payload expected, got {v!r}")


def _to_nat(v) -> int:
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float) and v.is_integer():
        v = int(v)
    if isinstance(v, int) and v >= 0:
        return v
    raise TypeError(f"natural-number payload expected, got {v!r}")


def _to_real(v) -> float:
    if isinstance(v, str):
        raise TypeError(f"real payload expected, got {v!r}")
    return float(v)


BOOLEAN = Semiring("boolean", False, True, operator.or_, operator.and_, _to_bool)
NATURAL = Semiring("natural", 0, 1, operator.add, operator.mul, _to_nat)
REAL = Semiring("real", 0.0, 1.0, operator.add, operator.mul, _to_real)

SEMIRINGS = {s.name: s for s in (BOOLEAN, NATURAL, REAL)}
# relation-level type names accepted by `type(X, T)`
TYPE_SEMIRINGS = {
    "set": BOOLEAN,
    "bool": BOOLEAN,
    "boolean": BOOLEAN,
    "bag": NATURAL,
    "natural": NATURAL,
    "real": REAL,
    "tensor": REAL,
}


def get(name: str) -> Semiring:
    try:
        return SEMIRINGS[name]
    except KeyError:
        try:
            return TYPE_SEMIRINGS[name]
        except KeyError:
            raise ValueError(f"unknown semiring {name!r}") from None
