"""Higher-order, semiring-annotated relations and the database that holds them.

A relation has one or more *levels*, each with a key arity.  Applying
``R(k1)`` to a two-level relation yields the sub-relation under ``k1``;
applying every level yields the payload.  Absent keys mean semiring zero
and zero payloads are never stored.

Two storage classes share one interface: :class:`Relation` (a hash map
from full key tuples to payloads, optionally ordered or trie-indexed)
and :class:`DenseRelation` (a row-major float64 array).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterator

import numpy as np

from . import kernels
from .errors import KindError, ShapeError
from .semiring import BOOLEAN, REAL, Semiring


@dataclass(frozen=True)
class Layout:
    kind: str = "flat"  # flat | trie | ordered | dense
    order: tuple[int, ...] = ()
    shape: tuple[int, ...] | None = None

    def __str__(self) -> str:
        if self.kind == "ordered":
            return f"ordered{self.order}"
        if self.kind == "dense":
            return f"dense{self.shape}"
        return self.kind


FLAT = Layout("flat")
TRIE = Layout("trie")


def ordered(*columns: int) -> Layout:
    return Layout("ordered", tuple(columns))


def dense(*shape: int) -> Layout:
    return Layout("dense", shape=tuple(int(s) for s in shape))


def sort_key(value):
    """Total order over mixed scalars: numbers before strings."""
    if isinstance(value, str):
        return (1, value)
    if isinstance(value, tuple):
        return (2, tuple(sort_key(v) for v in value))
    return (0, value)


def key_order(key: tuple):
    return tuple(sort_key(v) for v in key)


class _Base:
    levels: tuple[int, ...]
    semiring: Semiring
    layout: Layout

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def arity(self) -> int:
        return sum(self.levels)

    def prefix_len(self, nlevels: int) -> int:
        return sum(self.levels[:nlevels])

    def lookup(self, key):
        """Apply one argument list: sub-relation at inner levels, payload at the last."""
        key = tuple(key)
        if len(key) != self.levels[0]:
            raise KindError(
                f"argument list of length {len(key)} applied to a level of arity {self.levels[0]}",
                code="kind",
            )
        if self.depth == 1:
            return self.get(key)
        return self.sub(key)

    def scan(self, dense: bool = False) -> Iterator[tuple[tuple, Any]]:
        """Top-level entries: (key, payload) or (key, sub-relation)."""
        if self.depth == 1:
            if dense and isinstance(self, DenseRelation):
                yield from self.dense_items()
            else:
                yield from self.items()
            return
        k = self.levels[0]
        for prefix in self.select(k, ()):
            yield prefix, self.sub(prefix)

    def is_empty(self) -> bool:
        return len(self) == 0

    def __bool__(self) -> bool:
        return not self.is_empty()

    def to_dict(self) -> dict:
        return dict(self.items())

    def sorted_items(self) -> list[tuple[tuple, Any]]:
        return sorted(self.items(), key=lambda kv: key_order(kv[0]))

    def same_as(self, other: "_Base") -> bool:
        """Logical equality: same levels and key -> payload mapping."""
        return self.levels == other.levels and self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        items = self.sorted_items()
        shown = ", ".join(f"{k}: {v!r}" for k, v in items[:8])
        more = ", ..." if len(items) > 8 else ""
        return f"{type(self).__name__}(levels={self.levels}, {self.semiring.name}, {self.layout}, {{{shown}{more}}})"


class Relation(_Base):
    """Sparse relation keyed by full key tuples."""

    def __init__(
        self,
        levels=(1,),
        semiring: Semiring = BOOLEAN,
        layout: Layout = FLAT,
        entries=None,
    ):
        self.levels = tuple(int(n) for n in levels)
        if not self.levels:
            raise KindError("a relation needs at least one level", code="kind")
        if layout.kind == "dense":
            raise ValueError("use DenseRelation for dense layouts")
        self.semiring = semiring
        self.layout = layout
        self._data: dict[tuple, Any] = {}
        self._frozen = False
        self._invalidate()
        if entries is not None:
            items = entries.items() if isinstance(entries, dict) else entries
            for key, value in items:
                self.merge(key, value)

    # -- mutation

    def _invalidate(self):
        self._indexes: dict = {}
        self._subs: dict = {}
        self._sorted: list | None = None

    def _check_writable(self):
        if self._frozen:
            raise RuntimeError("relation is frozen")

    def _norm_key(self, key) -> tuple:
        key = tuple(key)
        if len(key) != self.arity:
            raise KindError(f"key {key!r} does not match arity {self.arity}", code="kind")
        return key

    def merge(self, key, value=None) -> "Relation":
        """payload[key] := add(payload[key], value); zero results are dropped."""
        self._check_writable()
        key = self._norm_key(key)
        sr = self.semiring
        value = sr.one if value is None else sr.coerce(value)
        old = self._data.get(key, sr.zero)
        new = sr.add(old, value)
        if sr.is_zero(new):
            if key in self._data:
                del self._data[key]
                self._invalidate()
        else:
            if key not in self._data:
                self._invalidate()
            elif self._subs:
                self._subs.clear()
            self._data[key] = new
        return self

    def set(self, key, value) -> "Relation":
        self._check_writable()
        key = self._norm_key(key)
        value = self.semiring.coerce(value)
        if self.semiring.is_zero(value):
            self.discard(key)
        else:
            self._data[key] = value
            self._invalidate()
        return self

    def discard(self, key) -> "Relation":
        self._check_writable()
        if self._data.pop(tuple(key), None) is not None:
            self._invalidate()
        return self

    def freeze(self) -> "Relation":
        self._frozen = True
        if self.layout.kind == "trie" and self.depth > 1:
            for prefix, _ in self.scan():
                pass
        return self

    def copy(self, layout: Layout | None = None) -> "Relation":
        out = Relation(self.levels, self.semiring, layout or self.layout)
        out._data = dict(self._data)
        return out

    # -- access

    def get(self, key, default=None):
        v = self._data.get(tuple(key))
        if v is None:
            return self.semiring.zero if default is None else default
        return v

    def __contains__(self, key) -> bool:
        return tuple(key) in self._data

    def __len__(self) -> int:
        return len(self._data)

    def items(self) -> Iterator[tuple[tuple, Any]]:
        if self.layout.kind == "ordered":
            if self._sorted is None:
                cols = self.layout.order
                self._sorted = sorted(
                    self._data.items(),
                    key=lambda kv: (key_order(tuple(kv[0][c] for c in cols)), key_order(kv[0])),
                )
            return iter(self._sorted)
        return iter(list(self._data.items()))

    def keys(self):
        return [k for k, _ in self.items()]

    def sub(self, prefix) -> "Relation":
        prefix = tuple(prefix)
        cached = self._subs.get(prefix)
        if cached is not None:
            return cached
        n = len(prefix)
        if n == 0 or n > self.arity or n not in _cumulative(self.levels):
            raise KindError(f"prefix {prefix!r} does not end on a level boundary", code="kind")
        nlev = _cumulative(self.levels).index(n) + 1
        out = Relation(self.levels[nlev:], self.semiring, _shift(self.layout, n))
        for full in self._prefix_index(n).get(prefix, ()):
            out._data[full[n:]] = self._data[full]
        out._frozen = True
        self._subs[prefix] = out
        return out

    def _prefix_index(self, n: int) -> dict:
        idx = self._indexes.get(("prefix", n))
        if idx is None:
            idx = {}
            for full, _ in self.items():
                idx.setdefault(full[:n], []).append(full)
            self._indexes[("prefix", n)] = idx
        return idx

    def select(self, npos: int, bound: tuple[tuple[int, Any], ...]) -> list[tuple]:
        """Distinct key prefixes of length ``npos`` agreeing with ``bound``
        (pairs of position, value), in layout order."""
        positions = tuple(p for p, _ in bound)
        key = ("select", npos, positions)
        idx = self._indexes.get(key)
        if idx is None:
            idx = {}
            for full, _ in self.items():
                prefix = full[:npos]
                bucket = idx.setdefault(tuple(prefix[p] for p in positions), {})
                bucket[prefix] = None
            idx = {k: list(v) for k, v in idx.items()}
            self._indexes[key] = idx
        values = tuple(v for _, v in bound)
        try:
            return idx.get(values, [])
        except TypeError:  # unhashable probe value
            return []


def _cumulative(levels) -> list[int]:
    out, acc = [], 0
    for n in levels:
        acc += n
        out.append(acc)
    return out


def _shift(layout: Layout, n: int) -> Layout:
    if layout.kind == "ordered":
        order = tuple(c - n for c in layout.order if c >= n)
        return ordered(*order) if order else FLAT
    if layout.kind == "trie":
        return TRIE
    return FLAT


class DenseRelation(_Base):
    """Real-valued relation stored as a row-major array; every in-shape
    integer key is addressable and zero cells are absent entries."""

    def __init__(self, levels, shape, array=None):
        self.levels = tuple(int(n) for n in levels)
        shape = tuple(int(s) for s in shape)
        if sum(self.levels) != len(shape):
            raise ShapeError(
                f"shape {shape} does not match key arity {sum(self.levels)}", code="shape"
            )
        self.semiring = REAL
        self.layout = dense(*shape)
        if array is None:
            array = np.zeros(shape, np.float64)
        else:
            array = np.asarray(array, np.float64)
            if array.shape != shape:
                raise ShapeError(f"data of shape {array.shape} declared as {shape}", code="shape")
        self.array = array
        self._frozen = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.layout.shape

    def _index(self, key, strict: bool = False):
        key = tuple(key)
        if len(key) != len(self.shape):
            raise KindError(f"key {key!r} does not match arity {len(self.shape)}", code="kind")
        out = []
        for k, n in zip(key, self.shape):
            if isinstance(k, bool) or not isinstance(k, (int, float, np.integer)):
                if strict:
                    raise ShapeError(f"dense key {key!r} is not integral", code="shape")
                return None
            if isinstance(k, float):
                if not k.is_integer():
                    if strict:
                        raise ShapeError(f"dense key {key!r} is not integral", code="shape")
                    return None
                k = int(k)
            if not 0 <= k < n:
                if strict:
                    raise ShapeError(f"key {key!r} outside shape {self.shape}", code="shape")
                return None
            out.append(int(k))
        return tuple(out)

    def get(self, key, default=None):
        idx = self._index(key)
        if idx is None:
            return 0.0
        return float(self.array[idx])

    def __contains__(self, key) -> bool:
        return self.get(key) != 0.0

    def merge(self, key, value=None) -> "DenseRelation":
        if self._frozen:
            raise RuntimeError("relation is frozen")
        idx = self._index(key, strict=True)
        self.array[idx] += 1.0 if value is None else float(value)
        return self

    def set(self, key, value) -> "DenseRelation":
        if self._frozen:
            raise RuntimeError("relation is frozen")
        self.array[self._index(key, strict=True)] = float(value)
        return self

    def discard(self, key) -> "DenseRelation":
        idx = self._index(key)
        if idx is not None:
            self.array[idx] = 0.0
        return self

    def freeze(self) -> "DenseRelation":
        self._frozen = True
        self.array.flags.writeable = False
        return self

    def copy(self, layout=None) -> "DenseRelation":
        return DenseRelation(self.levels, self.shape, self.array.copy())

    def __len__(self) -> int:
        return int(np.count_nonzero(self.array))

    def items(self) -> Iterator[tuple[tuple, float]]:
        coords, vals = kernels.nonzero(self.array)
        for c, v in zip(coords.tolist(), vals.tolist()):
            yield tuple(c), v

    def dense_items(self) -> Iterator[tuple[tuple, float]]:
        for idx in np.ndindex(*self.shape):
            yield tuple(int(i) for i in idx), float(self.array[idx])

    def sub(self, prefix) -> "DenseRelation":
        prefix = tuple(prefix)
        n = len(prefix)
        if n not in _cumulative(self.levels) or n == self.arity:
            raise KindError(f"prefix {prefix!r} does not end on an inner level", code="kind")
        nlev = _cumulative(self.levels).index(n) + 1
        rest = self.shape[n:]
        idx = self._index(prefix + (0,) * len(rest))
        if idx is None:
            return DenseRelation(self.levels[nlev:], rest)
        view = self.array[idx[:n]]
        out = DenseRelation(self.levels[nlev:], rest, view)
        out._frozen = True
        return out

    def select(self, npos: int, bound: tuple[tuple[int, Any], ...]) -> list[tuple]:
        arr = self.array
        fixed: dict[int, int] = {}
        for p, v in bound:
            idx = _dense_coord(v, self.shape[p])
            if idx is None:
                return []
            fixed[p] = idx
        if npos < arr.ndim:
            arr = np.any(arr != 0.0, axis=tuple(range(npos, arr.ndim)))
        sl = tuple(fixed.get(p, slice(None)) for p in range(npos))
        part = np.asarray(arr[sl], np.float64)
        coords, _ = kernels.nonzero(part)
        free = [p for p in range(npos) if p not in fixed]
        out = []
        for c in coords.tolist():
            key = [0] * npos
            for p, v in fixed.items():
                key[p] = v
            for p, v in zip(free, c):
                key[p] = v
            out.append(tuple(key))
        return out


def _dense_coord(v, n):
    if isinstance(v, bool) or not isinstance(v, (int, float, np.integer)):
        return None
    if isinstance(v, float):
        if not v.is_integer():
            return None
        v = int(v)
    return int(v) if 0 <= v < n else None


AnyRelation = Relation | DenseRelation


# ---------------------------------------------------------------- layouts


def build_layout(
    rel: AnyRelation,
    target: Layout,
    levels=None,
    perm=None,
) -> AnyRelation:
    """Re-store ``rel`` in ``target`` layout, optionally permuting key
    columns (``perm[i]`` = source column of new column ``i``) and
    re-splitting them into ``levels``."""
    arity = rel.arity
    perm = tuple(range(arity)) if perm is None else tuple(perm)
    if sorted(perm) != list(range(arity)):
        raise KindError(f"{perm} is not a permutation of {arity} columns", code="kind")
    levels = rel.levels if levels is None else tuple(levels)
    if sum(levels) != arity:
        raise KindError(f"levels {levels} do not cover {arity} columns", code="kind")
    if target.kind == "dense":
        if target.shape is None:
            raise ShapeError("a dense layout needs a declared shape", code="shape")
        if rel.semiring is not REAL:
            raise ShapeError("dense layouts hold real payloads only", code="shape")
        out = DenseRelation(levels, target.shape)
        for key, value in rel.items():
            out.merge(tuple(key[p] for p in perm), value)
        return out
    out = Relation(levels, rel.semiring, target)
    for key, value in rel.items():
        out.merge(tuple(key[p] for p in perm), value)
    if target.kind == "trie":
        out.freeze()
        out._frozen = False
    return out


def scan(rel: AnyRelation, dense: bool = False):
    return rel.scan(dense=dense)


def lookup(rel: AnyRelation, key):
    return rel.lookup(key)


def merge(rel: AnyRelation, key, value, semiring: Semiring | None = None) -> AnyRelation:
    if semiring is not None and semiring is not rel.semiring:
        raise KindError(
            f"merge under {semiring.name} into a {rel.semiring.name} relation", code="kind"
        )
    return rel.merge(key, value)


# ---------------------------------------------------------------- tensor formats


def from_dense(array, levels=None) -> DenseRelation:
    array = np.asarray(array, np.float64)
    levels = (1,) * array.ndim if levels is None else tuple(levels)
    if array.ndim == 0 and levels == ():
        levels = (0,)
    return DenseRelation(levels, array.shape, array.copy())


def from_csr(n: int, P, I, V) -> Relation:
    """Decode CSR arrays into a two-level relation ``X(i)(j)``."""
    P = np.asarray(P, np.int64)
    if len(P) != n + 1:
        raise ShapeError(f"row pointer array has {len(P)} entries, expected n+1 = {n + 1}", code="shape")
    rows, cols, vals = kernels.csr_to_coo(P, I, V)
    out = Relation((1, 1), REAL)
    for i, j, v in zip(rows.tolist(), cols.tolist(), vals.tolist()):
        out.merge((i, j), v)
    return out


def to_csr(rel: AnyRelation, nrows: int | None = None):
    """Encode a matrix relation as ``(n, P, I, V)`` numpy arrays."""
    if rel.arity != 2:
        raise ShapeError(f"CSR needs an order-2 tensor, got order {rel.arity}", code="shape")
    if isinstance(rel, DenseRelation):
        P, I, V = kernels.dense_to_csr(rel.array)
        return rel.shape[0], P, I, V
    keys = [k for k, _ in rel.items()]
    if nrows is None:
        nrows = 1 + max((int(k[0]) for k in keys), default=-1)
    ncols = 1 + max((int(k[1]) for k in keys), default=-1)
    m = np.zeros((nrows, max(ncols, 0)), np.float64)
    for (i, j), v in rel.items():
        m[int(i), int(j)] = v
    P, I, V = kernels.dense_to_csr(m)
    return nrows, P, I, V


def csr_relations(n: int, P, I, V) -> tuple[dict[str, Relation], dict[str, int]]:
    """The flat relations P(i), I(p), V(p) and parameter n of a CSR matrix."""
    from .semiring import NATURAL

    rp = Relation((1,), NATURAL, entries=[((i,), int(v)) for i, v in enumerate(P)])
    ri = Relation((1,), NATURAL, entries=[((p,), int(v)) for p, v in enumerate(I)])
    rv = Relation((1,), REAL, entries=[((p,), float(v)) for p, v in enumerate(V)])
    return {"P": rp, "I": ri, "V": rv}, {"n": int(n)}


def to_coo(rel: AnyRelation) -> Relation:
    """Order-n tensor as a set relation with n+1 columns, value last."""
    out = Relation((rel.arity + 1,), BOOLEAN)
    for key, v in rel.items():
        out.merge(tuple(key) + (v,), True)
    return out


# ---------------------------------------------------------------- database


@dataclass
class Database:
    """Named relations plus scalar parameters and declared CEI facts."""

    relations: dict[str, AnyRelation] = field(default_factory=dict)
    params: dict[str, Any] = field(default_factory=dict)
    attributes: dict[str, tuple[str, ...]] = field(default_factory=dict)
    declarations: list = field(default_factory=list)

    def __getitem__(self, name: str) -> AnyRelation:
        return self.relations[name]

    def __contains__(self, name: str) -> bool:
        return name in self.relations

    def get(self, name: str, default=None):
        return self.relations.get(name, default)

    def names(self) -> list[str]:
        return sorted(self.relations)

    def put(self, name: str, rel: AnyRelation, attributes=None) -> "Database":
        self.relations[name] = rel
        if attributes is not None:
            self.attributes[name] = tuple(attributes)
        return self

    def copy(self) -> "Database":
        return Database(
            dict(self.relations), dict(self.params), dict(self.attributes), list(self.declarations)
        )

    def schema(self, name: str):
        rel = self.relations[name]
        return rel.levels, rel.semiring, rel.layout
