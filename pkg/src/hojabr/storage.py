"""Loading and dumping relations: CSV, dense JSON, CSR JSON and manifests.

A manifest is a JSON object mapping relation names to entries such as::

    {"W1": {"path": "w1.json", "format": "dense-json", "levels": [2]},
     "R":  {"path": "r.csv", "format": "csv", "semiring": "boolean"},
     "B":  {"path": "b.json", "format": "csr-json"}}

A CSR entry loads its arrays as the flat relations ``P``, ``I`` and ``V``
plus the scalar parameter ``n``; the ``names`` field renames them.
Relative paths resolve against the manifest's directory.  A top-level
``"params"`` object adds scalar parameters.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from . import semiring as S
from .errors import HojabrError, ShapeError, error
from .relation import (
    Database,
    DenseRelation,
    Relation,
    csr_relations,
    from_dense,
    ordered,
    FLAT,
    TRIE,
    dense as dense_layout,
    build_layout,
    to_csr,
)

VALUE_COLUMN = "__val"


class DataError(HojabrError):
    pass


def parse_scalar(text: str):
    t = text.strip()
    if t == "true":
        return True
    if t == "false":
        return False
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def load_csv(path, levels=None, semiring=None) -> tuple[Relation, tuple[str, ...]]:
    """A flat relation from CSV; the optional ``__val`` column is the payload."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(error("data", f"{path}: missing header row"))
    header = [h.strip() for h in rows[0]]
    has_val = bool(header) and header[-1] == VALUE_COLUMN
    attrs = tuple(header[:-1] if has_val else header)
    if semiring is None:
        semiring = S.REAL if has_val else S.BOOLEAN
    levels = (len(attrs),) if levels is None else tuple(levels)
    if sum(levels) != len(attrs):
        raise DataError(error("data", f"{path}: levels {levels} do not cover {len(attrs)} columns"))
    rel = Relation(levels, semiring)
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(error("data", f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"))
        vals = [parse_scalar(c) for c in row]
        key = tuple(vals[: len(attrs)])
        try:
            rel.merge(key, vals[-1] if has_val else None)
        except TypeError as exc:
            raise DataError(error("data", f"{path}:{lineno}: {exc}")) from None
    return rel, attrs


def dump_csv(rel, path=None, attributes=None) -> str:
    """CSV text in layout order; sets omit the value column."""
    arity = rel.arity
    attrs = list(attributes or [f"c{k}" for k in range(arity)])
    with_val = rel.semiring is not S.BOOLEAN
    lines = [",".join(attrs + ([VALUE_COLUMN] if with_val else []))]
    items = list(rel.items()) if rel.layout.kind == "ordered" else rel.sorted_items()
    for key, v in items:
        cells = [_fmt(x) for x in key] + ([_fmt(v)] if with_val else [])
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def load_dense_json(path, levels=None) -> DenseRelation:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return dense_from_obj(obj, levels, str(path))


def dense_from_obj(obj, levels=None, where="dense tensor") -> DenseRelation:
    try:
        shape = tuple(int(s) for s in obj["shape"])
        data = np.asarray(obj["data"], np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(error("data", f"{where}: expected {{shape, data}} ({exc})")) from None
    size = int(np.prod(shape)) if shape else 1
    if data.size != size:
        raise ShapeError(error("shape", f"{where}: {data.size} values for shape {shape}"))
    arr = data.reshape(shape)
    if levels is None:
        levels = (1,) * len(shape) if shape else (0,)
    return from_dense(arr, levels)


def dump_dense_json(rel: DenseRelation) -> dict:
    return {"shape": list(rel.shape), "data": [float(x) for x in rel.array.reshape(-1)]}


def load_csr_json(path):
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        n = int(obj["n"])
        P, I, V = obj["P"], obj["I"], obj["V"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(error("data", f"{path}: expected {{n, P, I, V}} ({exc})")) from None
    try:
        return csr_relations(n, P, I, V)
    except ValueError as exc:
        raise DataError(error("data", f"{path}: {exc}")) from None


def dump_csr_json(rel, nrows=None) -> dict:
    n, P, I, V = to_csr(rel, nrows)
    return {"n": int(n), "P": P.tolist(), "I": I.tolist(), "V": V.tolist()}


def _layout(spec, rel):
    kind = spec.get("layout")
    if kind is None:
        return rel
    if kind == "ordered":
        return build_layout(rel, ordered(*spec.get("order", [0])))
    if kind == "trie":
        return build_layout(rel, TRIE)
    if kind == "flat":
        return build_layout(rel, FLAT)
    if kind == "dense":
        return build_layout(rel, dense_layout(*spec["shape"]))
    raise DataError(error("data", f"unknown layout {kind!r}"))


def load_manifest(path) -> Database:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(error("data", f"cannot read manifest {path}: {exc}")) from None
    return load_manifest_obj(obj, path.parent)


def load_manifest_obj(obj: dict, base: Path) -> Database:
    db = Database()
    for name, value in (obj.get("params") or {}).items():
        db.params[name] = value
    for name, spec in obj.items():
        if name == "params":
            continue
        fmt = spec.get("format", "csv")
        levels = spec.get("levels") or spec.get("schema")
        semiring = S.get(spec["semiring"]) if "semiring" in spec else None
        if "inline" in spec:
            src = None
        else:
            src = base / spec["path"]
        try:
            if fmt == "csv":
                rel, attrs = load_csv(src, levels, semiring)
                attrs = tuple(spec.get("attributes", attrs))
                db.put(name, _layout(spec, rel), attrs)
            elif fmt == "dense-json":
                obj2 = spec["inline"] if src is None else json.loads(src.read_text(encoding="utf-8"))
                db.put(name, dense_from_obj(obj2, levels, name))
            elif fmt == "csr-json":
                rels, params = load_csr_json(src)
                names = spec.get("names", {})
                for k, r in rels.items():
                    db.put(names.get(k, k), r)
                for k, v in params.items():
                    db.params[names.get(k, k)] = v
            else:
                raise DataError(error("data", f"{name}: unknown format {fmt!r}"))
        except OSError as exc:
            raise DataError(error("data", f"{name}: {exc}")) from None
    return db


def relation_to_json(rel) -> dict:
    items = list(rel.items()) if rel.layout.kind == "ordered" else rel.sorted_items()
    return {
        "levels": list(rel.levels),
        "semiring": rel.semiring.name,
        "layout": str(rel.layout),
        "entries": [[list(k), _json_val(v)] for k, v in items],
    }


def _json_val(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def dump_database(db: Database, names=None) -> dict:
    """Deterministic JSON view: relations sorted by name, entries in layout order."""
    names = sorted(db.relations) if names is None else sorted(names)
    return {name: relation_to_json(db.relations[name]) for name in names}
