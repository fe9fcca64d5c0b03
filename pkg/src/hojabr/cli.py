"""The ``hojabr`` command-line driver.

Exit status: 0 on success, 1 when diagnostics with severity error were
reported, 2 on usage errors (bad flags, unreadable files).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import ast as A
from .check import check_program
from .errors import Diagnostic, HojabrError
from .evaluator import EvalConfig, run_program
from .relation import Database
from .storage import dump_csv, load_manifest, relation_to_json
from .syntax import parse, print_program

EXIT_OK, EXIT_DIAGNOSTICS, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


def _program(path: str) -> A.Program:
    return parse(_read(path))


def _database(args) -> Database:
    if getattr(args, "manifest", None):
        if not Path(args.manifest).exists():
            raise UsageError(f"cannot read {args.manifest}: no such file")
        return load_manifest(args.manifest)
    return Database()


def _report(diags: list[Diagnostic], args) -> None:
    for d in diags:
        print(d, file=sys.stderr)
        if getattr(args, "json", False):
            print(d.to_json(), file=sys.stderr)


def ast_to_json(node):
    """Plain JSON view of an AST: each node is an object tagged with its class."""
    if dataclasses.is_dataclass(node):
        out = {"node": type(node).__name__}
        for f in dataclasses.fields(node):
            if f.name in ("line", "column"):
                continue
            out[f.name] = ast_to_json(getattr(node, f.name))
        return out
    if isinstance(node, (tuple, list)):
        return [ast_to_json(x) for x in node]
    return node


# ---------------------------------------------------------------- subcommands


def cmd_parse(args) -> int:
    prog = _program(args.program)
    if args.json:
        print(json.dumps(ast_to_json(prog), indent=2, sort_keys=True))
    else:
        for st in prog.statements:
            print(st)
    return EXIT_OK


def cmd_fmt(args) -> int:
    text = _read(args.program)
    out = print_program(parse(text))
    if args.check:
        if out != text:
            print(f"{args.program}: not formatted", file=sys.stderr)
            return EXIT_DIAGNOSTICS
        return EXIT_OK
    sys.stdout.write(out)
    return EXIT_OK


def cmd_check(args) -> int:
    prog = _program(args.program)
    db = _database(args) if args.manifest else None
    res = check_program(prog, db, strict=args.strict)
    _report(res.diagnostics, args)
    n_err, n_warn = len(res.errors), len(res.warnings)
    print(f"{len(res.program.rules)} rules, {len(res.strata.strata) if res.strata else 0} strata: "
          f"{n_err} errors, {n_warn} warnings")
    return EXIT_DIAGNOSTICS if n_err else EXIT_OK


def cmd_run(args) -> int:
    prog = _program(args.program)
    db = _database(args)
    cfg = EvalConfig.from_env(mode=args.mode, strict=args.strict)
    out, report = run_program(prog, db, cfg)
    _report(report.warnings, args)
    names = args.relation or sorted({r.head.rel for r in prog.rules})
    missing = [n for n in names if n not in out]
    if missing:
        raise UsageError(f"no relation named {', '.join(missing)}")
    if args.out:
        target = Path(args.out)
        target.mkdir(parents=True, exist_ok=True)
    for name in sorted(names):
        rel = out[name]
        if args.format == "csv":
            text = dump_csv(rel, attributes=out.attributes.get(name))
            if args.out:
                (target / f"{name}.csv").write_text(text, encoding="utf-8")
            else:
                sys.stdout.write(f"# {name}\n{text}")
    if args.format == "json":
        blob = json.dumps({n: relation_to_json(out[n]) for n in sorted(names)}, indent=2, sort_keys=True) + "\n"
        if args.out:
            (target / "result.json").write_text(blob, encoding="utf-8")
        else:
            sys.stdout.write(blob)
    if args.report:
        Path(args.report).write_text(
            json.dumps(report.to_json(timing=args.timing), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return EXIT_OK


def cmd_lower(args) -> int:
    from .slangs import lower_join, lower_tensor, validate

    prog = _program(args.program)
    if bool(args.strategy) == bool(args.format):
        raise UsageError("lower needs exactly one of --strategy or --format")
    if args.strategy:
        out = lower_join(prog, args.strategy, prefix=args.prefix)
        target = "physical-join"
    else:
        ops = args.operands.split(",") if args.operands else None
        out = lower_tensor(prog, args.format, operands=ops, prefix=args.prefix)
        target = "dense-tensor" if args.format == "dense" else "sparse-tensor"
    res = validate(out, target)
    for v in res.violations:
        print(f"warning: output outside {target}: {v}", file=sys.stderr)
    sys.stdout.write(print_program(out))
    return EXIT_OK


def cmd_lift(args) -> int:
    from .slangs import lift

    sys.stdout.write(print_program(lift(_program(args.program))))
    return EXIT_OK


def _schema(args) -> dict[str, list[str]]:
    schema: dict[str, list[str]] = {}
    if args.manifest:
        schema.update({k: list(v) for k, v in _database(args).attributes.items()})
    if args.schema:
        text = args.schema
        if Path(text).is_file():
            schema.update({k: list(v) for k, v in json.loads(_read(text)).items()})
        else:
            for part in text.split(";"):
                if not part.strip():
                    continue
                name, _, cols = part.partition(":")
                schema[name.strip()] = [c.strip() for c in cols.split(",") if c.strip()]
    return schema


def cmd_sql(args) -> int:
    from .frontends.sql import hojabr_to_sql, print_sql, sql_to_hojabr

    schema = _schema(args)
    if args.to_hojabr:
        queries = [q for q in _read(args.to_hojabr).split(";") if q.strip()]
        rules = []
        for k, q in enumerate(queries):
            name = "Q" if len(queries) == 1 else f"Q{k + 1}"
            rules.extend(sql_to_hojabr(q, schema, name).statements)
        sys.stdout.write(print_program(A.Program(tuple(rules))))
    else:
        prog = _program(args.from_hojabr)
        for rule in prog.rules:
            print(print_sql(hojabr_to_sql(A.Program((rule,)), schema)) + ";")
    return EXIT_OK


def cmd_einsum(args) -> int:
    from .frontends.einsum import einsum_to_hojabr, hojabr_to_einsum, parse_ein_file, print_einsum

    if args.to_hojabr:
        rules = []
        for e in parse_ein_file(_read(args.to_hojabr)):
            rules.extend(einsum_to_hojabr(e).statements)
        sys.stdout.write(print_program(A.Program(tuple(rules))))
    else:
        for rule in _program(args.from_hojabr).rules:
            print(print_einsum(hojabr_to_einsum(A.Program((rule,)))))
    return EXIT_OK


def cmd_slangs(args) -> int:
    from .slangs import CATALOG, get, validate

    if args.validate:
        if not args.name:
            raise UsageError("--validate needs a slang name")
        try:
            get(args.name)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
        res = validate(_program(args.validate), args.name)
        for v in res.violations:
            print(v)
        print(f"{args.validate}: {'in' if res.ok else 'outside'} {res.slang}")
        return EXIT_OK if res.ok else EXIT_DIAGNOSTICS
    if args.name:
        try:
            print(get(args.name).describe())
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
        return EXIT_OK
    for spec in CATALOG.values():
        print(f"{spec.name:20} {spec.summary}")
    return EXIT_OK


# ---------------------------------------------------------------- argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="also write diagnostics to stderr as JSON lines")

    p = argparse.ArgumentParser(prog="hojabr", description="Hojabr IR toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("parse", parents=[common], help="parse a program and print its AST")
    s.add_argument("program")
    s.set_defaults(fn=cmd_parse)

    s = sub.add_parser("fmt", parents=[common], help="pretty-print a program")
    s.add_argument("program")
    s.add_argument("--check", action="store_true", help="exit 1 if the file is not already formatted")
    s.set_defaults(fn=cmd_fmt)

    s = sub.add_parser("check", parents=[common], help="static checks, plus integrity against data")
    s.add_argument("program")
    s.add_argument("--manifest", help="data manifest (JSON)")
    s.add_argument("--strict", action="store_true")
    s.set_defaults(fn=cmd_check)

    s = sub.add_parser("run", parents=[common], help="evaluate a program over data")
    s.add_argument("program")
    s.add_argument("--manifest", help="data manifest (JSON)")
    s.add_argument("--mode", choices=("naive", "semi-naive"), default="semi-naive")
    s.add_argument("--strict", action="store_true")
    s.add_argument("--format", choices=("json", "csv"), default="json")
    s.add_argument("--relation", action="append", help="relation to dump (repeatable; default: all rule heads)")
    s.add_argument("--out", help="directory to write results into instead of stdout")
    s.add_argument("--report", help="write the run report JSON here")
    s.add_argument("--timing", action="store_true", help="include wall time in the report")
    s.set_defaults(fn=cmd_run)

    s = sub.add_parser("lower", parents=[common], help="lower a program into a physical slang")
    s.add_argument("program")
    s.add_argument("--strategy", choices=("nlj", "hash", "sort-merge", "generic", "free", "diamond"))
    s.add_argument("--format", choices=("dense", "coo", "csr"))
    s.add_argument("--operands", help="comma-separated tensors to convert (default: all eligible)")
    s.add_argument("--prefix", default="", help="prefix for fresh relation names")
    s.set_defaults(fn=cmd_lower)

    s = sub.add_parser("lift", parents=[common], help="lift a physical join program to logical rules")
    s.add_argument("program")
    s.set_defaults(fn=cmd_lift)

    for name, fn, ext in (("sql", cmd_sql, ".sql"), ("einsum", cmd_einsum, ".ein")):
        s = sub.add_parser(name, parents=[common], help=f"translate {name} to or from Hojabr")
        g = s.add_mutually_exclusive_group(required=True)
        g.add_argument("--to-hojabr", metavar=f"FILE{ext}")
        g.add_argument("--from-hojabr", metavar="FILE.hjb")
        if name == "sql":
            s.add_argument("--schema", help="JSON file or inline 'R:a,b;S:b,c'")
            s.add_argument("--manifest", help="take table columns from a data manifest")
        s.set_defaults(fn=fn)

    s = sub.add_parser("slangs", parents=[common], help="list slangs, describe one, or validate a program")
    s.add_argument("name", nargs="?")
    s.add_argument("--validate", metavar="FILE.hjb")
    s.set_defaults(fn=cmd_slangs)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"hojabr: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HojabrError as exc:
        _report(exc.diagnostics, args)
        return EXIT_DIAGNOSTICS


if __name__ == "__main__":
    sys.exit(main())
